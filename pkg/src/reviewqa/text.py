"""Rule-based text handling: sentence splitting, tokenization, question typing."""

import re

from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

ABBREVIATIONS = frozenset({"mr", "mrs", "dr", "vs", "etc", "e.g", "i.e"})

AUXILIARY_VERBS = frozenset({
    "is", "are", "was", "were", "am", "do", "does", "did", "can", "could",
    "will", "would", "should", "has", "have", "had", "may", "might", "must",
})

LEADING_FILLERS = frozenset({"so", "ok", "hi", "please"})

_TOKEN_RE = re.compile(r"[^\W_]+")
_TERMINAL_RE = re.compile(r"[.?!]+[\"')\]]*")
_LAST_WORD_RE = re.compile(r"(\S+)$")


def tokenize(text, drop_stopwords=False):
    """Lowercase alphanumeric runs, in order.

    >>> tokenize("D3300-compatible")
    ['d3300', 'compatible']
    """
    tokens = _TOKEN_RE.findall(text.lower())
    if drop_stopwords:
        tokens = [t for t in tokens if t not in ENGLISH_STOP_WORDS]
    return tokens


def _is_boundary(text, start, end):
    rest = text[end:]
    if rest.strip() == "":
        return True
    if not rest[0].isspace():
        return False
    following = rest.lstrip()
    if not following[0].isupper():
        return False
    if text[start] == ".":
        m = _LAST_WORD_RE.search(text[:start])
        if m is not None:
            word = m.group(1).lstrip("\"'([").lower()
            if word in ABBREVIATIONS:
                return False
    return True


def split_sentences(text):
    """Split review text into sentences.

    A boundary is a run of ``.?!`` followed by whitespace and an uppercase
    letter, or by the end of the text. Decimal points never qualify (no
    whitespace follows them) and a period closing a known abbreviation is
    skipped.
    """
    sentences = []
    begin = 0
    for m in _TERMINAL_RE.finditer(text):
        if _is_boundary(text, m.start(), m.end()):
            chunk = text[begin:m.end()].strip()
            if chunk:
                sentences.append(chunk)
            begin = m.end()
    tail = text[begin:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def _ends_as_question(text):
    stripped = text.rstrip()
    if not stripped:
        return False
    # unpunctuated questions are common in Q/A logs; a closing . or ! is not
    return stripped[-1] not in ".!"


def is_binary_question(text):
    """True for yes/no questions: leading auxiliary verb after fillers."""
    tokens = tokenize(text)
    i = 0
    while i < len(tokens) and tokens[i] in LEADING_FILLERS:
        i += 1
    if i == len(tokens):
        return False
    return tokens[i] in AUXILIARY_VERBS and _ends_as_question(text)
