"""Question/sentence similarity: Okapi BM25 and Rouge-L."""

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

K1 = 1.5
B = 0.75


@dataclass(frozen=True)
class CorpusStats:
    """Document statistics over expert sentences (one sentence = one document)."""

    total_sentences: int
    avg_sentence_length: float
    doc_freq: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.total_sentences < 1:
            raise ValueError("CorpusStats needs at least one sentence")
        if not self.avg_sentence_length > 0:
            raise ValueError("average sentence length must be positive")

    @classmethod
    def from_token_lists(cls, token_lists):
        df = Counter()
        n = 0
        total_len = 0
        for tokens in token_lists:
            n += 1
            total_len += len(tokens)
            df.update(set(tokens))
        if n == 0:
            raise ValueError("CorpusStats needs at least one sentence")
        # empty sentences would give avgrl = 0; guard so the BM25 length term stays finite
        avg = total_len / n if total_len > 0 else 1.0
        return cls(n, avg, dict(sorted(df.items())))

    def to_dict(self):
        return {
            "total_sentences": self.total_sentences,
            "avg_sentence_length": self.avg_sentence_length,
            "doc_freq": self.doc_freq,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["total_sentences"]), float(d["avg_sentence_length"]),
                   dict(d["doc_freq"]))


@dataclass(frozen=True)
class SimilarityVector:
    bm25: float
    rouge_l: float

    def as_array(self):
        return np.array([self.bm25, self.rouge_l])


def idf(token, stats):
    n = stats.doc_freq.get(token, 0)
    N = stats.total_sentences
    return max(0.0, math.log((N - n + 0.5) / (n + 0.5)))


def bm25(question_tokens, sentence_tokens, stats, k1=K1, b=B):
    if not question_tokens or not sentence_tokens:
        return 0.0
    tf = Counter(sentence_tokens)
    length_norm = k1 * (1.0 - b + b * len(sentence_tokens) / stats.avg_sentence_length)
    score = 0.0
    for tok in dict.fromkeys(question_tokens):
        f = tf.get(tok, 0)
        if f == 0:
            continue
        score += idf(tok, stats) * f * (k1 + 1.0) / (f + length_norm)
    return score


def lcs_length(a, b):
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            if x == y:
                cur.append(prev[j] + 1)
            else:
                cur.append(cur[j] if cur[j] > prev[j + 1] else prev[j + 1])
        prev = cur
    return prev[-1]


def rouge_l(question_tokens, sentence_tokens):
    """LCS F-measure with beta = P/R; 0 when nothing is shared."""
    lcs = lcs_length(question_tokens, sentence_tokens)
    if lcs == 0:
        return 0.0
    recall = lcs / len(question_tokens)
    precision = lcs / len(sentence_tokens)
    # with beta = P/R the F-measure simplifies to PR(P^2+R^2)/(P^3+R^3);
    # evaluating on the ordered pair keeps it bitwise symmetric
    lo, hi = sorted((precision, recall))
    return lo * hi * (lo * lo + hi * hi) / (lo ** 3 + hi ** 3)


def similarity_vector(question_tokens, sentence_tokens, stats):
    return SimilarityVector(bm25(question_tokens, sentence_tokens, stats),
                            rouge_l(question_tokens, sentence_tokens))
