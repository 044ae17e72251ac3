"""Planted-truth synthetic corpora.

Each binary question gets its own product whose review sentences are drawn
from a Zipf(1.1) unigram distribution. A handful of sentences share the
question's topic tokens and carry a sentiment token whose polarity follows a
per-product latent rate; the rest are filler. The true yes-probability p_q
is the mixture output of a planted text-only model, the hidden answer is
y_q ~ Bernoulli(p_q), and observed labels copy y_q. On "noisy" questions
(marked by a cue token in the question text) each label is instead faithful
with probability alpha (y_q = 1) or beta (y_q = 0).
"""

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import attach_answers, build_corpus
from .labeling import LabeledAnswer, apply_labels
from .moe import ModelParams
from .train.design import BinaryForward, ParamLayout, build_pair_design

CATEGORY = "Synthetic"


@dataclass(frozen=True)
class SynthSpec:
    n_questions: int = 2000
    sentences_per_question: int = 30
    vocab_size: int = 500
    labels_per_question: dict = field(default_factory=lambda: {3: 1.0})
    planted_alpha: float = 0.85
    planted_beta: float = 0.90
    target_ambiguity_rate: object = 0.14
    rng_seed: int = 0
    n_open_questions: int = 0
    relevant_per_question: int = 6
    n_topics: int = 3
    n_sentiment_tokens: int = 20
    n_cue_tokens: int = 10
    n_reviewers: int = 400
    sentences_per_review: int = 3
    sentiment_weight: float = 12.0
    bm25_weight: float = 1.0
    rouge_weight: float = 2.0
    polarity_concentration: float = 0.4

    def __post_init__(self):
        if not (0.5 < self.planted_alpha <= 1 and 0.5 < self.planted_beta <= 1):
            raise ValueError("planted alpha and beta must lie in (0.5, 1]")
        rate = self.target_ambiguity_rate
        if rate is not None and not 0.0 <= rate <= 1.0:
            raise ValueError("target_ambiguity_rate must lie in [0, 1]")
        if self.n_questions < 1 or self.sentences_per_question < 1:
            raise ValueError("need at least one question and one sentence per question")
        reserved = 2 * self.n_sentiment_tokens + self.n_cue_tokens + 10
        if self.vocab_size < reserved:
            raise ValueError(f"vocab_size must be >= {reserved}")
        counts = [int(k) for k in self.labels_per_question]
        if not counts or min(counts) < 1 or max(counts) > 5:
            raise ValueError("labels_per_question must be a distribution over 1..5")


@dataclass(frozen=True)
class GroundTruth:
    question_id: str
    y_true: int
    p_true: float
    noisy: bool = False

    def to_dict(self):
        return {"question_id": self.question_id, "y_true": self.y_true, "p_true": self.p_true}


@dataclass
class SynthData:
    corpus: object
    truth: dict
    records: dict
    labels: list
    planted: ModelParams
    noisy_fraction: float


def ambiguity_probability(n_labels, fidelity):
    """P(labels disagree) for n independent labels each faithful w.p. ``fidelity``.

    Computed by enumerating all label outcomes.
    """
    total = 0.0
    for outcome in itertools.product((0, 1), repeat=n_labels):
        prob = np.prod([fidelity if o else 1.0 - fidelity for o in outcome])
        if 0 < sum(outcome) < n_labels:
            total += prob
    return float(total)


def analytic_ambiguity_rate(p_true, label_counts, alpha, beta):
    """Expected share of ambiguous questions when every question is noisy."""
    rates = [p * ambiguity_probability(n, alpha) + (1 - p) * ambiguity_probability(n, beta)
             for p, n in zip(p_true, label_counts)]
    return float(np.mean(rates))


class _Vocab:
    """Token roles over the synthetic vocabulary."""

    def __init__(self, spec, rng):
        self.tokens = [f"w{i:04d}" for i in range(spec.vocab_size)]
        ranks = np.arange(1, spec.vocab_size + 1, dtype=float)
        perm = rng.permutation(spec.vocab_size)
        n_s, n_c = spec.n_sentiment_tokens, spec.n_cue_tokens
        self.positive = perm[:n_s]
        self.negative = perm[n_s:2 * n_s]
        self.cues = perm[2 * n_s:2 * n_s + n_c]
        self.plain = np.sort(perm[2 * n_s:])  # cue tokens double as filler
        self.topic = np.sort(perm[2 * n_s + n_c:])
        zipf = ranks ** -1.1
        self.filler_p = zipf[self.plain] / zipf[self.plain].sum()
        self.topic_p = zipf[self.topic] / zipf[self.topic].sum()

    def filler(self, rng, n):
        return [self.tokens[i] for i in rng.choice(self.plain, size=n, p=self.filler_p)]

    def topics(self, rng, n):
        return [self.tokens[i] for i in rng.choice(self.topic, size=n, replace=False,
                                                   p=self.topic_p)]

    def sentiment(self, rng, positive):
        pool = self.positive if positive else self.negative
        return self.tokens[int(rng.choice(pool))]


def _sentence(words):
    return " ".join([words[0].capitalize()] + words[1:]) + "."


def _draw_label_count(spec, rng):
    counts = sorted(spec.labels_per_question)
    probs = np.array([spec.labels_per_question[k] for k in counts], dtype=float)
    return int(counts[rng.choice(len(counts), p=probs / probs.sum())])


def _product_reviews(spec, vocab, rng, pid, topics, polarity, review_offset):
    """Sentences for one product grouped into reviews."""
    n = spec.sentences_per_question
    relevant = set(rng.choice(n, size=min(spec.relevant_per_question, n),
                              replace=False).tolist())
    sentences, signs = [], []
    for k in range(n):
        words = vocab.filler(rng, int(rng.integers(4, 9)))
        sign = 0
        if k in relevant:
            chosen = rng.choice(topics, size=int(rng.integers(1, len(topics) + 1)),
                                replace=False)
            sign = 1 if rng.random() < polarity else -1
            words += list(chosen) + [vocab.sentiment(rng, sign > 0)]
        else:
            words += vocab.topics(rng, 1)
            if rng.random() < 0.5:
                sign = 1 if rng.random() < 0.5 else -1
                words.append(vocab.sentiment(rng, sign > 0))
        rng.shuffle(words)
        sentences.append(_sentence(words))
        signs.append(sign)
    reviews = []
    per = spec.sentences_per_review
    for r, start in enumerate(range(0, n, per)):
        mood = np.mean(signs[start:start + per])
        rating = int(np.clip(np.rint(3 + 2 * mood + rng.normal(0, 0.7)), 1, 5))
        total = int(rng.integers(0, 12))
        reviewer = int(rng.zipf(1.6)) % spec.n_reviewers
        reviews.append({
            "review_id": f"r{review_offset + r:07d}", "product_id": pid,
            "reviewer_id": f"u{reviewer:05d}", "text": " ".join(sentences[start:start + per]),
            "rating": rating, "helpful_yes": int(rng.integers(0, total + 1)),
            "helpful_total": total,
        })
    return reviews


def planted_params(spec, vocab, vocabulary):
    """Text-only planted model in the corpus's vocabulary index space."""
    dim = vocabulary.size
    xi = np.zeros(dim)
    for idx, sign in ((vocab.positive, 1.0), (vocab.negative, -1.0)):
        for i in idx:
            j = vocabulary.token_to_index.get(vocab.tokens[i])
            if j is not None:
                xi[j] = sign * spec.sentiment_weight
    params = ModelParams.zeros(dim, "moe")
    return ModelParams(kappa=np.array([spec.bm25_weight, spec.rouge_weight]),
                       eta=params.eta, mu=params.mu, xi=xi, gamma1=params.gamma1,
                       gamma2=params.gamma2, g=params.g, variant="moe")


def true_probabilities(corpus, questions, params):
    design = build_pair_design(corpus, questions)
    layout = ParamLayout("moe", design.dim, design.reviewers)
    fw = BinaryForward(design, layout, layout.pack(params))
    return fw.p


def generate(spec):
    """Sample a corpus and its hidden truth; see :class:`SynthData`."""
    rng = np.random.default_rng(spec.rng_seed)
    vocab = _Vocab(spec, rng)
    products, reviews, questions = [], [], []
    open_topics = {}
    n_total = spec.n_questions + spec.n_open_questions
    for k in range(n_total):
        pid, qid = f"p{k:06d}", f"q{k:06d}"
        is_open = k >= spec.n_questions
        topics = vocab.topics(rng, spec.n_topics)
        polarity = rng.beta(spec.polarity_concentration, spec.polarity_concentration)
        products.append({"product_id": pid, "category": CATEGORY})
        reviews.extend(_product_reviews(spec, vocab, rng, pid, topics, polarity, len(reviews)))
        lead = "What" if is_open else "Does"
        words = topics + vocab.filler(rng, 2)
        questions.append({"question_id": qid, "product_id": pid,
                          "text": f"{lead} " + " ".join(words) + "?"})
        if is_open:
            open_topics[qid] = topics

    noisy_marks = rng.random(spec.n_questions)
    label_counts = [_draw_label_count(spec, rng) for _ in range(spec.n_questions)]
    binary_ids = [f"q{k:06d}" for k in range(spec.n_questions)]
    max_vocab = max(spec.vocab_size, 5000)

    # first pass, without cue tokens, only sizes the noisy share
    corpus = build_corpus(products, reviews, questions, max_vocab=max_vocab)
    planted = planted_params(spec, vocab, corpus.vocabulary)
    if spec.target_ambiguity_rate is None:
        noisy_fraction = 1.0
    else:
        p_guess = true_probabilities(corpus, [corpus.questions[q] for q in binary_ids], planted)
        full = analytic_ambiguity_rate(p_guess, label_counts, spec.planted_alpha,
                                       spec.planted_beta)
        noisy_fraction = min(1.0, spec.target_ambiguity_rate / full) if full > 0 else 0.0
    noisy = noisy_marks < noisy_fraction
    for k in np.flatnonzero(noisy):
        cue = vocab.tokens[int(rng.choice(vocab.cues))]
        questions[k]["text"] = questions[k]["text"][:-1] + f" {cue}?"

    corpus = build_corpus(products, reviews, questions, max_vocab=max_vocab)
    binary_qs = [corpus.questions[q] for q in binary_ids]
    p_true = true_probabilities(corpus, binary_qs, planted)
    y_true = (rng.random(spec.n_questions) < p_true).astype(int)

    answers, labels, truth = [], [], {}
    for k, q in enumerate(binary_qs):
        truth[q.question_id] = GroundTruth(q.question_id, int(y_true[k]), float(p_true[k]),
                                           bool(noisy[k]))
        faithful = spec.planted_alpha if y_true[k] else spec.planted_beta
        for j in range(label_counts[k]):
            keep = (not noisy[k]) or rng.random() < faithful
            label = int(y_true[k]) if keep else 1 - int(y_true[k])
            aid = f"{q.question_id}a{j}"
            words = vocab.filler(rng, int(rng.integers(3, 7)))
            answers.append({"answer_id": aid, "question_id": q.question_id,
                            "text": ("Yes, " if label else "No, ") + " ".join(words) + ".",
                            "top_voted": j == 0})
            labels.append(LabeledAnswer(aid, label, 1.0))
    for qid, topics in open_topics.items():
        pid = corpus.questions[qid].product_id
        experts = corpus.sentences[pid]
        n_ans = int(rng.integers(1, 5))
        for j in range(n_ans):
            support = [s for s in experts if set(topics) & set(s.tokens)]
            src = support[int(rng.integers(len(support)))] if support else experts[0]
            words = list(rng.choice(list(src.tokens), size=min(4, len(src.tokens)),
                                    replace=False)) + vocab.filler(rng, 2)
            answers.append({"answer_id": f"{qid}a{j}", "question_id": qid,
                            "text": " ".join(words).capitalize() + ".", "top_voted": j == 0})

    corpus = attach_answers(corpus, answers)
    corpus = apply_labels(corpus, labels)
    records = {"products": products, "reviews": reviews, "questions": questions,
               "answers": answers}
    return SynthData(corpus, truth, records, labels, planted, float(noisy_fraction))


def _write_jsonl(path, rows):
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def write_synth(data, outdir, n_seeds=200):
    """Write the corpus JSONL files plus labels, seeds and ground truth."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for kind in ("products", "reviews", "questions", "answers"):
        _write_jsonl(outdir / f"{kind}.jsonl", data.records[kind])
    _write_jsonl(outdir / "labels.jsonl", [la.to_dict() for la in data.labels])
    texts = {a["answer_id"]: a["text"] for a in data.records["answers"]}
    seeds = [{"answer_text": texts[la.answer_id], "label": la.label}
             for la in data.labels[:n_seeds]]
    _write_jsonl(outdir / "seeds.jsonl", seeds)
    _write_jsonl(outdir / "ground_truth.jsonl",
                 [t.to_dict() for _, t in sorted(data.truth.items())])
    return outdir
