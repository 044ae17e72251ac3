"""Batch layout of (question, sentence) pairs for vectorized scoring.

Pairs are stored question-major: the experts of question ``k`` occupy rows
``starts[k]:starts[k+1]``, so per-question softmax and mixture sums are
segment reductions.
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, log_expit

from ..corpus import stack_features
from ..errors import DataError
from ..similarity import bm25, rouge_l

BLOCK_ORDER = ("kappa", "eta", "mu", "xi", "g", "c", "expertise", "bias", "gamma1", "gamma2")

_VARIANT_BLOCKS = {
    "moe": ("kappa", "eta", "mu", "xi"),
    "kl-moe": ("kappa", "eta", "mu", "xi"),
    "em-moe": ("kappa", "eta", "mu", "xi", "gamma1", "gamma2"),
    "em-moe-s": ("kappa", "eta", "mu", "xi", "g", "c", "expertise", "bias",
                 "gamma1", "gamma2"),
    "s-moe": ("kappa", "eta", "mu"),
    "m-moe": ("kappa", "eta", "mu"),
    "m-moe-s": ("kappa", "eta", "mu", "g", "c", "expertise", "bias"),
}


def active_blocks(variant, frozen=()):
    unknown = set(frozen) - set(BLOCK_ORDER)
    if unknown:
        raise ValueError(f"unknown parameter blocks: {sorted(unknown)}")
    return tuple(b for b in _VARIANT_BLOCKS[variant] if b not in frozen)


class ParamLayout:
    """Maps the trainable parameter blocks of a variant onto one flat vector.

    Frozen blocks still take part in scoring; their values come from
    ``fixed`` (a :class:`ModelParams`) and receive no gradient.
    """

    def __init__(self, variant, dim, reviewers, frozen=(), fixed=None):
        self.variant = variant
        self.dim = dim
        self.reviewers = list(reviewers)
        self.used = _VARIANT_BLOCKS[variant]
        self.blocks = active_blocks(variant, frozen)
        sizes = {"kappa": 2, "eta": dim, "mu": dim, "xi": dim, "g": 2, "c": 1,
                 "expertise": len(self.reviewers), "bias": len(self.reviewers),
                 "gamma1": dim + 1, "gamma2": dim + 1}
        self.slices = {}
        offset = 0
        for name in self.blocks:
            self.slices[name] = slice(offset, offset + sizes[name])
            offset += sizes[name]
        self.size = offset
        self.fixed = {}
        for name in self.used:
            if name not in self.slices:
                if fixed is None:
                    raise ValueError("frozen blocks need fixed parameter values")
                self.fixed[name] = np.asarray(self._get(fixed, name), dtype=float)

    def __contains__(self, block):
        """True if the block takes part in scoring (trainable or frozen)."""
        return block in self.used

    def trainable(self, block):
        return block in self.slices

    def pack(self, params):
        theta = np.zeros(self.size)
        for name, sl in self.slices.items():
            theta[sl] = self._get(params, name)
        return theta

    def _get(self, params, name):
        if name == "c":
            return [params.c]
        if name == "expertise":
            return [params.expertise_of(u) for u in self.reviewers]
        if name == "bias":
            return [params.bias_of(u) for u in self.reviewers]
        return getattr(params, name)

    def unpack(self, theta, template):
        """Return ``template`` with trainable blocks overwritten from ``theta``."""
        updates = {}
        for name, sl in self.slices.items():
            block = np.array(theta[sl], dtype=float)
            if name == "c":
                updates["c"] = float(block[0])
            elif name in ("expertise", "bias"):
                merged = dict(getattr(template, name))
                merged.update(zip(self.reviewers, block.tolist()))
                updates[name] = merged
            else:
                updates[name] = block
        return replace(template, **updates)

    def block(self, theta, name):
        if name in self.slices:
            return theta[self.slices[name]]
        return self.fixed[name]

    def add_grad(self, grad, name, value):
        """Accumulate ``value`` into the gradient of a trainable block."""
        if name in self.slices:
            grad[self.slices[name]] += value


@dataclass(eq=False)
class PairDesign:
    """Expert rows for a list of questions."""

    question_ids: list
    starts: np.ndarray
    seg: np.ndarray
    sim: np.ndarray
    qr: sp.csr_matrix
    fr: sp.csr_matrix
    helpful: np.ndarray
    rating: np.ndarray
    user: np.ndarray
    reviewers: list
    fq: sp.csr_matrix
    n_pos: np.ndarray
    n_neg: np.ndarray
    dim: int

    @property
    def n_questions(self):
        return len(self.question_ids)

    @property
    def n_pairs(self):
        return len(self.seg)


def build_pair_design(corpus, questions, reviewers=None):
    """Precompute similarities and feature products for every (q, r) pair.

    ``reviewers`` fixes the reviewer index space; by default it is the
    sorted set of reviewers appearing in the design.
    """
    dim = corpus.vocabulary.size
    qids, starts, seg = [], [], []
    sims, fr_rows, helpful, rating, users = [], [], [], [], []
    fq_rows, n_pos, n_neg = [], [], []
    for q in questions:
        experts = corpus.experts(q)
        if not experts:
            raise DataError(f"no reviews for product {q.product_id!r} "
                            f"(question {q.question_id!r})")
        stats = corpus.stats_for(q.product_id)
        k = len(qids)
        qids.append(q.question_id)
        starts.append(len(seg))
        fq_rows.append(q.features)
        n_pos.append(q.n_pos)
        n_neg.append(q.n_neg)
        for s in experts:
            seg.append(k)
            sims.append((bm25(q.tokens, s.tokens, stats), rouge_l(q.tokens, s.tokens)))
            fr_rows.append(s.features)
            helpful.append(s.helpfulness)
            rating.append(s.centered_rating)
            users.append(s.reviewer_id)
    if reviewers is None:
        reviewers = sorted(set(users))
    index = {u: i for i, u in enumerate(reviewers)}
    # reviewers outside the index space score zero via the sentinel slot -1
    user_idx = np.array([index.get(u, -1) for u in users], dtype=np.int64)
    seg = np.asarray(seg, dtype=np.int64)
    fr = stack_features(fr_rows, dim)
    fq = stack_features(fq_rows, dim)
    qr = fr.multiply(fq[seg]).tocsr() if len(seg) else sp.csr_matrix((0, dim))
    qr.eliminate_zeros()
    return PairDesign(
        question_ids=qids, starts=np.asarray(starts, dtype=np.int64), seg=seg,
        sim=np.asarray(sims, dtype=float).reshape(-1, 2), qr=qr, fr=fr,
        helpful=np.asarray(helpful, dtype=float).reshape(-1, 2),
        rating=np.asarray(rating, dtype=float), user=user_idx, reviewers=list(reviewers),
        fq=fq, n_pos=np.asarray(n_pos, dtype=float), n_neg=np.asarray(n_neg, dtype=float),
        dim=dim)


@dataclass(eq=False)
class PreferenceDesign:
    """Answer/non-answer comparisons on top of a :class:`PairDesign`.

    Row ``j`` of ``diff`` is ``(f_a - f_abar) * f_r`` for comparison
    ``pair_seg[j]`` and expert row ``base_row[j]`` of the base design.
    """

    base: PairDesign
    pair_question: np.ndarray
    pair_weight: np.ndarray
    pair_starts: np.ndarray
    pair_seg: np.ndarray
    base_row: np.ndarray
    diff: sp.csr_matrix
    answer_ids: list
    non_answer_ids: list

    @property
    def n_comparisons(self):
        return len(self.pair_question)


def build_preference_design(corpus, comparisons, multi_answer=True, reviewers=None):
    """``comparisons`` maps question_id -> list of (answer, non_answer) records.

    With ``multi_answer`` every comparison of question q is weighted by
    1/|A_q|; otherwise all weights are one.
    """
    qids = [qid for qid, pairs in comparisons.items() if pairs]
    questions = [corpus.questions[qid] for qid in qids]
    base = build_pair_design(corpus, questions, reviewers)
    dim = base.dim
    pair_q, weight, ans, non = [], [], [], []
    for k, qid in enumerate(qids):
        pairs = comparisons[qid]
        n_answers = len({a.answer_id for a, _ in pairs})
        for a, na in pairs:
            pair_q.append(k)
            weight.append(1.0 / n_answers if multi_answer else 1.0)
            ans.append(a)
            non.append(na)
    pair_q = np.asarray(pair_q, dtype=np.int64)
    sizes = np.diff(np.append(base.starts, base.n_pairs))[pair_q]
    pair_starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    pair_seg = np.repeat(np.arange(len(pair_q)), sizes)
    base_row = np.concatenate([np.arange(base.starts[q], base.starts[q] + n)
                               for q, n in zip(pair_q, sizes)]).astype(np.int64)
    fa = stack_features([a.features for a in ans], dim)
    fna = stack_features([a.features for a in non], dim)
    fr = base.fr[base_row]
    diff = (fr.multiply(fa[pair_seg]) - fr.multiply(fna[pair_seg])).tocsr()
    diff.eliminate_zeros()
    return PreferenceDesign(base, pair_q, np.asarray(weight), pair_starts, pair_seg,
                            base_row, diff, [a.answer_id for a in ans],
                            [a.answer_id for a in non])


# --- batched forward passes ---------------------------------------------

def _user_values(theta_block, user):
    if theta_block is None or len(theta_block) == 0:
        return np.zeros(len(user))
    padded = np.append(theta_block, 0.0)
    return padded[user]


def segment_softmax(v, starts, seg):
    m = np.maximum.reduceat(v, starts)
    e = np.exp(v - m[seg])
    return e / np.add.reduceat(e, starts)[seg]


class Forward:
    """Shared relevance/prediction pieces for one parameter vector."""

    def __init__(self, design, layout, theta):
        self.design = design
        self.layout = layout
        self.theta = theta
        d = design
        blk = self._block
        v = d.sim @ blk("kappa") if "kappa" in layout else np.zeros(d.n_pairs)
        if "eta" in layout:
            v = v + d.qr @ blk("eta")
        if "g" in layout:
            v = v + d.helpful @ blk("g")
        if "expertise" in layout:
            v = v + _user_values(blk("expertise"), d.user)
        self.v = v
        self.pi = segment_softmax(v, d.starts, d.seg)
        amp = np.ones(d.n_pairs)
        if "c" in layout:
            amp = amp + blk("c")[0] * d.rating
        if "bias" in layout:
            amp = amp + _user_values(blk("bias"), d.user)
        self.amp = amp

    def _block(self, name):
        return self.layout.block(self.theta, name)

    def relevance_grad(self, dv, grad):
        d, lay = self.design, self.layout
        if "kappa" in lay:
            lay.add_grad(grad, "kappa", d.sim.T @ dv)
        if "eta" in lay:
            lay.add_grad(grad, "eta", d.qr.T @ dv)
        if "g" in lay:
            lay.add_grad(grad, "g", d.helpful.T @ dv)
        if "expertise" in lay:
            lay.add_grad(grad, "expertise", _user_sum(d.user, dv, len(lay.reviewers)))

    def amplifier_grad(self, dw_base, rating, user, grad):
        """dw_base = dObjective/dw * base score, per expert row."""
        lay = self.layout
        if "c" in lay:
            lay.add_grad(grad, "c", np.dot(dw_base, rating))
        if "bias" in lay:
            lay.add_grad(grad, "bias", _user_sum(user, dw_base, len(lay.reviewers)))


def _user_sum(user, values, n_users):
    mask = user >= 0
    return np.bincount(user[mask], weights=values[mask], minlength=n_users)


class BinaryForward(Forward):
    """Mixture probabilities p_q (and 1 - p_q, computed separately)."""

    def __init__(self, design, layout, theta):
        super().__init__(design, layout, theta)
        d = design
        base = d.qr @ self._block("mu") if "mu" in layout else np.zeros(d.n_pairs)
        if "xi" in layout:
            base = base + d.fr @ self._block("xi")
        self.base = base
        self.w = base * self.amp
        self.sig = expit(self.w)
        self.sig_neg = expit(-self.w)
        self.p = np.add.reduceat(self.pi * self.sig, d.starts)
        self.q = np.add.reduceat(self.pi * self.sig_neg, d.starts)

    def backward(self, g_p, g_q):
        """Gradient of sum_q (g_p * p_q + g_q * (1 - p_q)) treating g as constants."""
        d, lay, seg = self.design, self.layout, self.design.seg
        grad = np.zeros(lay.size)
        dv = self.pi * (g_p[seg] * (self.sig - self.p[seg])
                        + g_q[seg] * (self.sig_neg - self.q[seg]))
        self.relevance_grad(dv, grad)
        dw = self.pi * self.sig * self.sig_neg * (g_p - g_q)[seg]
        dbase = dw * self.amp
        if "mu" in lay:
            lay.add_grad(grad, "mu", d.qr.T @ dbase)
        if "xi" in lay:
            lay.add_grad(grad, "xi", d.fr.T @ dbase)
        self.amplifier_grad(dw * self.base, d.rating, d.user, grad)
        return grad


class PreferenceForward(Forward):
    """Mixture probabilities p_{q, a > abar} for every comparison."""

    def __init__(self, pdesign, layout, theta):
        super().__init__(pdesign.base, layout, theta)
        self.pdesign = pdesign
        pd = pdesign
        self.base_score = pd.diff @ self._block("mu")
        amp = self.amp[pd.base_row]
        self.w = self.base_score * amp
        self.sig = expit(self.w)
        self.pi_rows = self.pi[pd.base_row]
        self.p = np.add.reduceat(self.pi_rows * self.sig, pd.pair_starts)

    def backward(self, g_p):
        pd, lay = self.pdesign, self.layout
        d = pd.base
        grad = np.zeros(lay.size)
        rows_g = g_p[pd.pair_seg]
        dv_rows = rows_g * self.pi_rows * (self.sig - self.p[pd.pair_seg])
        dv = np.bincount(pd.base_row, weights=dv_rows, minlength=d.n_pairs)
        self.relevance_grad(dv, grad)
        dw = rows_g * self.pi_rows * self.sig * (1.0 - self.sig)
        amp = self.amp[pd.base_row]
        lay.add_grad(grad, "mu", pd.diff.T @ (dw * amp))
        self.amplifier_grad(dw * self.base_score, d.rating[pd.base_row],
                            d.user[pd.base_row], grad)
        return grad


def label_fidelity(design, layout, theta):
    """Per-question (log a_q, log b_q, alpha_q, beta_q) from the gamma blocks."""
    z1 = design.fq @ layout.block(theta, "gamma1")[:-1] + layout.block(theta, "gamma1")[-1]
    z2 = design.fq @ layout.block(theta, "gamma2")[:-1] + layout.block(theta, "gamma2")[-1]
    log_a = design.n_pos * log_expit(z1) + design.n_neg * log_expit(-z1)
    log_b = design.n_pos * log_expit(-z2) + design.n_neg * log_expit(z2)
    return log_a, log_b, expit(z1), expit(z2)


def label_fidelity_grad(design, layout, alpha, beta, w_a, w_b, grad):
    """Add d/dgamma of sum_q (w_a log a_q + w_b log b_q) into ``grad``."""
    dz1 = w_a * (design.n_pos * (1.0 - alpha) - design.n_neg * alpha)
    dz2 = w_b * (design.n_neg * (1.0 - beta) - design.n_pos * beta)
    for name, dz in (("gamma1", dz1), ("gamma2", dz2)):
        layout.add_grad(grad, name, np.append(design.fq.T @ dz, dz.sum()))
