import math
from dataclasses import replace

import numpy as np
import pytest

from reviewqa.labeling import LabeledAnswer, apply_labels
from reviewqa.moe import ModelParams
from reviewqa.train.design import ParamLayout, build_pair_design, label_fidelity
from reviewqa.train.objectives import (
    e_step,
    expected_complete_loglik,
    loglik_kl,
    loglik_open,
    loglik_single,
    observed_loglik,
)

from .conftest import make_corpus
from .gradcheck import central_difference, objective_suite, random_theta, relative_error


def logit(p):
    return math.log(p / (1 - p))


def one_question(labels):
    """One binary question over a one-sentence product whose only token is 'alpha'."""
    answers = [(f"a{k}", "q", "Yes" if y else "No", k == 0) for k, y in enumerate(labels)]
    corpus = make_corpus({"p": [("Alpha.", 3, "u")]}, [("q", "p", "Is alpha?")], answers)
    corpus = apply_labels(corpus, [LabeledAnswer(f"a{k}", y, 1.0) for k, y in enumerate(labels)])
    design = build_pair_design(corpus, [corpus.questions["q"]])
    return corpus, design


def theta_for(design, variant, p=0.5, alpha=0.8, beta=0.8):
    params = ModelParams.zeros(design.dim, variant, reviewers=design.reviewers)
    gamma1 = np.append(np.zeros(design.dim), logit(alpha))
    gamma2 = np.append(np.zeros(design.dim), logit(beta))
    params = replace(params, xi=np.full(design.dim, logit(p)), gamma1=gamma1, gamma2=gamma2)
    layout = ParamLayout(variant, design.dim, design.reviewers)
    return layout, layout.pack(params)


def test_single_label_worked_value():
    _, design = one_question([1])
    layout, theta = theta_for(design, "moe", p=0.8)
    value, _ = loglik_single(design, layout, theta, [1.0], lam=1e-300)
    assert value == pytest.approx(math.log(0.8), abs=1e-12)
    assert value == pytest.approx(-0.2231, abs=1e-4)


def test_zero_params_value(small_synth):
    from reviewqa.train.trainer import binary_training_questions

    qs = binary_training_questions(small_synth.corpus)
    design = build_pair_design(small_synth.corpus, qs)
    layout = ParamLayout("moe", design.dim, design.reviewers)
    labels = np.array([float(q.n_pos > 0) for q in qs])
    value, _ = loglik_single(design, layout, np.zeros(layout.size), labels, lam=1e-3)
    assert value == pytest.approx(-len(qs) * math.log(2), abs=1e-12)


def test_kl_worked_value_and_gibbs():
    _, design = one_question([1, 1])
    layout, theta = theta_for(design, "kl-moe", p=0.8)
    assert loglik_kl(design, layout, theta, 1e-300)[0] == pytest.approx(math.log(0.8))
    # with r_q = 2/3 the cross-entropy peaks at p = r_q
    _, design = one_question([1, 1, 0])

    def at(p):
        lay, th = theta_for(design, "kl-moe", p=p)
        return loglik_kl(design, lay, th, 1e-300)[0]

    grid = np.linspace(0.05, 0.95, 91)
    assert grid[np.argmax([at(p) for p in grid])] == pytest.approx(2 / 3, abs=0.01)


def test_label_joint_worked_values():
    _, design = one_question([1, 1, 0])
    layout, theta = theta_for(design, "em-moe", alpha=0.9, beta=0.7)
    log_a, _, alpha, _ = label_fidelity(design, layout, theta)
    assert alpha[0] == pytest.approx(0.9)
    assert math.exp(log_a[0]) == pytest.approx(0.081)
    _, design = one_question([1, 0, 0])
    layout, theta = theta_for(design, "em-moe", alpha=0.9, beta=0.7)
    _, log_b, _, beta = label_fidelity(design, layout, theta)
    assert beta[0] == pytest.approx(0.7)
    assert math.exp(log_b[0]) == pytest.approx(0.147)


def test_label_joint_sigmoid_of_bias():
    _, design = one_question([1])
    layout, theta = theta_for(design, "em-moe", alpha=0.5, beta=0.5)
    _, _, alpha, beta = label_fidelity(design, layout, theta)
    assert (alpha[0], beta[0]) == (0.5, 0.5)
    layout, theta = theta_for(design, "em-moe", alpha=0.8)
    assert label_fidelity(design, layout, theta)[2][0] == pytest.approx(0.8)


def test_e_step_worked_posterior():
    _, design = one_question([1, 1])
    layout, theta = theta_for(design, "em-moe", p=0.5, alpha=0.8, beta=0.8)
    state = e_step(design, layout, theta)
    assert state.t[0] == pytest.approx(0.32 / 0.34, abs=1e-12)
    assert state.t[0] == pytest.approx(0.9412, abs=1e-4)
    assert 0 < state.alpha[0] < 1 and 0 < state.beta[0] < 1


def test_e_step_symmetric_evidence(rng):
    # alpha = beta and n+ = n- give a_q = b_q, so t_q must equal p_q
    _, design = one_question([1, 0])
    for _ in range(20):
        a, p = rng.uniform(0.55, 0.99), rng.uniform(0.01, 0.99)
        layout, theta = theta_for(design, "em-moe", p=p, alpha=a, beta=a)
        assert e_step(design, layout, theta).t[0] == pytest.approx(p, abs=1e-12)


def test_e_step_saturated_prediction():
    _, design = one_question([1])
    layout, theta = theta_for(design, "em-moe", p=1 - 1e-15)
    assert e_step(design, layout, theta).t[0] == pytest.approx(1.0, abs=1e-9)


def test_expected_complete_and_observed_worked_values():
    _, design = one_question([1, 1])
    layout, theta = theta_for(design, "em-moe", p=0.5)
    t = np.array([0.32 / 0.34])
    value, _ = expected_complete_loglik(design, layout, theta, t, lam=1e-300)
    expected = t[0] * math.log(0.32) + (1 - t[0]) * math.log(0.02)
    assert value == pytest.approx(expected, abs=1e-12)
    assert value == pytest.approx(-1.302, abs=1e-3)
    observed = observed_loglik(design, layout, theta, lam=1.0, penalized=False)
    assert observed == pytest.approx(math.log(0.34), abs=1e-12)


def test_observed_zero_when_no_labels():
    _, design = one_question([1, 1])
    design = replace(design, n_pos=np.zeros(1), n_neg=np.zeros(1))
    layout, theta = theta_for(design, "em-moe", p=0.7)
    assert observed_loglik(design, layout, theta, 1.0, penalized=False) == pytest.approx(0.0)


def test_expected_complete_reduces_to_single(small_synth, rng):
    from reviewqa.train.trainer import binary_training_questions

    qs = binary_training_questions(small_synth.corpus)
    design = build_pair_design(small_synth.corpus, qs)
    bare = replace(design, n_pos=np.zeros(len(qs)), n_neg=np.zeros(len(qs)))
    layout = ParamLayout("em-moe", design.dim, design.reviewers)
    theta = random_theta(layout, rng)
    labels = rng.integers(0, 2, len(qs)).astype(float)
    em_value, _ = expected_complete_loglik(bare, layout, theta, labels, 1e-3)
    single_value, _ = loglik_single(bare, layout, theta, labels, 1e-3)
    assert em_value == pytest.approx(single_value, abs=1e-9)


def test_kl_equals_single_on_unanimous(small_synth, rng):
    from reviewqa.train.trainer import binary_training_questions, single_labels

    qs = [q for q in binary_training_questions(small_synth.corpus) if not q.ambiguous]
    design = build_pair_design(small_synth.corpus, qs)
    layout = ParamLayout("moe", design.dim, design.reviewers)
    theta = random_theta(layout, rng)
    labels = single_labels(qs)
    kl = loglik_kl(design, layout, theta, 1e-3)
    single = loglik_single(design, layout, theta, labels, 1e-3)
    assert kl[0] == single[0]
    np.testing.assert_array_equal(kl[1], single[1])


def test_subjective_zeroed_matches_text_only(small_synth, rng):
    from reviewqa.train.trainer import binary_training_questions

    qs = binary_training_questions(small_synth.corpus)
    design = build_pair_design(small_synth.corpus, qs)
    base = ParamLayout("em-moe", design.dim, design.reviewers)
    subj = ParamLayout("em-moe-s", design.dim, design.reviewers)
    params = base.unpack(random_theta(base, rng),
                         ModelParams.zeros(design.dim, "em-moe-s", reviewers=design.reviewers))
    t = rng.uniform(size=len(qs))
    a = expected_complete_loglik(design, base, base.pack(params), t, 1e-3)[0]
    b = expected_complete_loglik(design, subj, subj.pack(params), t, 1e-3)[0]
    assert a == b


def test_open_zero_params(small_synth):
    from reviewqa.train.design import build_preference_design
    from reviewqa.train.trainer import TrainConfig, build_comparisons, open_training_questions

    comps = build_comparisons(open_training_questions(small_synth.corpus),
                              small_synth.corpus.answer_pool(), TrainConfig(), False,
                              np.random.default_rng(0))
    pdesign = build_preference_design(small_synth.corpus, comps, multi_answer=False)
    layout = ParamLayout("s-moe", pdesign.base.dim, pdesign.base.reviewers)
    value, _ = loglik_open(pdesign, layout, np.zeros(layout.size), 1e-3)
    assert value == pytest.approx(-pdesign.n_comparisons * math.log(2))


def test_open_multi_equals_single_on_singletons(small_synth, rng):
    from reviewqa.train.design import build_preference_design
    from reviewqa.train.trainer import (
        TrainConfig,
        _top_answer_only,
        build_comparisons,
        open_training_questions,
    )

    qs = [_top_answer_only(q) for q in open_training_questions(small_synth.corpus)]
    comps = build_comparisons(qs, small_synth.corpus.answer_pool(), TrainConfig(), True,
                              np.random.default_rng(3))
    single = build_preference_design(small_synth.corpus, comps, multi_answer=False)
    multi = build_preference_design(small_synth.corpus, comps, multi_answer=True)
    layout = ParamLayout("m-moe", single.base.dim, single.base.reviewers)
    theta = random_theta(layout, rng)
    assert loglik_open(single, layout, theta, 1e-3)[0] == loglik_open(multi, layout, theta,
                                                                        1e-3)[0]


def test_penalty_is_lambda_norm_squared(small_synth, rng):
    suite = objective_suite(small_synth.corpus, lam=0.0 + 1e-3)
    name, lay, fun = suite[0]
    theta = random_theta(lay, rng)
    heavy = objective_suite(small_synth.corpus, lam=2e-3)[0][2]
    assert fun(theta)[0] - heavy(theta)[0] == pytest.approx(1e-3 * theta @ theta, rel=1e-9)


def test_gradients_match_finite_differences(small_synth):
    rng = np.random.default_rng(7)
    for name, layout, fun in objective_suite(small_synth.corpus):
        theta = random_theta(layout, rng)
        analytic = fun(theta)[1]
        assert relative_error(analytic, central_difference(fun, theta)) < 1e-4, name
