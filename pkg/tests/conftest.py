import numpy as np
import pytest

from reviewqa.corpus import build_corpus
from reviewqa.synth import SynthSpec, generate


def make_corpus(reviews_by_product, questions, answers=(), categories=None, **kwargs):
    """Corpus from compact literals.

    ``reviews_by_product`` maps product id -> list of (text, rating, reviewer).
    ``questions`` is a list of (question_id, product_id, text).
    ``answers`` is a list of (answer_id, question_id, text, top_voted).
    """
    categories = categories or {}
    products = [{"product_id": pid, "category": categories.get(pid, "Books")}
                for pid in reviews_by_product]
    reviews = []
    for pid, rows in reviews_by_product.items():
        for k, (text, rating, reviewer) in enumerate(rows):
            reviews.append({"review_id": f"{pid}-r{k}", "product_id": pid,
                            "reviewer_id": reviewer, "text": text, "rating": rating,
                            "helpful_yes": k, "helpful_total": 2 * k})
    qs = [{"question_id": qid, "product_id": pid, "text": text} for qid, pid, text in questions]
    ans = [{"answer_id": aid, "question_id": qid, "text": text, "top_voted": top}
           for aid, qid, text, top in answers]
    return build_corpus(products, reviews, qs, ans, **kwargs)


@pytest.fixture(scope="session")
def small_synth():
    """20 binary and 8 open-ended questions with subjective signals."""
    spec = SynthSpec(n_questions=20, n_open_questions=8, sentences_per_question=12,
                     vocab_size=120, labels_per_question={1: 0.2, 2: 0.3, 3: 0.5},
                     n_reviewers=15, rng_seed=11)
    return generate(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- acceptance report ---------------------------------------------------------

@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    line = f"criterion {number:>2} {'PASS' if rep.passed else 'FAIL'}  {title}"
    if detail:
        line += f"  [{detail}]"
    item.config._acceptance_lines = getattr(item.config, "_acceptance_lines", {})
    item.config._acceptance_lines[number] = line


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
