"""Command-line interface: ``reviewqa {synth,ingest,label,train,eval,query}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import json
import logging
import pickle
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .artifact import ModelArtifact
from .corpus import Corpus, featurize, ingest
from .errors import DataError, NumericalError, ReviewQAError
from .evaluation import (
    auc_open,
    binary_metrics,
    build_gold,
    build_silver,
    sample_non_answers,
    split_corpus,
)
from .labeling import (
    LabeledAnswer,
    ambiguity_stats,
    apply_labels,
    bundled_seeds_path,
    label_corpus,
    load_seeds,
    train_answer_labeler,
)
from .moe import VARIANTS, rank_reviews
from .synth import SynthSpec, generate, write_synth
from .text import tokenize
from .train.trainer import TrainConfig, train

log = logging.getLogger("reviewqa")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
CACHE_PROTOCOL = 4
SUPPORT_THRESHOLD = 0.5


class UsageError(ReviewQAError):
    exit_code = EXIT_USAGE


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- corpus cache ----------------------------------------------------------

def save_cache(corpus, path):
    Path(path).write_bytes(pickle.dumps(corpus, protocol=CACHE_PROTOCOL))


def load_cache(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    try:
        corpus = pickle.loads(path.read_bytes())
    except Exception as exc:  # any unpickling failure means a bad cache
        raise DataError(f"{path}: not a corpus cache ({exc})") from None
    if not isinstance(corpus, Corpus):
        raise DataError(f"{path}: not a corpus cache")
    return corpus


def load_labels(path):
    rows = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                rows.append(LabeledAnswer(str(rec["answer_id"]), int(rec["label"]),
                                          float(rec.get("confidence", 1.0))))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise DataError(f"{path}:{lineno}: expected "
                                '{"answer_id": str, "label": 0|1}') from None
    return rows


def _print_table(rows, columns, out):
    widths = [max(len(str(c)), *(len(str(r[i])) for r in rows)) for i, c in enumerate(columns)]
    print("  ".join(str(c).ljust(w) for c, w in zip(columns, widths)), file=out)
    for r in rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)), file=out)


# --- commands ----------------------------------------------------------------

def cmd_synth(args, out):
    labels = {int(k): float(v) for k, v in (args.labels_per_question or {3: 1.0}).items()}
    spec = SynthSpec(n_questions=args.n_questions, n_open_questions=args.n_open_questions,
                     labels_per_question=labels, planted_alpha=args.alpha,
                     planted_beta=args.beta, target_ambiguity_rate=args.ambiguity,
                     rng_seed=args.seed)
    data = generate(spec)
    write_synth(data, args.out)
    stats = ambiguity_stats(list(data.corpus.questions.values()))
    print(f"wrote synthetic corpus to {args.out}: {len(data.corpus.products)} products, "
          f"{len(data.corpus.questions)} questions, {len(data.records['answers'])} answers, "
          f"{len(data.records['reviews'])} reviews", file=out)
    print(f"ambiguous binary questions: {100 * stats['ambiguous_share']:.2f}%", file=out)
    return EXIT_OK


def cmd_ingest(args, out):
    corpus = ingest(args.products, args.questions, args.answers, args.reviews,
                    max_vocab=args.max_vocab, drop_stopwords=args.drop_stopwords)
    if args.labels:
        corpus = apply_labels(corpus, load_labels(args.labels))
    save_cache(corpus, args.out)
    counts = corpus.counts_by_category()
    rows = [(cat, c["products"], c["questions"], c["answers"], c["reviews"], c["sentences"])
            for cat, c in counts.items()]
    totals = [sum(r[i] for r in rows) for i in range(1, 6)]
    rows.append(("total", *totals))
    _print_table(rows, ("category", "products", "questions", "answers", "reviews",
                        "sentences"), out)
    n_binary = len(corpus.binary_questions())
    print(f"binary questions: {n_binary}  open-ended: {len(corpus) - n_binary}", file=out)
    for kind, n in sorted(corpus.dropped.items()):
        print(f"dropped {n} {kind} with unknown parent ids", file=out)
    print(f"vocabulary: {corpus.vocabulary.size} tokens; cache written to {args.out}", file=out)
    return EXIT_OK


def cmd_label(args, out):
    corpus = load_cache(args.corpus)
    seeds = args.seeds or bundled_seeds_path()
    texts, labels = load_seeds(seeds)
    labeler = train_answer_labeler(texts, labels)
    corpus, labeled = label_corpus(corpus, labeler, args.keep_fraction, args.per_category)
    save_cache(corpus, args.out)
    if args.labels_out:
        with Path(args.labels_out).open("w", encoding="utf-8") as fh:
            for la in labeled:
                fh.write(json.dumps(la.to_dict(), sort_keys=True) + "\n")
    stats = ambiguity_stats(list(corpus.questions.values()))
    weights = labeler.first_word_weights
    print(f"labeler first-word weights: yes {weights['yes']:+.3f}  no {weights['no']:+.3f}",
          file=out)
    print(f"labeled answers kept: {len(labeled)} (keep fraction {args.keep_fraction})", file=out)
    print(f"binary questions: {stats['binary_questions']}  "
          f"with labels: {stats['labeled_questions']}", file=out)
    print(f"ambiguous questions: {stats['ambiguous_questions']} "
          f"({100 * stats['ambiguous_share']:.2f}%)", file=out)
    print(f"positive label share: {100 * stats['positive_share']:.2f}%", file=out)
    return EXIT_OK


def _train_config(args):
    return TrainConfig(variant=args.variant, lam=args.lam, lbfgs_memory=args.lbfgs_memory,
                       lbfgs_max_iters=args.lbfgs_max_iters, lbfgs_grad_tol=args.lbfgs_grad_tol,
                       em_max_rounds=args.em_max_rounds, em_rel_tol=args.em_rel_tol,
                       neg_samples_per_answer=args.neg_samples_per_answer, rng_seed=args.seed,
                       label_policy=args.label_policy)


def cmd_train(args, out):
    corpus = load_cache(args.corpus)
    config = _train_config(args)
    train_corpus = corpus if args.all_questions else split_corpus(corpus, args.train_fraction)[0]
    result = train(train_corpus, config)
    metrics = {
        "objective": result.objective,
        "history": [float(v) for v in result.history],
        "optimizer_status": list(result.statuses),
        "n_train_questions": len(train_corpus),
    }
    artifact = ModelArtifact(corpus.vocabulary, corpus.stats, result.params, config, metrics)
    artifact.save(args.out)
    label = "observed log-likelihood" if config.variant.startswith("em-") else "objective"
    for k, v in enumerate(result.history):
        print(f"round {k}: {label} {v:.10f}", file=out)
    print(f"final objective {result.objective:.10f}; model written to {args.out}", file=out)
    return EXIT_OK


def _open_eval(estimator, corpus, args, rng):
    questions = [q for q in corpus.open_questions() if q.answers and corpus.experts(q)]
    if not questions:
        return None
    eval_set = sample_non_answers(questions, args.neg_per_answer, rng=rng,
                                  pool=corpus.answer_pool())
    return auc_open(estimator.preference_proba(corpus, eval_set), eval_set)


def cmd_eval(args, out):
    artifact = ModelArtifact.load(args.model)
    corpus = load_cache(args.corpus)
    estimator = artifact.estimator()
    test = corpus if args.all_questions else split_corpus(corpus, args.train_fraction)[1]
    rng = np.random.default_rng(args.seed)
    variant = artifact.model_params.variant
    records = []
    categories = sorted({p.category for p in corpus.products.values()})
    scopes = [("all", None)] + ([(c, c) for c in categories] if len(categories) > 1 else [])
    for name, cat in scopes:
        sub = test if cat is None else test.subset(
            [qid for qid, q in test.questions.items()
             if corpus.products[q.product_id].category == cat])
        binary = [q for q in sub.binary_questions() if q.n_total > 0 and sub.experts(q)]
        auc_o = _open_eval(estimator, sub, args, rng)
        if not binary and auc_o is None:
            continue
        preds = estimator.predictions_by_id(sub.subset([q.question_id for q in binary]))
        for testset in (build_silver(binary), build_gold(binary)):
            records.append(binary_metrics(preds, testset, name, variant, auc_o).to_dict())
    if not records:
        raise DataError("test split has no labeled binary or answered open-ended questions")
    Path(args.out).write_text(json.dumps(records, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")
    for r in records:
        auc_b = "n/a" if r["auc_b"] is None else f"{r['auc_b']:.4f}"
        auc_o = "n/a" if r["auc_o"] is None else f"{r['auc_o']:.4f}"
        acc = r["accuracy_at"].get("0.0")
        acc = "n/a" if acc is None else f"{acc:.4f}"
        print(f"{r['category']:<12} {r['standard']:<6} n={r['n_test']:<6} AUC_b {auc_b}  "
              f"acc@0 {acc}  AUC_o {auc_o}", file=out)
    print(f"metrics written to {args.out}", file=out)
    return EXIT_OK


def _portable_experts(corpus, product_id, artifact):
    """The product's sentences featurized with the model's own vocabulary."""
    sents = corpus.sentences.get(product_id, ())
    if corpus.vocabulary.token_to_index == artifact.vocabulary.token_to_index:
        return sents
    return tuple(replace(s, features=featurize(s.tokens, artifact.vocabulary)) for s in sents)


def cmd_query(args, out):
    artifact = ModelArtifact.load(args.model)
    corpus = load_cache(args.corpus)
    if args.product_id not in corpus.products:
        raise DataError(f"unknown product {args.product_id!r}")
    if args.top_k < 1:
        raise UsageError("--top-k must be >= 1")
    question = corpus.make_question(args.question, args.product_id)
    tokens = tuple(tokenize(args.question, corpus.drop_stopwords))
    question = replace(question, tokens=tokens,
                       features=featurize(tokens, artifact.vocabulary))
    experts = _portable_experts(corpus, args.product_id, artifact)
    if not experts:
        raise DataError(f"product {args.product_id!r} has no review sentences")
    category = corpus.products[args.product_id].category
    stats = artifact.corpus_stats.get(category) or corpus.stats_for(args.product_id)
    params = artifact.model_params
    ranked = rank_reviews(question, experts, params, stats, top_k=len(experts))
    p_q = float(sum(r.weight * r.prediction for r in ranked))
    print(f"question: {args.question}", file=out)
    if question.is_binary:
        print(f"binary question; P(yes) = {p_q:.4f}", file=out)
    else:
        print("open-ended question; showing the most relevant review sentences", file=out)
    top = ranked[:args.top_k]
    groups = (("supporting", [r for r in top if r.prediction >= SUPPORT_THRESHOLD]),
              ("opposing", [r for r in top if r.prediction < SUPPORT_THRESHOLD]))
    for name, rows in groups:
        if not rows:
            continue
        print(f"{name} (sigma(w) {'>=' if name == 'supporting' else '<'} "
              f"{SUPPORT_THRESHOLD}):", file=out)
        for r in rows:
            print(f"  {r.weight:.4f}  {r.prediction:.4f}  [{r.sentence.sentence_id}] "
                  f"{r.sentence.text}", file=out)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "label": cmd_label,
            "train": cmd_train, "eval": cmd_eval, "query": cmd_query}


# --- argument parsing --------------------------------------------------------

def _common(p):
    p.add_argument("--seed", type=int, default=0, help="seed for every random draw")
    p.add_argument("--threads", type=int, default=None,
                   help="cap on BLAS/OpenMP threads (default: library default)")
    p.add_argument("--config", type=Path, default=None,
                   help="TOML file; a [<command>] table supplies defaults")
    p.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")


def build_parser():
    parser = _Parser(prog="reviewqa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic corpus with planted truth")
    _common(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-questions", type=int, default=2000)
    p.add_argument("--n-open-questions", type=int, default=0)
    p.add_argument("--labels-per-question", type=json.loads, default=None,
                   help='JSON object, e.g. \'{"3": 1.0}\'')
    p.add_argument("--alpha", type=float, default=0.85)
    p.add_argument("--beta", type=float, default=0.90)
    p.add_argument("--ambiguity", type=float, default=0.14)

    p = sub.add_parser("ingest", help="parse JSONL inputs into a corpus cache")
    _common(p)
    for name in ("products", "questions", "answers", "reviews"):
        p.add_argument(f"--{name}", type=Path, required=True)
    p.add_argument("--labels", type=Path, default=None,
                   help="optional labels.jsonl with answer_id/label rows")
    p.add_argument("--max-vocab", type=int, default=5000)
    p.add_argument("--drop-stopwords", action="store_true")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("label", help="label answers to binary questions")
    _common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--seeds", type=Path, default=None, help="default: bundled seed set")
    p.add_argument("--keep-fraction", type=float, default=0.5)
    p.add_argument("--per-category", action="store_true")
    p.add_argument("--labels-out", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", help="fit a model variant and save the artifact")
    _common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--variant", choices=VARIANTS, default="moe")
    p.add_argument("--lam", type=float, default=1e-3)
    p.add_argument("--lbfgs-memory", type=int, default=10)
    p.add_argument("--lbfgs-max-iters", type=int, default=200)
    p.add_argument("--lbfgs-grad-tol", type=float, default=1e-5)
    p.add_argument("--em-max-rounds", type=int, default=50)
    p.add_argument("--em-rel-tol", type=float, default=1e-6)
    p.add_argument("--neg-samples-per-answer", type=int, default=1)
    p.add_argument("--label-policy", choices=("top_voted", "random"), default="top_voted")
    _split_flags(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("eval", help="score a model on the held-out split")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--neg-per-answer", type=int, default=1)
    _split_flags(p)
    p.add_argument("--out", type=Path, default=Path("metrics.json"))

    p = sub.add_parser("query", help="answer one question from a product's reviews")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--product-id", required=True)
    p.add_argument("--question", required=True)
    p.add_argument("--top-k", type=int, default=10)
    return parser


def _split_flags(p):
    p.add_argument("--train-fraction", type=float, default=2 / 3)
    p.add_argument("--all-questions", action="store_true",
                   help="use every question instead of the hashed split")


def _config_defaults(path, command):
    try:
        with Path(path).open("rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise DataError(f"{path}: invalid TOML ({exc})") from None
    table = cfg.get(command, {})
    if not isinstance(table, dict):
        raise DataError(f"{path}: [{command}] must be a table")
    return {k.replace("-", "_"): v for k, v in table.items()}


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        defaults = _config_defaults(args.config, args.command)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = sorted(set(defaults) - known)
        if unknown:
            raise UsageError(f"{args.config}: unknown keys for {args.command}: {unknown}")
        # explicit command-line flags still win over the file
        subparser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None, out=None):
    out = out or sys.stdout
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        with threadpool_limits(limits=args.threads):
            return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ReviewQAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return getattr(exc, "exit_code", EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main())
