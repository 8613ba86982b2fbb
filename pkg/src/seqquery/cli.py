"""Command-line interface.

Subcommands: ``estimate`` (one query, prints the estimate as JSON),
``experiment`` (config file to CSV), ``oracle`` (Markov closed forms), and
``validate`` (invariant suite against a model spec).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import estimators
from .estimators import GroundTruthConfig
from .harness import ExperimentConfig, build_model, default_workers, run_experiment
from .markov import general_query_markov, q2_marginal, q3_hitting, q4_a_before_b, steady_state
from .models import MarkovSequenceModel, apply_temperature, sequence_logprob
from .queries import Query, Vocab, make_a_before_b, make_count, make_hitting_time, make_kth_marginal
from .rng import substream


def _parse_tokens(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t != ""]


def _load_model(args):
    spec = json.loads(Path(args.model).read_text(encoding="utf-8"))
    if "kind" not in spec and "P" in spec:
        spec = {"kind": "markov", "P": spec["P"]}
    return build_model(spec, str(Path(args.model).parent)), spec


def _build_query(args, vocab: Vocab) -> Query:
    if args.query:
        return Query.from_json(Path(args.query).read_text(encoding="utf-8"))
    family = args.family
    if family == "hitting":
        return make_hitting_time(set(_parse_tokens(args.targets)), args.horizon, vocab)
    if family == "kth_marginal":
        return make_kth_marginal(_parse_tokens(args.targets)[0], args.horizon, vocab)
    if family == "count":
        return make_count(_parse_tokens(args.targets)[0], args.count, args.horizon, vocab)
    if family == "a_before_b":
        return make_a_before_b(
            set(_parse_tokens(args.targets)), set(_parse_tokens(args.versus)), args.horizon, vocab
        )
    raise SystemExit(f"unknown query family {family!r}")


def cmd_estimate(args) -> int:
    model, _ = _load_model(args)
    query = _build_query(args, model.vocab)
    history = _parse_tokens(args.history) if args.history else []
    method = args.method
    if method == "exact":
        est = estimators.exact(query, model, history, args.size_cap)
    elif method == "importance_sampling":
        est = estimators.importance_sampling(query, model, history, args.samples, args.seed)
    elif method == "naive_mc":
        est = estimators.naive_mc(query, model, history, args.samples, args.seed)
    elif method == "uniform_mc":
        est = estimators.uniform_mc(query, model, history, args.samples, args.seed)
    elif method == "beam_search_fixed":
        est = estimators.beam_estimate(query, model, history, kind="fixed", B=args.beam_width)
    elif method == "beam_search_coverage":
        est = estimators.beam_estimate(
            query, model, history, kind="coverage", alpha=args.alpha, schedule=args.schedule
        )
    elif method == "hybrid":
        est = estimators.hybrid(query, model, history, args.samples, args.beam_width, args.seed)
    elif method == "surrogate_ground_truth":
        est = estimators.surrogate_ground_truth(query, model, history, GroundTruthConfig(), args.seed)
    else:
        raise SystemExit(f"unknown method {method!r}")
    print(est.to_json())
    return 0


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    if args.output:
        cfg.output = args.output
        cfg.base_dir = "."
    out = run_experiment(cfg, workers=args.workers or default_workers())
    print(out)
    return 0


def cmd_oracle(args) -> int:
    model, spec = _load_model(args)
    if not isinstance(model, MarkovSequenceModel) or model.order != 1:
        if args.kind != "general":
            raise SystemExit("closed forms need a first-order markov model file")
    result: dict = {"kind": args.kind}
    if args.kind == "steady_state":
        result["pi"] = steady_state(model.matrix).tolist()
    elif args.kind == "q2":
        r = q2_marginal(model.matrix, args.start, args.horizon)
        result["distribution"] = r.dist.tolist()
        result["matmuls"] = r.matmuls
    elif args.kind == "q3":
        r = q3_hitting(model.matrix, args.start, _parse_tokens(args.targets)[0], args.horizon)
        result["recursive"] = r.recursive
        result["closed_form"] = r.closed_form
        if r.closed_form_error:
            result["closed_form_error"] = r.closed_form_error
    elif args.kind == "q4":
        a = _parse_tokens(args.targets)[0]
        b = _parse_tokens(args.versus)[0]
        result["value"] = q4_a_before_b(model.matrix, args.start, a, b)
        result["complement"] = q4_a_before_b(model.matrix, args.start, b, a)
    elif args.kind == "general":
        query = Query.from_json(Path(args.query).read_text(encoding="utf-8"))
        tensor = model.tensor
        r = general_query_markov(tensor, query, _parse_tokens(args.history))
        result["value"] = r.value
        result["contractions"] = r.contractions
    else:
        raise SystemExit(f"unknown oracle kind {args.kind!r}")
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_validate(args) -> int:
    """Invariant suite: normalization, determinism, temperature invariance,
    call accounting, and (for chains) row-stochasticity."""
    model, spec = _load_model(args)
    failures = []
    checks = 0
    gen = substream(args.seed, 0)
    V = model.vocab.size
    order = getattr(model, "order", 0) if isinstance(model, MarkovSequenceModel) else 0

    def check(name, ok, detail=""):
        nonlocal checks
        checks += 1
        line = f"{'PASS' if ok else 'FAIL'} {name}"
        if detail and not ok:
            line += f" ({detail})"
        print(line)
        if not ok:
            failures.append(name)

    contexts = []
    for _ in range(args.samples):
        n = int(gen.integers(order, order + 4))
        contexts.append([int(gen.integers(V)) for _ in range(max(n, order))])

    worst = 0.0
    for ctx in contexts:
        d = model.next(ctx, [])
        z = float(np.logaddexp.reduce(d.logp))
        worst = max(worst, abs(z))
    check("normalization (|logsumexp| <= 1e-9)", worst <= 1e-9, f"worst {worst}")

    same = all(
        np.array_equal(model.next(ctx, []).logp, model.next(ctx, []).logp) for ctx in contexts[:16]
    )
    check("determinism (repeat calls identical)", same)

    ok_t = True
    for ctx in contexts[:16]:
        d = model.next(ctx, [])
        for T in (0.5, 2.0, 8.0):
            dt = apply_temperature(d, T)
            if int(np.argmax(dt.logp)) != int(np.argmax(d.logp)):
                ok_t = False
    check("temperature argmax invariance", ok_t)

    before = model.calls
    seq = [int(gen.integers(V)) for _ in range(3)]
    sequence_logprob(model, contexts[0], seq)
    check("call accounting (+1 per conditional)", model.calls - before == 3)

    if isinstance(model, MarkovSequenceModel):
        rows = model.tensor.reshape(-1, V)
        check("row stochastic within 1e-12", np.abs(rows.sum(axis=1) - 1).max() <= 1e-12)

    print(f"{checks - len(failures)}/{checks} checks passed")
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="seqquery", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="estimate one query probability")
    p_est.add_argument("--model", required=True, help="model spec JSON file")
    p_est.add_argument("--query", help="query JSON file (alternative to --family)")
    p_est.add_argument("--family", default="hitting", choices=["hitting", "kth_marginal", "count", "a_before_b"])
    p_est.add_argument("--targets", default="0", help="comma-separated target token ids")
    p_est.add_argument("--versus", default="", help="B set for a_before_b")
    p_est.add_argument("--count", type=int, default=1, help="occurrence count for count queries")
    p_est.add_argument("--horizon", type=int, default=3)
    p_est.add_argument("--history", default="", help="comma-separated history token ids")
    p_est.add_argument(
        "--method",
        default="importance_sampling",
        choices=[
            "exact",
            "importance_sampling",
            "naive_mc",
            "uniform_mc",
            "beam_search_fixed",
            "beam_search_coverage",
            "hybrid",
            "surrogate_ground_truth",
        ],
    )
    p_est.add_argument("--samples", type=int, default=1000)
    p_est.add_argument("--beam-width", type=int, default=8)
    p_est.add_argument("--alpha", type=float, default=0.75)
    p_est.add_argument("--schedule", default="geometric", choices=["constant", "geometric"])
    p_est.add_argument("--size-cap", type=int, default=10**6)
    p_est.add_argument("--seed", type=int, default=0)
    p_est.set_defaults(func=cmd_estimate)

    p_exp = sub.add_parser("experiment", help="run a config-driven experiment to CSV")
    p_exp.add_argument("config", help="experiment config JSON")
    p_exp.add_argument("--output", help="override the output CSV path")
    p_exp.add_argument("--workers", type=int, help="parallel query workers (default: SEQQUERY_WORKERS or 1)")
    p_exp.set_defaults(func=cmd_experiment)

    p_or = sub.add_parser("oracle", help="closed-form Markov answers")
    p_or.add_argument("--model", required=True, help="markov model JSON file")
    p_or.add_argument("--kind", required=True, choices=["steady_state", "q2", "q3", "q4", "general"])
    p_or.add_argument("--start", type=int, default=0)
    p_or.add_argument("--targets", default="0")
    p_or.add_argument("--versus", default="1")
    p_or.add_argument("--horizon", type=int, default=3)
    p_or.add_argument("--query", help="query JSON file for kind=general")
    p_or.add_argument("--history", default="0", help="conditioning tokens for kind=general")
    p_or.set_defaults(func=cmd_oracle)

    p_val = sub.add_parser("validate", help="run the model invariant suite")
    p_val.add_argument("--model", required=True)
    p_val.add_argument("--samples", type=int, default=64)
    p_val.add_argument("--seed", type=int, default=0)
    p_val.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
