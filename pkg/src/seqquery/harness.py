"""Config-driven experiment runner: desk-scale versions of the paper-style
measurement protocols (error vs horizon, budget sweeps, temperature and
entropy studies, relative efficiency, truncation error, coverage-width
ablation), written as deterministic CSV.

Budgets are expressed in hybrid-sample units: one unit costs the tail-split
search plus one expected remainder completion, measured once per query
instance and then fixed; when no hybrid method participates, one unit is
the cost of one importance-sampling draw (K calls).  Every method is then
held to the same model-call budget.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimators import (
    GroundTruthConfig,
    beam_estimate,
    beam_search_coverage,
    beam_search_tail_split,
    exact,
    hybrid,
    importance_sampling,
    naive_mc,
    surrogate_ground_truth,
    uniform_mc,
)
from .models import (
    MarkovSequenceModel,
    NGramModel,
    SequenceModel,
    SyntheticMixerModel,
    TemperatureWrapped,
    UniformModel,
    fit_ngram,
    random_markov_matrix,
    rollout,
)
from .proposal import Proposal, restricted_entropy
from .queries import Query, Vocab, make_a_before_b, make_hitting_time, make_kth_marginal
from .rng import derive_seed, substream

SCHEMA_VERSION = 1

DEFAULT_BUDGET_GRID = [10, 30, 50, 100, 300, 500, 1000, 3000, 5000, 10000]

ROW_FIELDS = [
    "row_type",
    "model_id",
    "method",
    "K",
    "budget_units",
    "budget_calls",
    "query_id",
    "query_label",
    "estimate",
    "raw_estimate",
    "std_error",
    "lower_bound",
    "truth",
    "truth_kind",
    "rae",
    "excluded",
    "entropy",
    "entropy_se",
    "model_calls",
    "extra",
]


class HarnessError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    model: dict
    output: str
    seed: int = 0
    n_queries: int = 20
    history_length: int = 5
    horizons: list[int] = field(default_factory=lambda: [3])
    methods: list[str] = field(default_factory=lambda: ["importance_sampling"])
    budgets: list[int] = field(default_factory=lambda: [100])
    query: dict = field(default_factory=lambda: {"family": "hitting"})
    temperatures: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])
    alphas: list[float] = field(default_factory=lambda: [0.5, 0.75, 0.95])
    k_max_grid: list[int] = field(default_factory=lambda: [1, 2, 5, 10, 20, 30])
    replicates: int = 30
    exact_cap: int = 10**6
    width_cap: int = 8
    coverage_width_cap: int = 100000
    coverage_schedule: str = "constant"
    entropy_samples: int = 32
    gt: dict = field(default_factory=dict)
    base_dir: str = "."

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        return out

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str = ".") -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise HarnessError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**doc)
        cfg.base_dir = base_dir
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        doc = json.loads(path.read_text(encoding="utf-8"))
        return cls.from_dict(doc, base_dir=str(path.parent))

    def gt_config(self) -> GroundTruthConfig:
        return GroundTruthConfig(**self.gt) if self.gt else GroundTruthConfig()

    def output_path(self) -> Path:
        out = Path(self.output)
        return out if out.is_absolute() else Path(self.base_dir) / out


# ---------------------------------------------------------------------------
# model construction
# ---------------------------------------------------------------------------


def build_model(spec: dict, base_dir: str = ".") -> SequenceModel:
    """Build a sequence model from a JSON-compatible spec dict."""
    kind = spec.get("kind")
    if kind == "uniform":
        return UniformModel(spec["V"])
    if kind == "mixer":
        return SyntheticMixerModel(spec.get("seed", 0), spec["V"])
    if kind == "markov":
        if "path" in spec:
            text = (Path(base_dir) / spec["path"]).read_text(encoding="utf-8")
            return MarkovSequenceModel.from_json(text)
        if "P" in spec:
            return MarkovSequenceModel(np.asarray(spec["P"], dtype=np.float64), order=1)
        if "random" in spec:
            r = spec["random"]
            gen = substream(r.get("seed", 0), 0)
            P = random_markov_matrix(r["V"], gen, r.get("concentration", 1.0), r.get("self_bias", 0.0))
            return MarkovSequenceModel(P, order=1)
        raise HarnessError("markov spec needs 'path', 'P', or 'random'")
    if kind == "ngram":
        if "path" in spec:
            text = (Path(base_dir) / spec["path"]).read_text(encoding="utf-8")
            return NGramModel.from_json(text)
        corpus = spec.get("corpus_text")
        if corpus is None:
            corpus = Path(base_dir) / spec["corpus"]
        return fit_ngram(corpus, spec.get("order", 1), spec.get("delta", 1.0), spec.get("tokenization", "char"))
    if kind == "temperature":
        return TemperatureWrapped(build_model(spec["inner"], base_dir), spec["T"])
    if kind == "remote":
        from .remote import RemoteModel

        return RemoteModel.from_spec(spec, base_dir)
    raise HarnessError(f"unknown model kind {spec.get('kind')!r}")


def model_id(spec: dict) -> str:
    digest = derive_seed(0, json.dumps(spec, sort_keys=True))
    return f"{spec.get('kind', '?')}-{digest & 0xFFFFFFFF:08x}"


# ---------------------------------------------------------------------------
# instance generation (history + target per query id)
# ---------------------------------------------------------------------------


def sample_history(model: SequenceModel, length: int, gen: np.random.Generator) -> list[int]:
    """History rollout; chains that need m conditioning tokens get a uniform
    m-token preamble."""
    order = getattr(model, "order", 0) if isinstance(model, MarkovSequenceModel) else 0
    inner = model
    while isinstance(inner, TemperatureWrapped):
        inner = inner.inner
    if isinstance(inner, MarkovSequenceModel):
        order = inner.order
    if length < order:
        raise HarnessError(f"history length {length} shorter than chain order {order}")
    head = [int(gen.integers(model.vocab.size)) for _ in range(order)]
    return head + rollout(model, head, length - order, gen)


@dataclass
class Instance:
    query_id: int
    history: list[int]
    continuation: list[int]

    def target(self, K: int) -> int:
        return self.continuation[K - 1]


def generate_instances(cfg: ExperimentConfig, model: SequenceModel, max_k: int) -> list[Instance]:
    out = []
    for qid in range(cfg.n_queries):
        hist = sample_history(model, cfg.history_length, substream(derive_seed(cfg.seed, "history"), qid))
        cont = rollout(model, hist, max_k, substream(derive_seed(cfg.seed, "target"), qid))
        out.append(Instance(qid, hist, cont))
    return out


def build_query(cfg: ExperimentConfig, inst: Instance, K: int, vocab: Vocab) -> Query:
    family = cfg.query.get("family", "hitting")
    if family == "hitting":
        return make_hitting_time({inst.target(K)}, K, vocab)
    if family == "kth_marginal":
        return make_kth_marginal(inst.target(K), K, vocab)
    if family == "a_before_b":
        return make_a_before_b(cfg.query["A"], cfg.query["B"], K, vocab)
    if family == "full_space":
        from .queries import ProductQuery

        full = tuple(vocab.tokens)
        return Query((ProductQuery((full,) * K),), label=f"full_space(K={K})")
    raise HarnessError(f"unknown query family {family!r}")


# ---------------------------------------------------------------------------
# budgets and method dispatch
# ---------------------------------------------------------------------------


def hybrid_unit_cost(query: Query, model: SequenceModel, history, width_cap: int) -> tuple[int, float]:
    """(search calls, expected completion calls per sample) for this
    instance; measured once, then fixed for every budget level."""
    calls0 = model.calls
    expected = []
    for part in query.parts:
        bs, tree = beam_search_tail_split(part, model, history, width_cap)
        tree.prune([b.seq for b in bs.beams])
        expected.append(tree.expected_completion_calls())
    search_calls = model.calls - calls0
    return search_calls, float(np.mean(expected)) if expected else 0.0


def budget_to_calls(units: int, K: int, unit_cost: tuple[int, float] | None) -> int:
    if unit_cost is None:
        return units * K
    search_calls, expected = unit_cost
    return search_calls + math.ceil(units * expected)


def fixed_beam_width(budget_calls: int, query: Query) -> int:
    """Largest width whose worst-case search cost fits the budget."""
    growth = sum(max(1, p.horizon - 1) for p in query.parts)
    return max(1, (budget_calls - len(query.parts)) // growth)


def run_method(
    method: str,
    query: Query,
    model: SequenceModel,
    history,
    budget_calls: int,
    seed: int,
    cfg: ExperimentConfig,
):
    K = query.horizon
    n_parts = len(query.parts)
    if method == "exact":
        return exact(query, model, history, cfg.exact_cap)
    if method == "importance_sampling":
        S = max(n_parts, budget_calls // K)
        return importance_sampling(query, model, history, S, seed)
    if method == "naive_mc":
        return naive_mc(query, model, history, max(1, budget_calls // K), seed)
    if method == "uniform_mc":
        return uniform_mc(query, model, history, max(1, budget_calls // K), seed)
    if method == "beam_search_fixed":
        return beam_estimate(query, model, history, kind="fixed", B=fixed_beam_width(budget_calls, query))
    if method == "beam_search_coverage":
        return beam_estimate(
            query,
            model,
            history,
            kind="coverage",
            alpha=cfg.alphas[0],
            schedule=cfg.coverage_schedule,
            width_cap=cfg.coverage_width_cap,
        )
    if method == "hybrid":
        return hybrid(query, model, history, 0, cfg.width_cap, seed, budget_calls=budget_calls)
    if method == "surrogate_ground_truth":
        return surrogate_ground_truth(query, model, history, cfg.gt_config(), seed)
    raise HarnessError(f"unknown method {method!r}")


def compute_truth(query: Query, model: SequenceModel, history, cfg: ExperimentConfig, seed: int):
    if query.size() <= cfg.exact_cap:
        return exact(query, model, history, cfg.exact_cap).raw_value, "exact"
    est = surrogate_ground_truth(query, model, history, cfg.gt_config(), seed)
    return est.raw_value, "surrogate"


def relative_abs_error(truth: float, estimate: float):
    """(rae, excluded): RAE is undefined for truth zero."""
    if truth <= 0.0:
        return None, True
    return abs(truth - estimate) / truth, False


# ---------------------------------------------------------------------------
# row plumbing
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def median_low(values: list[float]) -> float | None:
    """Tie rule: the lower median of even-length lists."""
    return statistics.median_low(values) if values else None


def write_csv(path, rows: list[dict], experiment: str, seed: int) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(f"# seqquery-csv v{SCHEMA_VERSION} experiment={experiment} seed={seed}\n")
    writer = csv.DictWriter(buf, fieldnames=ROW_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k)) for k in ROW_FIELDS})
    path.write_text(buf.getvalue(), encoding="utf-8")


def _row_sort_key(row: dict):
    order = {"per_query": 0, "per_depth": 0, "summary_median": 1, "summary_mean": 2, "summary": 3}
    return (
        order.get(row.get("row_type"), 9),
        row.get("query_id") if row.get("query_id") is not None else -1,
        row.get("K") or 0,
        row.get("budget_units") or 0,
        str(row.get("method")),
        str(row.get("extra")),
    )


def _assert_budget(row: dict) -> None:
    if row.get("method") in ("exact", "surrogate_ground_truth", "beam_search_coverage"):
        return
    budget, calls, K = row.get("budget_calls"), row.get("model_calls"), row.get("K") or 0
    if budget and calls is not None and calls > budget + K:
        raise HarnessError(
            f"budget violated: method={row['method']} calls={calls} budget={budget} K={K}"
        )


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def _estimate_rows_for_instance(cfg_doc: dict, qid: int) -> list[dict]:
    """All per-query rows for one instance (parallelism unit)."""
    cfg = ExperimentConfig.from_dict(cfg_doc["cfg"], base_dir=cfg_doc["base_dir"])
    model = build_model(cfg.model, cfg.base_dir)
    mid = model_id(cfg.model)
    vocab = model.vocab
    max_k = max(cfg.horizons)
    hist = sample_history(model, cfg.history_length, substream(derive_seed(cfg.seed, "history"), qid))
    cont = rollout(model, hist, max_k, substream(derive_seed(cfg.seed, "target"), qid))
    inst = Instance(qid, hist, cont)

    use_hybrid_units = "hybrid" in cfg.methods
    rows = []
    for K in cfg.horizons:
        query = build_query(cfg, inst, K, vocab)
        truth, truth_kind = compute_truth(query, model, inst.history, cfg, derive_seed(cfg.seed, "gt", qid, K))
        if cfg.entropy_samples > 0:
            ent, ent_se = restricted_entropy(
                Proposal(model, query.parts[0], tuple(inst.history)),
                cfg.entropy_samples,
                derive_seed(cfg.seed, "entropy", qid, K),
            )
        else:
            ent, ent_se = None, None
        unit_cost = (
            hybrid_unit_cost(query, model, inst.history, cfg.width_cap) if use_hybrid_units else None
        )
        for units in cfg.budgets:
            budget_calls = budget_to_calls(units, K, unit_cost)
            for method in cfg.methods:
                seed_m = derive_seed(cfg.seed, "est", qid, K, method, units)
                calls0 = model.calls
                est = run_method(method, query, model, inst.history, budget_calls, seed_m, cfg)
                delta = model.calls - calls0
                if delta != est.model_calls:
                    raise HarnessError(f"call accounting mismatch: {delta} != {est.model_calls}")
                rae, excluded = relative_abs_error(truth, est.value)
                row = {
                    "row_type": "per_query",
                    "model_id": mid,
                    "method": method,
                    "K": K,
                    "budget_units": units,
                    "budget_calls": budget_calls if method != "exact" else est.model_calls,
                    "query_id": qid,
                    "query_label": query.label,
                    "estimate": est.value,
                    "raw_estimate": est.raw_value,
                    "std_error": est.std_error,
                    "lower_bound": est.is_lower_bound,
                    "truth": truth,
                    "truth_kind": truth_kind,
                    "rae": rae,
                    "excluded": excluded,
                    "entropy": ent,
                    "entropy_se": ent_se,
                    "model_calls": est.model_calls,
                }
                _assert_budget(row)
                rows.append(row)
    return rows


def _summaries(rows: list[dict], keys=("method", "K", "budget_units")) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        if r["row_type"] != "per_query":
            continue
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for gkey in sorted(groups, key=str):
        members = groups[gkey]
        raes = [r["rae"] for r in members if not r["excluded"]]
        excluded = sum(1 for r in members if r["excluded"])
        base = dict(zip(keys, gkey))
        common = {
            "model_id": members[0]["model_id"],
            "excluded": excluded,
            "model_calls": sum(r["model_calls"] for r in members),
            "extra": f"n={len(raes)}",
        }
        out.append(
            {"row_type": "summary_median", "rae": median_low(raes), **base, **common}
        )
        out.append(
            {
                "row_type": "summary_mean",
                "rae": (sum(raes) / len(raes)) if raes else None,
                **base,
                **common,
            }
        )
    return out


def _run_per_query_experiment(cfg: ExperimentConfig, workers: int = 1) -> list[dict]:
    payload = {"cfg": cfg.to_dict(), "base_dir": cfg.base_dir}
    qids = list(range(cfg.n_queries))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_estimate_rows_for_instance, [payload] * len(qids), qids))
    else:
        chunks = [_estimate_rows_for_instance(payload, qid) for qid in qids]
    rows = [r for chunk in chunks for r in chunk]
    rows.extend(_summaries(rows))
    rows.sort(key=_row_sort_key)
    return rows


def run_rae_experiment(cfg: ExperimentConfig, workers: int = 1) -> list[dict]:
    """Error vs horizon at fixed budgets; per-query rows plus median/mean
    summaries (truth-zero queries are excluded from aggregates but
    counted)."""
    return _run_per_query_experiment(cfg, workers)


def run_budget_sweep(cfg: ExperimentConfig, workers: int = 1) -> list[dict]:
    """Error vs computation budget over the standard unit grid."""
    if not cfg.budgets or cfg.budgets == [100]:
        cfg.budgets = list(DEFAULT_BUDGET_GRID)
    return _run_per_query_experiment(cfg, workers)


def run_temperature_sweep(cfg: ExperimentConfig, workers: int = 1) -> list[dict]:
    """Search-vs-sampling error as entropy rises with model temperature.

    Histories, targets, and queries are fixed from the base model; only the
    estimated model is tempered.  Budgets are matched across methods.
    """
    base_model = build_model(cfg.model, cfg.base_dir)
    mid = model_id(cfg.model)
    vocab = base_model.vocab
    max_k = max(cfg.horizons)
    instances = generate_instances(cfg, base_model, max_k)
    units = cfg.budgets[0]
    rows: list[dict] = []
    for T in cfg.temperatures:
        model = TemperatureWrapped(build_model(cfg.model, cfg.base_dir), T)
        for inst in instances:
            for K in cfg.horizons:
                query = build_query(cfg, inst, K, vocab)
                truth, truth_kind = compute_truth(
                    query, model, inst.history, cfg, derive_seed(cfg.seed, "gt", inst.query_id, K)
                )
                ent, ent_se = restricted_entropy(
                    Proposal(model, query.parts[0], tuple(inst.history)),
                    cfg.entropy_samples,
                    derive_seed(cfg.seed, "entropy", inst.query_id, K),
                )
                budget_calls = budget_to_calls(units, K, None)
                for method in cfg.methods:
                    # same substream as the plain error experiment, so the
                    # T=1 rows reproduce it exactly
                    seed_m = derive_seed(cfg.seed, "est", inst.query_id, K, method, units)
                    est = run_method(method, query, model, inst.history, budget_calls, seed_m, cfg)
                    rae, excluded = relative_abs_error(truth, est.value)
                    row = {
                        "row_type": "per_query",
                        "model_id": mid,
                        "method": method,
                        "K": K,
                        "budget_units": units,
                        "budget_calls": budget_calls,
                        "query_id": inst.query_id,
                        "query_label": query.label,
                        "estimate": est.value,
                        "raw_estimate": est.raw_value,
                        "std_error": est.std_error,
                        "lower_bound": est.is_lower_bound,
                        "truth": truth,
                        "truth_kind": truth_kind,
                        "rae": rae,
                        "excluded": excluded,
                        "entropy": ent,
                        "entropy_se": ent_se,
                        "model_calls": est.model_calls,
                        "extra": f"T={T}",
                    }
                    _assert_budget(row)
                    rows.append(row)
    # per-temperature medians and monotone-trend statistics
    curves: dict[str, list[tuple[float, float]]] = {m: [] for m in cfg.methods}
    for T in cfg.temperatures:
        for method in cfg.methods:
            raes = [
                r["rae"]
                for r in rows
                if r["row_type"] == "per_query"
                and r["method"] == method
                and r["extra"] == f"T={T}"
                and not r["excluded"]
            ]
            med = median_low(raes)
            curves[method].append((T, med if med is not None else math.nan))
            rows.append(
                {
                    "row_type": "summary_median",
                    "model_id": mid,
                    "method": method,
                    "budget_units": units,
                    "rae": med,
                    "excluded": sum(
                        1
                        for r in rows
                        if r["row_type"] == "per_query"
                        and r["method"] == method
                        and r["extra"] == f"T={T}"
                        and r["excluded"]
                    ),
                    "extra": f"T={T}",
                }
            )
    for method, curve in curves.items():
        meds = [v for _, v in curve]
        increases = sum(1 for a, b in zip(meds, meds[1:]) if b > a + 1e-12)
        decreases = sum(1 for a, b in zip(meds, meds[1:]) if b < a - 1e-12)
        rows.append(
            {
                "row_type": "summary",
                "model_id": mid,
                "method": method,
                "extra": f"trend increases={increases} decreases={decreases} final={meds[-1]!r}",
            }
        )
    rows.sort(key=_row_sort_key)
    return rows


def run_relative_efficiency(cfg: ExperimentConfig, workers: int = 1) -> list[dict]:
    """Variance ratio naive / importance sampling from seeded replicates at
    matched budgets; +inf sentinel when the proposal is exact."""
    model = build_model(cfg.model, cfg.base_dir)
    mid = model_id(cfg.model)
    vocab = model.vocab
    max_k = max(cfg.horizons)
    instances = generate_instances(cfg, model, max_k)
    units = cfg.budgets[0]
    rows: list[dict] = []
    for inst in instances:
        for K in cfg.horizons:
            query = build_query(cfg, inst, K, vocab)
            S = max(len(query.parts), units)
            naive_vals = []
            is_vals = []
            for r in range(cfg.replicates):
                naive_vals.append(
                    naive_mc(query, model, inst.history, S, derive_seed(cfg.seed, "re-naive", inst.query_id, K, r)).value
                )
                is_vals.append(
                    importance_sampling(
                        query, model, inst.history, S, derive_seed(cfg.seed, "re-is", inst.query_id, K, r)
                    ).value
                )
            var_n = float(np.var(naive_vals, ddof=1))
            var_i = float(np.var(is_vals, ddof=1))
            if var_i > 0:
                ratio, flag = var_n / var_i, ""
            elif var_n > 0:
                ratio, flag = math.inf, "is_variance_zero"
            else:
                ratio, flag = math.nan, "degenerate_both_zero"
            rows.append(
                {
                    "row_type": "per_query",
                    "model_id": mid,
                    "method": "relative_efficiency",
                    "K": K,
                    "budget_units": units,
                    "budget_calls": S * K,
                    "query_id": inst.query_id,
                    "query_label": query.label,
                    "estimate": ratio,
                    "model_calls": cfg.replicates * 2 * S * K,
                    "extra": f"var_naive={var_n!r} var_is={var_i!r} {flag}".strip(),
                }
            )
    for K in cfg.horizons:
        finite = [
            r["estimate"]
            for r in rows
            if r["row_type"] == "per_query" and r["K"] == K and math.isfinite(r["estimate"])
        ]
        inf_count = sum(
            1 for r in rows if r["row_type"] == "per_query" and r["K"] == K and math.isinf(r["estimate"])
        )
        rows.append(
            {
                "row_type": "summary_median",
                "model_id": mid,
                "method": "relative_efficiency",
                "K": K,
                "budget_units": units,
                "estimate": median_low(finite),
                "extra": f"n_finite={len(finite)} n_inf={inf_count}",
            }
        )
    rows.sort(key=_row_sort_key)
    return rows


def run_q4_unaccounted(cfg: ExperimentConfig, workers: int = 1) -> list[dict]:
    """Truncation error of the A-before-B pair as the horizon grows."""
    model = build_model(cfg.model, cfg.base_dir)
    mid = model_id(cfg.model)
    vocab = model.vocab
    A, B = cfg.query["A"], cfg.query["B"]
    method = cfg.methods[0]
    units = cfg.budgets[0]
    instances = generate_instances(cfg, model, 1)
    rows: list[dict] = []
    for inst in instances:
        for k_max in cfg.k_max_grid:
            q_ab = make_a_before_b(A, B, k_max, vocab)
            q_ba = make_a_before_b(B, A, k_max, vocab)
            vals = {}
            for tag, q in (("ab", q_ab), ("ba", q_ba)):
                seed_m = derive_seed(cfg.seed, "q4", inst.query_id, k_max, tag)
                budget_calls = budget_to_calls(units, q.horizon, None)
                est = run_method(method, q, model, inst.history, budget_calls, seed_m, cfg)
                vals[tag] = est
            unaccounted = 1.0 - (vals["ab"].value + vals["ba"].value)
            rows.append(
                {
                    "row_type": "per_query",
                    "model_id": mid,
                    "method": method,
                    "K": k_max,
                    "budget_units": units,
                    "query_id": inst.query_id,
                    "query_label": q_ab.label,
                    "estimate": unaccounted,
                    "raw_estimate": vals["ab"].value,
                    "std_error": vals["ba"].value,
                    "model_calls": vals["ab"].model_calls + vals["ba"].model_calls,
                    "extra": "estimate=unaccounted raw=ab std_error_col=ba",
                }
            )
    for k_max in cfg.k_max_grid:
        vals = [r["estimate"] for r in rows if r["row_type"] == "per_query" and r["K"] == k_max]
        rows.append(
            {
                "row_type": "summary_mean",
                "model_id": mid,
                "method": method,
                "K": k_max,
                "estimate": sum(vals) / len(vals) if vals else None,
                "extra": f"n={len(vals)}",
            }
        )
    rows.sort(key=_row_sort_key)
    return rows


def run_coverage_width_ablation(cfg: ExperimentConfig, workers: int = 1) -> list[dict]:
    """Realized coverage-search width per depth on K-step marginal queries."""
    model = build_model(cfg.model, cfg.base_dir)
    mid = model_id(cfg.model)
    vocab = model.vocab
    max_k = max(cfg.horizons)
    instances = generate_instances(cfg, model, max_k)
    rows: list[dict] = []
    for inst in instances:
        for K in cfg.horizons:
            query = make_kth_marginal(inst.target(K), K, vocab)
            for alpha in cfg.alphas:
                bs, est, bound = beam_search_coverage(
                    query.parts[0],
                    model,
                    inst.history,
                    alpha,
                    cfg.coverage_schedule,
                    cfg.coverage_width_cap,
                )
                for depth, width in enumerate(bs.widths, start=1):
                    rows.append(
                        {
                            "row_type": "per_depth",
                            "model_id": mid,
                            "method": "beam_search_coverage",
                            "K": K,
                            "query_id": inst.query_id,
                            "query_label": query.label,
                            "estimate": width,
                            "raw_estimate": est.value,
                            "truth": bound,
                            "model_calls": est.model_calls,
                            "extra": f"alpha={alpha} depth={depth} partial={int(bs.partial)}",
                        }
                    )
    rows.sort(key=_row_sort_key)
    return rows


EXPERIMENTS = {
    "rae": run_rae_experiment,
    "budget_sweep": run_budget_sweep,
    "temperature": run_temperature_sweep,
    "relative_efficiency": run_relative_efficiency,
    "q4_unaccounted": run_q4_unaccounted,
    "coverage_widths": run_coverage_width_ablation,
}


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SEQQUERY_WORKERS", "1")))
    except ValueError:
        return 1


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> Path:
    if cfg.experiment not in EXPERIMENTS:
        raise HarnessError(f"unknown experiment {cfg.experiment!r} (choose from {sorted(EXPERIMENTS)})")
    rows = EXPERIMENTS[cfg.experiment](cfg, workers or default_workers())
    out = cfg.output_path()
    write_csv(out, rows, cfg.experiment, cfg.seed)
    return out
