"""Exact enumeration and the sampling estimators.

All estimators report their cost as the model-call counter delta and carry
a per-part breakdown in ``meta['parts']``.  Sampling methods take an
integer seed and derive one Philox substream per (part, draw index), so
results are independent of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..kernels import inverse_cdf_pick
from ..models import SequenceModel, rollout
from ..proposal import Proposal, draw
from ..queries import ProductQuery, Query
from ..rng import derive_seed, substream
from .results import Estimate

NEG_INF = float("-inf")


class QueryTooLarge(ValueError):
    pass


def _part_exact(model: SequenceModel, history, part: ProductQuery) -> float:
    """Sum of path probabilities by depth-first enumeration with shared
    prefixes; zero-probability subtrees are skipped."""
    leaves: list[float] = []
    K = part.horizon

    def visit(prefix: list[int], acc: float, depth: int):
        dist = model.next(history, prefix)
        for v in part.domains[depth]:
            lp = float(dist.logp[v])
            if lp == NEG_INF:
                continue
            if depth + 1 == K:
                leaves.append(math.exp(acc + lp))
            else:
                prefix.append(v)
                visit(prefix, acc + lp, depth + 1)
                prefix.pop()

    visit([], 0.0, 0)
    return math.fsum(leaves)


def exact(query: Query, model: SequenceModel, history, size_cap: int = 10**6) -> Estimate:
    """Exact query probability by enumeration (queries up to ``size_cap``)."""
    n = query.size()
    if n > size_cap:
        raise QueryTooLarge(f"query has {n} paths, cap is {size_cap}")
    calls0 = model.calls
    parts_meta = []
    vals = []
    for i, part in enumerate(query.parts):
        v = _part_exact(model, history, part)
        vals.append(v)
        parts_meta.append({"part": i, "estimate": v, "size": part.size()})
    total = math.fsum(vals)
    return Estimate.make(
        total, None, query.truncated, model.calls - calls0, {"parts": parts_meta, "method": "exact"}
    )


def naive_mc(query: Query, model: SequenceModel, history, S: int, seed: int) -> Estimate:
    """Fraction of S unconstrained rollouts that land in the query."""
    if S < 1:
        raise ValueError(f"need at least one sample, got {S}")
    calls0 = model.calls
    K = query.horizon
    hits = 0
    for i in range(S):
        seq = rollout(model, history, K, substream(seed, i))
        hits += query.contains(seq)
    p = hits / S
    se = math.sqrt(p * (1.0 - p) / S)
    return Estimate.make(
        p, se, False, model.calls - calls0, {"method": "naive_mc", "samples": S, "hits": hits}
    )


def uniform_mc(query: Query, model: SequenceModel, history, S: int, seed: int) -> Estimate:
    """|Q| times the mean model probability of S uniform query members.

    Parts are sampled proportional to size.  The raw estimate may exceed 1;
    the clamped value is reported with the raw value preserved.
    """
    if S < 1:
        raise ValueError(f"need at least one sample, got {S}")
    calls0 = model.calls
    sizes = [p.size() for p in query.parts]
    total_size = sum(sizes)
    cum = np.cumsum([s / total_size for s in sizes])
    weights = np.empty(S)
    part_hits = [0] * len(query.parts)
    for i in range(S):
        gen = substream(seed, i)
        pi = int(np.searchsorted(cum, gen.random(), side="right"))
        pi = min(pi, len(sizes) - 1)
        part = query.parts[pi]
        part_hits[pi] += 1
        logp = 0.0
        prefix: list[int] = []
        for domain in part.domains:
            dist = model.next(history, prefix)
            tok = domain[int(gen.integers(len(domain)))]
            logp += float(dist.logp[tok])
            prefix.append(tok)
        weights[i] = math.exp(logp)
    raw = total_size * float(weights.mean())
    se = total_size * float(weights.std(ddof=1) / math.sqrt(S)) if S > 1 else 0.0
    meta = {
        "method": "uniform_mc",
        "samples": S,
        "parts": [
            {"part": i, "samples": part_hits[i], "size": sizes[i]} for i in range(len(sizes))
        ],
    }
    return Estimate.make(raw, se, False, model.calls - calls0, meta)


def allocate_samples(S: int, query: Query, allocation: str = "equal") -> list[int]:
    """Split a sample budget over parts (equal or size-proportional); every
    part receives at least one draw."""
    n = len(query.parts)
    if S < n:
        raise ValueError(f"S={S} is smaller than the number of parts ({n})")
    if allocation == "equal":
        base, rem = divmod(S, n)
        return [base + (1 if i < rem else 0) for i in range(n)]
    if allocation == "proportional":
        sizes = [p.size() for p in query.parts]
        total = sum(sizes)
        out = [max(1, (S * s) // total) for s in sizes]
        i = 0
        while sum(out) > S:
            j = max(range(n), key=lambda k: out[k])
            if out[j] > 1:
                out[j] -= 1
            else:
                break
        while sum(out) < S:
            out[i % n] += 1
            i += 1
        return out
    raise ValueError(f"unknown allocation {allocation!r}")


def importance_sampling(
    query: Query,
    model: SequenceModel,
    history,
    S: int,
    seed: int,
    allocation: str = "equal",
) -> Estimate:
    """Mean importance weight under the restricted proposal, per part.

    Dead draws (zero restricted mass mid-path) contribute weight zero, which
    keeps the estimator unbiased.
    """
    alloc = allocate_samples(S, query, allocation)
    calls0 = model.calls
    parts_meta = []
    est_terms = []
    var_terms = []
    dead_total = 0
    for i, part in enumerate(query.parts):
        prop = Proposal(model, part, tuple(history))
        part_seed = derive_seed(seed, i)
        w = np.empty(alloc[i])
        dead = 0
        for m in range(alloc[i]):
            rec = draw(prop, substream(part_seed, m))
            w[m] = rec.weight
            dead += rec.dead
        mean_i = float(w.mean())
        var_i = float(w.var(ddof=1)) if alloc[i] > 1 else 0.0
        est_terms.append(mean_i)
        var_terms.append(var_i / alloc[i])
        dead_total += dead
        parts_meta.append(
            {
                "part": i,
                "samples": alloc[i],
                "estimate": mean_i,
                "std_error": math.sqrt(var_i / alloc[i]),
                "dead": dead,
            }
        )
    raw = math.fsum(est_terms)
    se = math.sqrt(math.fsum(var_terms))
    meta = {"method": "importance_sampling", "samples": S, "dead": dead_total, "parts": parts_meta}
    return Estimate.make(raw, se, query.truncated, model.calls - calls0, meta)


@dataclass(frozen=True)
class GroundTruthConfig:
    """Stopping parameters for the surrogate-ground-truth protocol."""

    s_low: int = 10000
    s_high: int = 100000
    check_every: int = 1000
    delta: float = 1e-7

    def __post_init__(self):
        if self.s_low > self.s_high:
            raise ValueError("s_low must be <= s_high")
        if self.delta <= 0:
            raise ValueError("delta must be positive")


def surrogate_ground_truth(
    query: Query,
    model: SequenceModel,
    history,
    cfg: GroundTruthConfig,
    seed: int,
) -> Estimate:
    """High-budget importance sampling accepted as truth once converged.

    Draws S_low samples, then checks the weight-population variance
    (1/S) sum (w - mean)^2 every ``check_every`` additional samples, stopping
    when it falls below ``delta`` or the sample budget S_high is reached.
    """
    n_parts = len(query.parts)
    props = [Proposal(model, p, tuple(history)) for p in query.parts]
    part_seeds = [derive_seed(seed, i) for i in range(n_parts)]
    weights: list[list[float]] = [[] for _ in range(n_parts)]
    calls0 = model.calls

    def draw_block(total: int):
        base, rem = divmod(total, n_parts)
        for i in range(n_parts):
            take = base + (1 if i < rem else 0)
            start = len(weights[i])
            for m in range(start, start + take):
                weights[i].append(draw(props[i], substream(part_seeds[i], m)).weight)

    def stop_variance() -> float:
        return math.fsum(float(np.var(np.asarray(w))) for w in weights if w)

    draw_block(cfg.s_low)
    stop_reason = "budget"
    while True:
        if stop_variance() < cfg.delta:
            stop_reason = "tolerance"
            break
        n_total = sum(len(w) for w in weights)
        if n_total >= cfg.s_high:
            break
        draw_block(min(cfg.check_every, cfg.s_high - n_total))

    parts_meta = []
    est_terms = []
    var_terms = []
    for i, w in enumerate(weights):
        arr = np.asarray(w)
        mean_i = float(arr.mean()) if arr.size else 0.0
        var_i = float(arr.var(ddof=1)) if arr.size > 1 else 0.0
        est_terms.append(mean_i)
        var_terms.append(var_i / max(1, arr.size))
        parts_meta.append({"part": i, "samples": int(arr.size), "estimate": mean_i})
    raw = math.fsum(est_terms)
    se = math.sqrt(math.fsum(var_terms))
    meta = {
        "method": "surrogate_ground_truth",
        "samples": sum(len(w) for w in weights),
        "stop_reason": stop_reason,
        "stop_variance": stop_variance(),
        "parts": parts_meta,
    }
    return Estimate.make(raw, se, query.truncated, model.calls - calls0, meta)
