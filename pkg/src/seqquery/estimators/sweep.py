"""Shared-prefix sweep over a hitting-time family.

The hitting-time queries tau(A)=k for k=1..K share their first k-1
restricted domains, so one pass to horizon K yields estimates for every
shorter horizon: the complement-restricted prefix draws (or beams) are
reused and the final step of each sub-query needs only the target-set mass
of a conditional that the pass computed anyway.  Per-k importance-sampling
values are bit-identical to standalone runs with the same seed; beam sets
match standalone searches (constant coverage schedule only).  The hybrid
method restricts the sampled path space further and cannot share
intermediate results; it is rejected.
"""

from __future__ import annotations

import math

import numpy as np

from ..kernels import inverse_cdf_pick, restrict_logp
from ..models import SequenceModel
from ..queries import Vocab, make_hitting_time
from ..rng import derive_seed, substream
from .results import Estimate
from .search import Beam, coverage_schedule

NEG_INF = float("-inf")


def _family_domains(A, vocab: Vocab):
    target = np.asarray(sorted(set(int(a) for a in A)), dtype=np.int64)
    comp = np.asarray([t for t in vocab.tokens if t not in set(target.tolist())], dtype=np.int64)
    if target.size == 0:
        raise ValueError("target set must be nonempty")
    if comp.size == 0:
        raise ValueError("target set must be a strict subset of the vocabulary")
    return target, comp


def _sweep_is(A, K, model, history, S, seed) -> list[Estimate]:
    target, comp = _family_domains(A, model.vocab)
    part_seed = derive_seed(seed, 0)
    calls0 = model.calls
    weights = np.zeros((S, K))
    for m in range(S):
        gen = substream(part_seed, m)
        prefix: list[int] = []
        log_rho = 0.0
        for k in range(1, K + 1):
            dist = model.next(history, prefix)
            _, rho_a = restrict_logp(dist.logp, target)
            if rho_a > NEG_INF:
                weights[m, k - 1] = math.exp(log_rho + rho_a)
            if k == K:
                break
            q_logp, rho_c = restrict_logp(dist.logp, comp)
            if rho_c == NEG_INF:
                break  # dead branch: deeper horizons keep weight zero
            u = gen.random()
            tok = int(comp[inverse_cdf_pick(np.exp(q_logp[comp]), u)])
            prefix.append(tok)
            log_rho += rho_c
    total_calls = model.calls - calls0
    out = []
    for k in range(1, K + 1):
        w = weights[:, k - 1]
        mean = float(w.mean())
        var = float(w.var(ddof=1)) if S > 1 else 0.0
        se = math.sqrt(var / S)
        meta = {
            "method": "importance_sampling",
            "swept": True,
            "samples": S,
            "parts": [{"part": 0, "samples": S, "estimate": mean, "std_error": se}],
        }
        out.append(Estimate.make(mean, se, False, total_calls, meta))
    return out


def _sweep_beam(A, K, model, history, seed, B=None, alpha=None, schedule="constant") -> list[Estimate]:
    target, comp = _family_domains(A, model.vocab)
    fixed = B is not None
    if not fixed:
        targets = coverage_schedule(alpha, K, schedule)
    calls0 = model.calls
    trunk = [Beam((), 0.0, 0.0)]
    out = []
    for k in range(1, K + 1):
        expansions = []
        for beam in trunk:
            dist = model.next(history, list(beam.seq))
            expansions.append((beam, dist.logp))
        # final step of tau(A)=k: candidates land in the target set
        cand_a: list[Beam] = []
        for beam, logp in expansions:
            qa, rho_a = restrict_logp(logp, target)
            if rho_a == NEG_INF:
                continue
            for v in target:
                if qa[v] == NEG_INF:
                    continue
                cand_a.append(Beam(beam.seq + (int(v),), beam.log_p + float(logp[v]), beam.log_q + float(qa[v])))
        cand_a.sort(key=lambda c: (-c.log_q, c.seq))
        if fixed:
            final = cand_a[:B]
        else:
            acc, keep = 0.0, len(cand_a)
            for i, c in enumerate(cand_a):
                acc += math.exp(c.log_q)
                if acc >= targets[k - 1]:
                    keep = i + 1
                    break
            final = cand_a[:keep]
        value = math.fsum(math.exp(c.log_p) for c in final)
        coverage = math.fsum(math.exp(c.log_q) for c in final)
        meta = {
            "method": "beam_search_fixed" if fixed else "beam_search_coverage",
            "swept": True,
            "coverage": coverage,
            "beams": [list(c.seq) for c in final],
        }
        if not fixed:
            meta["bound"] = 1.0 - coverage
        out.append(Estimate.make(value, None, True, 0, meta))
        if k == K:
            break
        # continue the trunk through the complement
        cand_c: list[Beam] = []
        for beam, logp in expansions:
            qc, rho_c = restrict_logp(logp, comp)
            if rho_c == NEG_INF:
                continue
            for v in comp:
                if qc[v] == NEG_INF:
                    continue
                cand_c.append(Beam(beam.seq + (int(v),), beam.log_p + float(logp[v]), beam.log_q + float(qc[v])))
        cand_c.sort(key=lambda c: (-c.log_q, c.seq))
        if fixed:
            trunk = cand_c[:B]
        else:
            acc, keep = 0.0, len(cand_c)
            for i, c in enumerate(cand_c):
                acc += math.exp(c.log_q)
                if acc >= targets[k - 1]:
                    keep = i + 1
                    break
            trunk = cand_c[:keep]
        if not trunk:
            for k2 in range(k + 1, K + 1):
                out.append(Estimate.make(0.0, None, True, 0, {"method": meta["method"], "swept": True, "dead": True}))
            break
    total_calls = model.calls - calls0
    for est in out:
        est.model_calls = total_calls
    return out


def shared_prefix_sweep(
    A,
    K: int,
    model: SequenceModel,
    history,
    method: str,
    *,
    S: int | None = None,
    B: int | None = None,
    alpha: float | None = None,
    schedule: str = "constant",
    seed: int = 0,
) -> list[Estimate]:
    """Estimates of tau(A)=k for every k=1..K from a single horizon-K pass.

    ``model_calls`` on each returned Estimate is the shared total for the
    whole family (at most the cost of the standalone k=K run).
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    history = tuple(history)
    if method == "importance_sampling":
        if not S or S < 1:
            raise ValueError("importance-sampling sweep needs S >= 1")
        return _sweep_is(A, K, model, history, S, seed)
    if method == "beam_search_fixed":
        if not B or B < 1:
            raise ValueError("fixed beam sweep needs B >= 1")
        return _sweep_beam(A, K, model, history, seed, B=B)
    if method == "beam_search_coverage":
        if alpha is None:
            raise ValueError("coverage beam sweep needs alpha")
        if schedule != "constant":
            raise ValueError("coverage sweep shares prefixes only under the constant schedule")
        return _sweep_beam(A, K, model, history, seed, alpha=alpha, schedule=schedule)
    if method == "hybrid":
        raise ValueError("hybrid restricts the sampled path space per query; prefix reuse does not apply")
    raise ValueError(f"unknown sweep method {method!r}")
