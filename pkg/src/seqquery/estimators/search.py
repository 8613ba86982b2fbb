"""Beam-search estimators, the pruned proposal tree, and the hybrid method.

Search runs inside the restricted proposal: at each depth candidates are
expansions of the current beams into the step's allowed tokens.  Three
pruning rules are provided: fixed width, minimal coverage (keep the
smallest set whose proposal mass reaches a target), and tail-splitting
(variance-minimizing two-cluster split of the candidate weights, applied
when the candidate count exceeds the width cap).  The hybrid estimator adds
importance sampling of the query remainder under the proposal conditioned
away from the found beams, realized by pruning the tree of conditionals
recorded during search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..kernels import inverse_cdf_pick, restrict_logp
from ..models import SequenceModel
from ..proposal import Proposal, draw
from ..queries import ProductQuery, Query
from ..rng import derive_seed, substream
from .results import Estimate

NEG_INF = float("-inf")


class Beam(NamedTuple):
    seq: tuple[int, ...]
    log_p: float
    log_q: float


@dataclass
class BeamSet:
    """Final beams of one part with realized proposal coverage."""

    beams: list[Beam]
    coverage: float
    horizon_complete: bool
    widths: list[int] = field(default_factory=list)
    partial: bool = False

    def value(self) -> float:
        return math.fsum(math.exp(b.log_p) for b in self.beams)


@dataclass
class TreeNode:
    """Conditionals observed when a prefix was expanded during search."""

    p_logp: np.ndarray
    domain: np.ndarray
    q_probs: np.ndarray  # restricted conditional over ``domain`` tokens
    rho: float


class ProposalTree:
    """Partial view of the proposal over one part, built during search.

    After ``prune(completed)`` the tree represents the proposal conditioned
    on avoiding the completed beams: edges into completed leaves carry
    weight zero, interior edges are scaled by the surviving mass of their
    subtree, and every altered conditional is renormalized.
    """

    def __init__(self, part: ProductQuery, history: tuple[int, ...]):
        self.part = part
        self.history = history
        self.horizon = part.horizon
        self.nodes: dict[tuple[int, ...], TreeNode] = {}
        self.pruned: dict[tuple[int, ...], np.ndarray] = {}
        self.survive: dict[tuple[int, ...], float] = {}
        self.completed: frozenset = frozenset()

    def add_node(self, prefix: tuple[int, ...], p_logp, domain, q_logp, rho):
        self.nodes[prefix] = TreeNode(
            p_logp=np.array(p_logp), domain=np.asarray(domain, dtype=np.int64),
            q_probs=np.exp(q_logp[domain]), rho=rho,
        )

    def prune(self, completed) -> float:
        """Condition the tree away from ``completed``; returns the surviving
        root mass q(part \\ completed)."""
        self.completed = frozenset(tuple(s) for s in completed)
        self.pruned.clear()
        self.survive.clear()
        K = self.horizon
        for prefix in sorted(self.nodes, key=len, reverse=True):
            node = self.nodes[prefix]
            adj = node.q_probs.copy()
            for j, v in enumerate(node.domain):
                child = prefix + (int(v),)
                if len(child) == K:
                    if child in self.completed:
                        adj[j] = 0.0
                elif child in self.nodes:
                    adj[j] *= self.survive[child]
            s = float(adj.sum())
            self.survive[prefix] = s
            self.pruned[prefix] = adj / s if s > 0 else adj
        return self.survive.get((), 0.0)

    def root_mass(self) -> float:
        return self.survive.get((), 0.0)

    def min_frontier_depth(self) -> int | None:
        """Shortest reachable unexpanded prefix length (None if the pruned
        tree reaches the horizon everywhere)."""
        best = None
        for prefix, node in self.nodes.items():
            probs = self.pruned.get(prefix)
            if probs is None or self.survive.get(prefix, 0.0) <= 0:
                continue
            for j, v in enumerate(node.domain):
                child = prefix + (int(v),)
                if len(child) < self.horizon and child not in self.nodes and probs[j] > 0:
                    d = len(child)
                    best = d if best is None else min(best, d)
        return best

    def expected_completion_calls(self) -> float:
        """Expected plain-proposal model calls per sample from the pruned
        tree (tree descent itself costs no calls)."""
        if self.root_mass() <= 0:
            return 0.0

        def walk(prefix: tuple[int, ...], reach: float) -> float:
            node = self.nodes.get(prefix)
            if node is None:
                return reach * (self.horizon - len(prefix))
            probs = self.pruned[prefix]
            total = 0.0
            for j, v in enumerate(node.domain):
                if probs[j] <= 0:
                    continue
                total += walk(prefix + (int(v),), reach * float(probs[j]))
            return total

        return walk((), 1.0)


def _expand(model: SequenceModel, history, part: ProductQuery, beams: list[Beam], depth: int, tree: ProposalTree | None):
    """One-step expansion of all beams into the depth's allowed tokens."""
    domain = np.asarray(part.domains[depth], dtype=np.int64)
    cands: list[Beam] = []
    for beam in beams:
        dist = model.next(history, list(beam.seq))
        q_logp, rho = restrict_logp(dist.logp, domain)
        if tree is not None:
            tree.add_node(beam.seq, dist.logp, domain, q_logp, rho)
        if rho == NEG_INF:
            continue
        for v in domain:
            lq = float(q_logp[v])
            if lq == NEG_INF:
                continue
            cands.append(Beam(beam.seq + (int(v),), beam.log_p + float(dist.logp[v]), beam.log_q + lq))
    return cands


def beam_search_fixed(part: ProductQuery, model: SequenceModel, history, B: int) -> tuple[BeamSet, Estimate]:
    """Width-B beam search ranked by proposal likelihood; lower bound."""
    if B < 1:
        raise ValueError(f"beam width must be >= 1, got {B}")
    calls0 = model.calls
    history = tuple(history)
    beams = [Beam((), 0.0, 0.0)]
    widths = []
    for depth in range(part.horizon):
        cands = _expand(model, history, part, beams, depth, None)
        cands.sort(key=lambda c: (-c.log_q, c.seq))
        beams = cands[:B]
        widths.append(len(beams))
        if not beams:
            break
    bs = BeamSet(beams, math.fsum(math.exp(b.log_q) for b in beams), len(widths) == part.horizon and bool(beams), widths)
    est = Estimate.make(
        bs.value(), None, True, model.calls - calls0,
        {"method": "beam_search_fixed", "coverage": bs.coverage, "widths": widths},
    )
    return bs, est


def coverage_schedule(alpha: float, K: int, schedule: str) -> list[float]:
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if schedule == "constant":
        return [alpha] * K
    if schedule == "geometric":
        return [alpha ** (k / K) for k in range(1, K + 1)]
    raise ValueError(f"unknown schedule {schedule!r} (constant|geometric)")


def beam_search_coverage(
    part: ProductQuery,
    model: SequenceModel,
    history,
    alpha: float,
    schedule: str = "geometric",
    width_cap: int = 100000,
) -> tuple[BeamSet, Estimate, float]:
    """Keep the smallest beam set whose cumulative proposal mass reaches the
    per-depth coverage target.

    Returns the beams, the lower-bound estimate, and the error bound
    1 - realized coverage.  If a depth would need more than ``width_cap``
    beams the result is truncated and flagged partial.
    """
    calls0 = model.calls
    history = tuple(history)
    targets = coverage_schedule(alpha, part.horizon, schedule)
    beams = [Beam((), 0.0, 0.0)]
    widths = []
    partial = False
    for depth in range(part.horizon):
        cands = _expand(model, history, part, beams, depth, None)
        cands.sort(key=lambda c: (-c.log_q, c.seq))
        target = targets[depth]
        acc = 0.0
        keep = len(cands)
        for i, c in enumerate(cands):
            acc += math.exp(c.log_q)
            if acc >= target:
                keep = i + 1
                break
        if keep > width_cap:
            keep = width_cap
            partial = True
        beams = cands[:keep]
        widths.append(len(beams))
        if not beams:
            break
    coverage = math.fsum(math.exp(b.log_q) for b in beams)
    bound = 1.0 - coverage
    bs = BeamSet(beams, coverage, len(widths) == part.horizon and bool(beams), widths, partial)
    est = Estimate.make(
        bs.value(), None, True, model.calls - calls0,
        {
            "method": "beam_search_coverage",
            "alpha": alpha,
            "schedule": schedule,
            "coverage": coverage,
            "bound": bound,
            "widths": widths,
            "partial": partial,
        },
    )
    return bs, est, bound


def choose_split(weights: np.ndarray) -> int:
    """Split index minimizing the summed population variances of head and
    tail clusters of a descending weight vector; ties pick the smallest
    head.  A single candidate is its own head."""
    n = len(weights)
    if n < 2:
        return n
    w = np.asarray(weights, dtype=np.float64)
    s1 = np.cumsum(w)
    s2 = np.cumsum(w * w)
    total1, total2 = s1[-1], s2[-1]
    # scores within round-off of each other count as ties (smallest b wins)
    tol = 1e-12 * max(float(w[0]) ** 2, 1e-300)
    best_b, best = 1, math.inf
    for b in range(1, n):
        head = s2[b - 1] / b - (s1[b - 1] / b) ** 2
        m = n - b
        tail = (total2 - s2[b - 1]) / m - ((total1 - s1[b - 1]) / m) ** 2
        score = head + tail
        if score < best - tol:
            best, best_b = score, b
    return best_b


def beam_search_tail_split(
    part: ProductQuery,
    model: SequenceModel,
    history,
    width_cap: int,
    depth_budget: int | None = None,
) -> tuple[BeamSet, ProposalTree]:
    """Tail-splitting beam search: candidates sorted by joint model weight;
    when they outnumber the width cap, keep the low-variance head cluster
    (capped).  Records every observed conditional into a ProposalTree."""
    if width_cap < 1:
        raise ValueError(f"width cap must be >= 1, got {width_cap}")
    history = tuple(history)
    tree = ProposalTree(part, history)
    depth_limit = part.horizon if depth_budget is None else min(depth_budget, part.horizon)
    beams = [Beam((), 0.0, 0.0)]
    widths = []
    for depth in range(depth_limit):
        cands = _expand(model, history, part, beams, depth, tree)
        cands.sort(key=lambda c: (-c.log_p, c.seq))
        if len(cands) > width_cap:
            w = np.array([math.exp(c.log_p) for c in cands])
            keep = min(choose_split(w), width_cap)
            beams = cands[:keep]
        else:
            beams = cands
        widths.append(len(beams))
        if not beams:
            break
    coverage = math.fsum(math.exp(b.log_q) for b in beams)
    bs = BeamSet(beams, coverage, depth_limit == part.horizon and bool(beams), widths)
    return bs, tree


def sample_remainder(tree: ProposalTree, model: SequenceModel, gen: np.random.Generator):
    """Draw one path from the pruned tree; descending the tree costs no
    model calls, plain-proposal continuation beyond the frontier costs one
    call per remaining step.  Returns (weight, model_calls)."""
    part, history, K = tree.part, tree.history, tree.horizon
    prefix: tuple[int, ...] = ()
    log_q = 0.0
    log_p = 0.0
    calls = 0
    depth = 0
    while depth < K:
        node = tree.nodes.get(prefix)
        if node is not None:
            probs = tree.pruned[prefix]
            j = inverse_cdf_pick(probs, gen.random())
            v = int(node.domain[j])
            log_q += math.log(probs[j])
            log_p += float(node.p_logp[v])
            prefix += (v,)
            depth += 1
        else:
            dom = np.asarray(part.domains[depth], dtype=np.int64)
            dist = model.next(history, list(prefix))
            calls += 1
            q_logp, rho = restrict_logp(dist.logp, dom)
            if rho == NEG_INF:
                return 0.0, calls
            v = int(dom[inverse_cdf_pick(np.exp(q_logp[dom]), gen.random())])
            log_q += float(q_logp[v])
            log_p += float(dist.logp[v])
            prefix += (v,)
            depth += 1
    return math.exp(log_p - log_q), calls


def hybrid(
    query: Query,
    model: SequenceModel,
    history,
    S: int,
    width_cap: int,
    seed: int,
    budget_calls: int | None = None,
) -> Estimate:
    """Tail-split beam lower bound plus importance sampling of the
    remainder under the pruned proposal tree.

    With S=0 this degenerates to the tail-split lower bound; when the beams
    exhaust a part the remainder is exactly zero and no samples are spent.
    ``budget_calls`` optionally caps the whole run by total model calls
    instead of a fixed S: the search runs first and sampling consumes what
    remains (used for budget-matched comparisons).
    """
    if S < 0:
        raise ValueError(f"S must be >= 0, got {S}")
    calls0 = model.calls
    history = tuple(history)
    n_parts = len(query.parts)
    states = []
    for i, part in enumerate(query.parts):
        bs, tree = beam_search_tail_split(part, model, history, width_cap)
        root = tree.prune([b.seq for b in bs.beams])
        states.append((bs, tree, root))
    search_calls = model.calls - calls0
    sample_budget_calls = None if budget_calls is None else max(0, budget_calls - search_calls)

    base, rem = divmod(S, n_parts) if S else (0, 0)
    alloc = [base + (1 if i < rem else 0) for i in range(n_parts)]
    worst = []
    for bs, tree, root in states:
        d = tree.min_frontier_depth()
        worst.append(tree.horizon - d if d is not None else 0)

    parts_meta = []
    est_terms = []
    var_terms = []
    sample_calls = 0
    for i, (bs, tree, root) in enumerate(states):
        beam_val = bs.value()
        part_seed = derive_seed(seed, i)
        weights = []
        if root > 0.0:
            m = 0
            while True:
                if sample_budget_calls is None:
                    if m >= alloc[i]:
                        break
                else:
                    # stop before a worst-case continuation could overrun;
                    # zero-cost samples (fully expanded tree) are capped at
                    # the call budget itself
                    if worst[i] > 0 and sample_calls + worst[i] > sample_budget_calls:
                        break
                    if worst[i] == 0 and m >= sample_budget_calls:
                        break
                w, c = sample_remainder(tree, model, substream(part_seed, m))
                weights.append(w)
                sample_calls += c
                m += 1
        arr = np.asarray(weights)
        rem_mean = float(arr.mean()) if arr.size else 0.0
        rem_var = float(arr.var(ddof=1)) if arr.size > 1 else 0.0
        est_terms.append(beam_val + rem_mean)
        var_terms.append(rem_var / max(1, arr.size))
        parts_meta.append(
            {
                "part": i,
                "beam_value": beam_val,
                "coverage": bs.coverage,
                "remainder": rem_mean,
                "samples": int(arr.size),
                "remainder_mass_q": root,
                "expected_completion_calls": tree.expected_completion_calls(),
            }
        )
    raw = math.fsum(est_terms)
    sampled = any(p["samples"] for p in parts_meta)
    se = math.sqrt(math.fsum(var_terms)) if sampled else 0.0
    lower = query.truncated or not sampled
    meta = {
        "method": "hybrid",
        "width_cap": width_cap,
        "search_calls": search_calls,
        "sample_calls": model.calls - calls0 - search_calls,
        "parts": parts_meta,
    }
    return Estimate.make(raw, se, lower, model.calls - calls0, meta)


def admission_diagnostic(beam_set: BeamSet) -> list[dict]:
    """Per-beam right-hand-side quantities of the variance-reduction
    admission inequality (search byproducts; reported for analysis only,
    never used in pruning decisions)."""
    coverage = beam_set.coverage
    out = []
    for b in beam_set.beams:
        p = math.exp(b.log_p)
        rho = math.exp(b.log_p - b.log_q)
        out.append({"seq": list(b.seq), "p": p, "rho": rho, "rhs": (1.0 - coverage) * rho + p})
    return out
