"""Closed-form and tensor-product query answers for Markov chains.

These serve as the independent verification oracle for the estimators:
``general_query_markov`` marginalizes restricted transition tensors exactly
for any order-m chain, while the Q2-Q4 helpers implement the textbook
first-order forms (the Q3/Q4 "closed forms" aggregate transition behavior
under the stationary distribution and are exact only for chains whose
complement-set dynamics are homogeneous; the recursive/tensor values are
authoritative).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np

from .queries import ProductQuery, Query


class MarkovError(ValueError):
    pass


def _check_matrix(P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise MarkovError(f"transition matrix must be square, got {P.shape}")
    if (P < 0).any() or np.abs(P.sum(axis=1) - 1.0).max() > 1e-12:
        raise MarkovError("rows must be stochastic within 1e-12")
    return P


def is_ergodic(P: np.ndarray) -> tuple[bool, str]:
    """Irreducibility via reachability on positive entries, aperiodicity via
    the gcd of cycle lengths through state 0."""
    P = _check_matrix(P)
    V = P.shape[0]
    adj = P > 0
    reach = np.eye(V, dtype=bool) | adj
    for _ in range(V):
        reach = reach | (reach @ adj)
    if not reach.all():
        return False, "reducible: some state cannot reach some other state"
    # period = gcd over edges u->v of level[u] + 1 - level[v] (BFS levels);
    # exact for irreducible graphs
    level = np.full(V, -1)
    level[0] = 0
    queue = [0]
    while queue:
        u = queue.pop(0)
        for w in np.nonzero(adj[u])[0]:
            if level[w] < 0:
                level[w] = level[u] + 1
                queue.append(int(w))
    period = 0
    for u in range(V):
        for w in np.nonzero(adj[u])[0]:
            period = gcd(period, abs(int(level[u]) + 1 - int(level[w])))
    if period != 1:
        return False, f"periodic: period {period}"
    return True, "ok"


def steady_state(P: np.ndarray) -> np.ndarray:
    """Unique stationary vector of an ergodic chain (linear solve)."""
    P = _check_matrix(P)
    ok, reason = is_ergodic(P)
    if not ok:
        raise MarkovError(f"chain is not ergodic ({reason})")
    V = P.shape[0]
    A = np.vstack([P.T - np.eye(V), np.ones(V)])
    b = np.zeros(V + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    residual = np.abs(pi @ P - pi).max()
    if residual > 1e-10:
        raise MarkovError(f"stationary solve residual {residual} too large")
    return pi


@dataclass(frozen=True)
class MarginalResult:
    dist: np.ndarray
    matmuls: int


def q2_marginal(P: np.ndarray, v: int, K: int) -> MarginalResult:
    """Row v of P^K by K iterated vector-matrix products."""
    P = _check_matrix(P)
    if K < 1:
        raise MarkovError(f"K must be >= 1, got {K}")
    row = np.zeros(P.shape[0])
    row[v] = 1.0
    matmuls = 0
    for _ in range(K):
        row = row @ P
        matmuls += 1
    return MarginalResult(row, matmuls)


@dataclass(frozen=True)
class HittingResult:
    recursive: float
    closed_form: float | None
    closed_form_error: str | None = None


def q3_hitting(P: np.ndarray, v: int, a: int, K: int) -> HittingResult:
    """P(first visit to ``a`` happens at step K | start v), two ways.

    ``recursive`` marginalizes over the complement at every step (exact for
    any chain).  ``closed_form`` is p(a|abar) p(abar|v) p(abar|abar)^(K-2)
    with the abar-aggregated transition probabilities weighted by the
    stationary distribution restricted to the complement; it is None for
    non-ergodic chains.
    """
    P = _check_matrix(P)
    V = P.shape[0]
    if not (0 <= v < V and 0 <= a < V):
        raise MarkovError("states out of range")
    if K < 1:
        raise MarkovError(f"K must be >= 1, got {K}")

    # exact: restricted vector-matrix powers through the complement
    others = [s for s in range(V) if s != a]
    if K == 1:
        recursive = float(P[v, a])
    else:
        w = P[v, others]
        for _ in range(K - 2):
            w = w @ P[np.ix_(others, others)]
        recursive = float(w @ P[others, a])

    closed, err = None, None
    try:
        pi = steady_state(P)
        if K == 1:
            closed = float(P[v, a])
        else:
            pi_bar = pi[others] / pi[others].sum()
            p_a_given_bar = float(pi_bar @ P[others, a])
            p_bar_given_v = float(1.0 - P[v, a])
            closed = p_a_given_bar * p_bar_given_v * (1.0 - p_a_given_bar) ** (K - 2)
    except MarkovError as e:
        err = str(e)
    return HittingResult(recursive, closed, err)


def q4_a_before_b(P: np.ndarray, v: int, a: int, b: int) -> float:
    """Closed form for P(hit ``a`` before ``b`` | start v).

    Uses p(a|v) + p(c|v) p(a|c) / (p(a|c) + p(b|c)) with c the complement
    set and p(.|c) stationary-weighted; the complement identity
    q4(a,b) + q4(b,a) = 1 holds by construction and is asserted.
    """
    P = _check_matrix(P)
    V = P.shape[0]
    if a == b:
        raise MarkovError("a and b must differ")
    if not (0 <= v < V and 0 <= a < V and 0 <= b < V):
        raise MarkovError("states out of range")
    c = [s for s in range(V) if s not in (a, b)]
    if not c:
        return float(P[v, a] / (P[v, a] + P[v, b]))
    pi = steady_state(P)
    pi_c = pi[c] / pi[c].sum()
    p_a_c = float(pi_c @ P[c, a])
    p_b_c = float(pi_c @ P[c, b])
    p_c_v = float(P[v, c].sum())
    value = float(P[v, a]) + p_c_v * p_a_c / (p_a_c + p_b_c)
    mirror = float(P[v, b]) + p_c_v * p_b_c / (p_a_c + p_b_c)
    if abs(value + mirror - 1.0) > 1e-9:
        raise MarkovError(f"complement identity violated: {value} + {mirror} != 1")
    return value


@dataclass(frozen=True)
class GeneralQueryResult:
    value: float
    contractions: int


def _restricted_tensor(tensor: np.ndarray, domain) -> np.ndarray:
    """Zero out transitions leading outside ``domain`` (no renormalization:
    the zeroed tensor accumulates joint restricted probabilities)."""
    out = np.zeros_like(tensor)
    idx = list(domain)
    out[..., idx] = tensor[..., idx]
    return out


def general_query_markov(tensor: np.ndarray, query, history_tail) -> GeneralQueryResult:
    """Exact probability of a product query (or union) for an order-m chain.

    ``tensor`` has shape (V,)*m + (V,); ``history_tail`` supplies the m
    conditioning tokens.  Marginalization contracts restricted transition
    tensors step by step: K-1 contractions per part of horizon K.
    """
    tensor = np.asarray(tensor, dtype=np.float64)
    m = tensor.ndim - 1
    V = tensor.shape[-1]
    rows = tensor.reshape(-1, V)
    if (rows < 0).any() or np.abs(rows.sum(axis=1) - 1.0).max() > 1e-12:
        raise MarkovError("transition tensor rows must be stochastic within 1e-12")
    tail = tuple(history_tail)[-m:]
    if len(tail) < m:
        raise MarkovError(f"history must provide at least {m} conditioning tokens")

    if isinstance(query, ProductQuery):
        parts = [query]
    elif isinstance(query, Query):
        parts = list(query.parts)
    else:
        raise MarkovError(f"unsupported query object {type(query).__name__}")

    total = 0.0
    contractions = 0
    for part in parts:
        for d in part.domains:
            for t in d:
                if not (0 <= t < V):
                    raise MarkovError(f"token {t} outside vocab of size {V}")
        # window[u_1..u_m] = P(last m tokens = u, all constraints so far | tail).
        # The first step is a tensor slice at the history tail; each later
        # step contracts the oldest window index against the restricted
        # transition tensor (horizon-1 contractions of cost V^(m+1)).
        window = np.zeros((V,) * m)
        first = _restricted_tensor(tensor, part.domains[0])[tail]
        if m == 1:
            window = first
        else:
            window[tail[1:]] = first
        for k in range(1, part.horizon):
            step = _restricted_tensor(tensor, part.domains[k])
            window = np.einsum(window, list(range(m)), step, list(range(m + 1)), list(range(1, m + 1)))
            contractions += 1
        total += float(window.sum())
    return GeneralQueryResult(total, contractions)
