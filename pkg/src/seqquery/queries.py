"""Query algebra: disjoint unions of per-step restricted-domain products.

A query is a subset of the length-K path space expressed as a union of
"product parts", each part being a cross product of per-step allowed token
sets.  Constructors cover the standard question types: the K-step marginal,
hitting times, "A before B" (as an explicit truncation of the infinite
union), and event counts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

SIZE_SATURATION = 2**63 - 1


class QueryError(ValueError):
    """Raised for malformed queries or out-of-range tokens."""


@dataclass(frozen=True)
class Vocab:
    """Dense zero-based token alphabet of size V."""

    size: int

    def __post_init__(self):
        if self.size < 2:
            raise QueryError(f"vocab size must be >= 2, got {self.size}")

    def check_token(self, t: int) -> int:
        if not (0 <= t < self.size):
            raise QueryError(f"token {t} out of range for vocab of size {self.size}")
        return t

    @property
    def tokens(self) -> range:
        return range(self.size)


def _normalize_domain(domain: Iterable[int]) -> tuple[int, ...]:
    toks = tuple(sorted(set(int(t) for t in domain)))
    if not toks:
        raise QueryError("restricted domain must be nonempty")
    if toks[0] < 0:
        raise QueryError(f"negative token id {toks[0]}")
    return toks


@dataclass(frozen=True)
class ProductQuery:
    """One product part: an ordered tuple of sorted allowed-token tuples."""

    domains: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.domains) < 1:
            raise QueryError("product query needs horizon >= 1")
        object.__setattr__(self, "domains", tuple(_normalize_domain(d) for d in self.domains))

    @property
    def horizon(self) -> int:
        return len(self.domains)

    def size(self) -> int:
        n = 1
        for d in self.domains:
            n *= len(d)
        return n

    def contains(self, seq: Sequence[int]) -> bool:
        if len(seq) != self.horizon:
            raise QueryError(f"sequence length {len(seq)} != part horizon {self.horizon}")
        return all(t in d for t, d in zip(seq, self._domain_sets))

    @property
    def _domain_sets(self) -> tuple[frozenset, ...]:
        return tuple(frozenset(d) for d in self.domains)


def parts_overlap(a: ProductQuery, b: ProductQuery) -> bool:
    """Whether two parts admit a common path.

    Parts of equal horizon overlap iff every stepwise domain intersection is
    nonempty.  Parts of different horizons are prefix events; they overlap
    iff the intersections are nonempty through the shorter horizon.
    """
    k = min(a.horizon, b.horizon)
    return all(set(a.domains[i]) & set(b.domains[i]) for i in range(k))


@dataclass(frozen=True)
class Query:
    """Union of pairwise-disjoint product parts.

    ``truncated`` marks queries (like "A before B") that stand for an
    explicit lower-bound truncation of an infinite union; estimators
    propagate it into their lower-bound flags.
    """

    parts: tuple[ProductQuery, ...]
    label: str = ""
    truncated: bool = False

    def __post_init__(self):
        if not self.parts:
            raise QueryError("query needs at least one part")
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def horizon(self) -> int:
        return max(p.horizon for p in self.parts)

    def size(self) -> int:
        return sum(p.size() for p in self.parts)

    def saturated_size(self) -> tuple[int, bool]:
        """Size clamped to 2^63-1 for display, with an overflow flag."""
        n = self.size()
        return (min(n, SIZE_SATURATION), n > SIZE_SATURATION)

    def contains(self, seq: Sequence[int]) -> bool:
        """Membership of a length-``horizon`` path (prefix semantics for
        parts shorter than the query horizon)."""
        if len(seq) != self.horizon:
            raise QueryError(f"sequence length {len(seq)} != query horizon {self.horizon}")
        return any(p.contains(list(seq[: p.horizon])) for p in self.parts)

    def validate_partition(self) -> list[tuple[int, int]]:
        """Indices of part pairs that admit a common path (empty = ok)."""
        bad = []
        for i in range(len(self.parts)):
            for j in range(i + 1, len(self.parts)):
                if parts_overlap(self.parts[i], self.parts[j]):
                    bad.append((i, j))
        return bad

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "K": self.horizon,
            "parts": [[list(d) for d in p.domains] for p in self.parts],
            "label": self.label,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Query":
        doc = json.loads(text)
        parts = tuple(ProductQuery(tuple(tuple(d) for d in raw)) for raw in doc["parts"])
        q = cls(parts=parts, label=doc.get("label", ""))
        if q.horizon != doc["K"]:
            raise QueryError(f"declared horizon {doc['K']} != parts horizon {q.horizon}")
        return q


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def _as_token_set(tokens, vocab: Vocab) -> tuple[int, ...]:
    if isinstance(tokens, int):
        tokens = [tokens]
    toks = _normalize_domain(tokens)
    for t in toks:
        vocab.check_token(t)
    return toks


def make_kth_marginal(a: int, K: int, vocab: Vocab) -> Query:
    """Probability that step K equals token ``a``: full domains then {a}."""
    if K < 1:
        raise QueryError(f"horizon must be >= 1, got {K}")
    target = _as_token_set(a, vocab)
    full = tuple(vocab.tokens)
    part = ProductQuery(tuple([full] * (K - 1)) + (target,))
    return Query((part,), label=f"marginal(a={list(target)}, K={K})")


def make_hitting_time(A, K: int, vocab: Vocab) -> Query:
    """First visit to the set A happens exactly at step K."""
    if K < 1:
        raise QueryError(f"horizon must be >= 1, got {K}")
    target = _as_token_set(A, vocab)
    rest = tuple(t for t in vocab.tokens if t not in target)
    if not rest and K > 1:
        raise QueryError("hitting-time complement is empty; K > 1 impossible")
    part = ProductQuery(tuple([rest] * (K - 1)) + (target,))
    return Query((part,), label=f"tau({list(target)})={K}")


def make_a_before_b(A, B, K_max: int, vocab: Vocab) -> Query:
    """A occurs before B, truncated to first hits within ``K_max`` steps.

    Part i constrains the first i-1 steps away from both sets and step i
    into A; parts keep their natural horizons (no padding), so estimators
    sum per-part estimates.  The result is an explicit lower bound of the
    untruncated event.
    """
    if K_max < 1:
        raise QueryError(f"K_max must be >= 1, got {K_max}")
    a_set = _as_token_set(A, vocab)
    b_set = _as_token_set(B, vocab)
    if set(a_set) & set(b_set):
        raise QueryError(f"A and B overlap: {sorted(set(a_set) & set(b_set))}")
    neither = tuple(t for t in vocab.tokens if t not in a_set and t not in b_set)
    if not neither and K_max > 1:
        raise QueryError("V \\ (A u B) is empty; only K_max = 1 is representable")
    parts = []
    for i in range(1, K_max + 1):
        parts.append(ProductQuery(tuple([neither] * (i - 1)) + (a_set,)))
    return Query(
        tuple(parts),
        label=f"tau({list(a_set)})<tau({list(b_set)})|K_max={K_max}",
        truncated=True,
    )


def make_count(a: int, n: int, K: int, vocab: Vocab) -> Query:
    """Token ``a`` occurs exactly n times in the next K steps."""
    if K < 1:
        raise QueryError(f"horizon must be >= 1, got {K}")
    if not (0 <= n <= K):
        raise QueryError(f"count n={n} outside [0, K={K}]")
    target = _as_token_set(a, vocab)
    other = tuple(t for t in vocab.tokens if t not in target)
    if not other and n < K:
        raise QueryError("complement empty: token must occur at every step")
    parts = []
    for pos in combinations(range(K), n):
        chosen = set(pos)
        parts.append(ProductQuery(tuple(target if k in chosen else other for k in range(K))))
    return Query(tuple(parts), label=f"count(a={list(target)}, n={n}, K={K})")
