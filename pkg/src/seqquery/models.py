"""Sequence models: the autoregressive interface plus built-in models.

Every model exposes ``next(history, prefix) -> Distribution`` and counts
each call; the call counter is the universal computation-budget unit used
by the estimators.  All probability arithmetic is carried in natural-log
space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .kernels import fnv1a_tokens, inverse_cdf_pick, mixer_logp
from .queries import QueryError, Vocab

NEG_INF = float("-inf")
_NORM_TOL = 1e-9


class ModelError(ValueError):
    pass


def logsumexp(v: np.ndarray) -> float:
    m = v.max()
    if m == NEG_INF:
        return NEG_INF
    return float(m + np.log(np.exp(v - m).sum()))


@dataclass(frozen=True)
class Distribution:
    """Log-probability vector over the vocabulary; validated to normalize."""

    logp: np.ndarray

    def __post_init__(self):
        lp = np.asarray(self.logp, dtype=np.float64)
        object.__setattr__(self, "logp", lp)
        if lp.ndim != 1 or lp.shape[0] < 2:
            raise ModelError(f"distribution needs a 1-D vector of size >= 2, got {lp.shape}")
        if np.isnan(lp).any() or lp.max() > _NORM_TOL:
            raise ModelError("log-probabilities must be <= 0 and not NaN")
        z = logsumexp(lp)
        if abs(z) > _NORM_TOL:
            raise ModelError(f"distribution does not normalize: logsumexp = {z}")

    @property
    def size(self) -> int:
        return self.logp.shape[0]

    def probs(self) -> np.ndarray:
        return np.exp(self.logp)

    @classmethod
    def from_probs(cls, p) -> "Distribution":
        p = np.asarray(p, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return cls(np.log(p / p.sum()))

    @classmethod
    def from_logits(cls, logits) -> "Distribution":
        logits = np.asarray(logits, dtype=np.float64)
        return cls(logits - logsumexp(logits))


def apply_temperature(dist: Distribution, T: float) -> Distribution:
    """Sharpen (T<1) or flatten (T>1) a distribution: p^(1/T), renormalized."""
    if T <= 0:
        raise ModelError(f"temperature must be positive, got {T}")
    if T == 1.0:
        return dist
    scaled = dist.logp / T
    return Distribution(scaled - logsumexp(scaled))


class SequenceModel:
    """Autoregressive next-token model over a dense token vocabulary.

    Subclasses implement ``_next_logp``; ``next`` validates inputs, bumps
    the call counter by exactly one, and wraps the result.  Models are
    deterministic: identical (history, prefix) pairs yield identical
    distributions.
    """

    def __init__(self, vocab: Vocab):
        self.vocab = vocab
        self.calls = 0

    def _next_logp(self, context: tuple[int, ...]) -> np.ndarray:
        raise NotImplementedError

    def next(self, history: Sequence[int], prefix: Sequence[int]) -> Distribution:
        context = self._check_context(history, prefix)
        self.calls += 1
        return Distribution(self._next_logp(context))

    def _check_context(self, history, prefix) -> tuple[int, ...]:
        context = tuple(history) + tuple(prefix)
        for t in context:
            self.vocab.check_token(t)
        return context

    def name(self) -> str:
        return type(self).__name__

    def spawn(self) -> "SequenceModel":
        """Fresh instance with the same parameters and a zero call counter
        (per-worker counters are merged by summing reported calls)."""
        raise NotImplementedError


def sequence_logprob(model: SequenceModel, history: Sequence[int], seq: Sequence[int]) -> float:
    """Joint log-probability of ``seq`` after ``history``; |seq| model calls."""
    if len(seq) == 0:
        raise ModelError("sequence must be nonempty")
    total = 0.0
    prefix: list[int] = []
    for t in seq:
        dist = model.next(history, prefix)
        model.vocab.check_token(t)
        total += float(dist.logp[t])
        prefix.append(t)
    return total


def rollout(model: SequenceModel, history: Sequence[int], K: int, gen: np.random.Generator) -> list[int]:
    """Sample K unconstrained steps; one uniform consumed per step."""
    prefix: list[int] = []
    for _ in range(K):
        dist = model.next(history, prefix)
        u = gen.random()
        prefix.append(inverse_cdf_pick(np.exp(dist.logp), u))
    return prefix


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------


class UniformModel(SequenceModel):
    """Every conditional is uniform over the vocabulary."""

    def __init__(self, V: int):
        super().__init__(Vocab(V))
        self._logp = np.full(V, -math.log(V))

    def _next_logp(self, context):
        return self._logp

    def spawn(self):
        return UniformModel(self.vocab.size)


class MarkovSequenceModel(SequenceModel):
    """Order-m Markov chain exposed through the sequence-model interface.

    ``tensor`` has shape (V,)*m + (V,) with row-stochastic last axis.  The
    conditioning context must supply at least m tokens.
    """

    def __init__(self, tensor: np.ndarray, order: int | None = None):
        tensor = np.asarray(tensor, dtype=np.float64)
        m = tensor.ndim - 1 if order is None else order
        if tensor.ndim != m + 1:
            raise ModelError(f"tensor rank {tensor.ndim} != order+1 = {m + 1}")
        V = tensor.shape[-1]
        if tensor.shape != (V,) * (m + 1):
            raise ModelError(f"tensor must be square over the vocab, got {tensor.shape}")
        rows = tensor.reshape(-1, V)
        if (rows < 0).any() or np.abs(rows.sum(axis=1) - 1.0).max() > 1e-12:
            raise ModelError("transition tensor rows must be stochastic within 1e-12")
        super().__init__(Vocab(V))
        self.order = m
        self.tensor = tensor
        with np.errstate(divide="ignore"):
            self._log_tensor = np.log(tensor)

    @property
    def matrix(self) -> np.ndarray:
        if self.order != 1:
            raise ModelError("matrix view only defined for first-order chains")
        return self.tensor

    def _next_logp(self, context):
        if len(context) < self.order:
            raise ModelError(
                f"order-{self.order} chain needs >= {self.order} conditioning tokens, got {len(context)}"
            )
        idx = context[len(context) - self.order :]
        return self._log_tensor[idx]

    def spawn(self):
        return MarkovSequenceModel(self.tensor, self.order)

    def to_json(self) -> str:
        if self.order != 1:
            raise ModelError("file format covers first-order chains only")
        return json.dumps({"V": self.vocab.size, "P": self.tensor.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "MarkovSequenceModel":
        doc = json.loads(text)
        P = np.asarray(doc["P"], dtype=np.float64)
        if P.shape != (doc["V"], doc["V"]):
            raise ModelError(f"P shape {P.shape} inconsistent with V={doc['V']}")
        return cls(P, order=1)


def random_markov_matrix(
    V: int, gen: np.random.Generator, concentration: float = 1.0, self_bias: float = 0.0
) -> np.ndarray:
    """Random row-stochastic matrix (Dirichlet rows, optional sticky mix)."""
    P = gen.dirichlet([concentration] * V, size=V)
    if self_bias:
        P = (1.0 - self_bias) * P + self_bias * np.eye(V)
    return P / P.sum(axis=1, keepdims=True)


class TemperatureWrapped(SequenceModel):
    """Applies a fixed temperature to every conditional of an inner model."""

    def __init__(self, inner: SequenceModel, T: float):
        if T <= 0:
            raise ModelError(f"temperature must be positive, got {T}")
        super().__init__(inner.vocab)
        self.inner = inner
        self.T = float(T)

    def next(self, history, prefix):
        dist = self.inner.next(history, prefix)
        self.calls += 1
        return apply_temperature(dist, self.T)

    def name(self):
        return f"temperature(T={self.T}, inner={self.inner.name()})"

    def spawn(self):
        return TemperatureWrapped(self.inner.spawn(), self.T)


class SyntheticMixerModel(SequenceModel):
    """Deterministic non-Markov toy model: a desk-scale neural stand-in.

    Each conditional hashes the entire context (history + prefix) with a
    rolling FNV-1a over token ids, then derives per-token logits in [-3, 3]
    from FNV-1a over (seed, context hash, token id) and softmaxes them.
    The distribution therefore depends on the whole prefix, not any fixed
    suffix.  Bit-reproducible across processes for a fixed seed.
    """

    def __init__(self, seed: int, V: int):
        super().__init__(Vocab(V))
        self.seed = int(seed)

    def _next_logp(self, context):
        ctx_hash = fnv1a_tokens(context)
        return mixer_logp(self.seed, ctx_hash, self.vocab.size)

    def name(self):
        return f"mixer(seed={self.seed}, V={self.vocab.size})"

    def spawn(self):
        return SyntheticMixerModel(self.seed, self.vocab.size)


class NGramModel(SequenceModel):
    """Order-m n-gram with add-delta smoothing over a symbol vocabulary.

    Conditionals use the longest available context up to m tokens; a context
    never seen in training falls back to the smoothed (uniform for delta>0)
    distribution.  With delta=0 an unseen context has no defined conditional
    and raises.
    """

    def __init__(
        self,
        order: int,
        delta: float,
        counts: dict[tuple[int, ...], dict[int, int]],
        symbols: list[str],
        tokenization: str = "char",
    ):
        if order < 1:
            raise ModelError(f"order must be >= 1, got {order}")
        if delta < 0:
            raise ModelError(f"delta must be >= 0, got {delta}")
        super().__init__(Vocab(len(symbols)))
        self.order = order
        self.delta = float(delta)
        self.counts = counts
        self.symbols = list(symbols)
        self.tokenization = tokenization
        self._totals = {ctx: sum(row.values()) for ctx, row in counts.items()}

    def _next_logp(self, context):
        m = min(self.order, len(context))
        ctx = tuple(context[len(context) - m :])
        row = self.counts.get(ctx)
        V = self.vocab.size
        if row is None:
            if self.delta == 0:
                raise ModelError(f"context {ctx} unseen and delta=0: conditional undefined")
            row, total = {}, 0
        else:
            total = self._totals[ctx]
        p = np.full(V, self.delta, dtype=np.float64)
        for v, c in row.items():
            p[v] += c
        denom = total + self.delta * V
        if denom == 0:
            raise ModelError(f"context {ctx} has zero mass and delta=0")
        with np.errstate(divide="ignore"):
            return np.log(p / denom)

    def spawn(self):
        return NGramModel(self.order, self.delta, self.counts, self.symbols, self.tokenization)

    def name(self):
        return f"ngram(m={self.order}, delta={self.delta}, V={self.vocab.size})"

    def to_markov_tensor(self) -> np.ndarray:
        """Smoothed transition tensor over all V^m contexts (desk scale)."""
        V = self.vocab.size
        shape = (V,) * self.order + (V,)
        tensor = np.empty(shape)
        for ctx in np.ndindex(*(V,) * self.order):
            row = self.counts.get(tuple(ctx), {})
            p = np.full(V, self.delta, dtype=np.float64)
            for v, c in row.items():
                p[v] += c
            denom = sum(row.values()) + self.delta * V
            if denom == 0:
                raise ModelError(f"context {ctx} has zero mass and delta=0")
            tensor[ctx] = p / denom
        return tensor

    # -- persistence ---------------------------------------------------------

    def to_json(self) -> str:
        entries = sorted(
            (list(ctx), v, c) for ctx, row in self.counts.items() for v, c in row.items()
        )
        return json.dumps(
            {
                "order": self.order,
                "delta": self.delta,
                "tokenization": self.tokenization,
                "symbols": self.symbols,
                "counts": entries,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "NGramModel":
        doc = json.loads(text)
        counts: dict[tuple[int, ...], dict[int, int]] = {}
        for ctx, v, c in doc["counts"]:
            counts.setdefault(tuple(ctx), {})[v] = c
        return cls(doc["order"], doc["delta"], counts, doc["symbols"], doc["tokenization"])


def tokenize(text: str, tokenization: str) -> list[str]:
    if tokenization == "char":
        return list(text)
    if tokenization == "byte":
        return [f"0x{b:02x}" for b in text.encode("utf-8")]
    if tokenization == "whitespace":
        return text.split()
    raise ModelError(f"unknown tokenization {tokenization!r} (byte|char|whitespace)")


def fit_ngram(corpus, order: int, delta: float = 1.0, tokenization: str = "char") -> NGramModel:
    """Fit an n-gram from a corpus path or literal text.

    Counts are collected for every context length 0..m so the model can
    condition on short prefixes at the start of a sequence.
    """
    if isinstance(corpus, Path) or (isinstance(corpus, str) and corpus and Path(corpus).is_file()):
        text = Path(corpus).read_text(encoding="utf-8")
    else:
        text = str(corpus)
    raw = tokenize(text, tokenization)
    if not raw:
        raise ModelError("corpus is empty after tokenization")
    symbols = sorted(set(raw))
    if len(symbols) < 2:
        raise ModelError("corpus must contain at least two distinct symbols")
    ids = {s: i for i, s in enumerate(symbols)}
    toks = [ids[s] for s in raw]
    counts: dict[tuple[int, ...], dict[int, int]] = {}
    for i, t in enumerate(toks):
        for ell in range(0, min(order, i) + 1):
            ctx = tuple(toks[i - ell : i])
            row = counts.setdefault(ctx, {})
            row[t] = row.get(t, 0) + 1
    return NGramModel(order, delta, counts, symbols, tokenization)
