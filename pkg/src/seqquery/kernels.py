"""Hot numeric kernels: hashing, restricted renormalization, inverse-CDF picks.

Two interchangeable backends are provided.  The default compiles the scalar
loops with numba's ``@njit``; setting the environment variable
``SEQQUERY_NO_NUMBA=1`` (or running without numba installed) selects the
vectorized pure-numpy fallbacks instead.  Integer kernels are bit-identical
across backends; float kernels agree to round-off (see tests/test_kernels.py
and benchmarks/bench_kernels.py).

The 64-bit hash used throughout is FNV-1a with offset basis
0xcbf29ce484222325 and prime 0x100000001b3, folding one byte at a time;
multi-byte values are folded little-endian, 8 bytes per 64-bit word.
"""

from __future__ import annotations

import math
import os

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

NEG_INF = float("-inf")


def _numba_requested() -> bool:
    return os.environ.get("SEQQUERY_NO_NUMBA", "0").lower() not in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# pure-numpy backend
# ---------------------------------------------------------------------------


def _fnv1a_words_np(words: np.ndarray) -> int:
    """Fold an array of uint64 words (8 LE bytes each) into an FNV-1a hash."""
    h = FNV_OFFSET
    for w in words:
        x = int(w)
        for i in range(8):
            h = ((h ^ ((x >> (8 * i)) & 0xFF)) * FNV_PRIME) & _MASK64
    return h


def _mixer_logp_np(seed: int, ctx: int, V: int) -> np.ndarray:
    """Log-probabilities of the synthetic mixer model for one context.

    Per-token hash folds seed, context hash, and token id (24 bytes total);
    the hash maps uniformly onto logits in [-3, 3], which are log-softmaxed.
    """
    prefix = _fnv1a_words_np(np.array([seed, ctx], dtype=np.uint64))
    h = np.full(V, prefix, dtype=np.uint64)
    v = np.arange(V, dtype=np.uint64)
    prime = np.uint64(FNV_PRIME)
    for i in range(8):
        byte = (v >> np.uint64(8 * i)) & np.uint64(0xFF)
        h = (h ^ byte) * prime
    logits = -3.0 + 6.0 * (h.astype(np.float64) / 2.0**64)
    m = logits.max()
    z = np.exp(logits - m)
    return (logits - m) - np.log(z.sum())


def _restrict_logp_np(logp: np.ndarray, domain: np.ndarray) -> tuple[np.ndarray, float]:
    """Zero out mass outside ``domain`` and renormalize in log space.

    Returns the restricted log-probability vector and the log restricted
    mass rho = log sum_{v in domain} p(v); rho = -inf marks a dead branch.
    """
    vals = logp[domain]
    m = vals.max()
    out = np.full(logp.shape[0], NEG_INF)
    if m == NEG_INF:
        return out, NEG_INF
    rho = m + math.log(np.exp(vals - m).sum())
    out[domain] = vals - rho
    return out, rho


def _inverse_cdf_pick_np(probs: np.ndarray, u: float) -> int:
    """Index of the first cumulative-probability bin exceeding ``u``."""
    c = np.cumsum(probs)
    idx = int(np.searchsorted(c, u, side="right"))
    return min(idx, probs.shape[0] - 1)


# ---------------------------------------------------------------------------
# numba backend (same semantics, scalar loops)
# ---------------------------------------------------------------------------


def _fnv1a_words_loop(words):  # pragma: no cover - exercised via dispatch
    h = np.uint64(FNV_OFFSET)
    prime = np.uint64(FNV_PRIME)
    for w in words:
        x = np.uint64(w)
        for i in range(8):
            byte = (x >> np.uint64(8 * i)) & np.uint64(0xFF)
            h = (h ^ byte) * prime
    return h


def _mixer_logp_loop(seed, ctx, V):  # pragma: no cover - exercised via dispatch
    h0 = np.uint64(FNV_OFFSET)
    prime = np.uint64(FNV_PRIME)
    for w in (np.uint64(seed), np.uint64(ctx)):
        for i in range(8):
            byte = (w >> np.uint64(8 * i)) & np.uint64(0xFF)
            h0 = (h0 ^ byte) * prime
    logits = np.empty(V, dtype=np.float64)
    m = -1e300
    for v in range(V):
        h = h0
        x = np.uint64(v)
        for i in range(8):
            byte = (x >> np.uint64(8 * i)) & np.uint64(0xFF)
            h = (h ^ byte) * prime
        logit = -3.0 + 6.0 * (np.float64(h) / 2.0**64)
        logits[v] = logit
        if logit > m:
            m = logit
    s = 0.0
    for v in range(V):
        s += math.exp(logits[v] - m)
    ln_z = math.log(s)
    for v in range(V):
        logits[v] = (logits[v] - m) - ln_z
    return logits


def _restrict_logp_loop(logp, domain):  # pragma: no cover - exercised via dispatch
    m = NEG_INF
    for j in range(domain.shape[0]):
        x = logp[domain[j]]
        if x > m:
            m = x
    out = np.full(logp.shape[0], NEG_INF)
    if m == NEG_INF:
        return out, NEG_INF
    s = 0.0
    for j in range(domain.shape[0]):
        s += math.exp(logp[domain[j]] - m)
    rho = m + math.log(s)
    for j in range(domain.shape[0]):
        out[domain[j]] = logp[domain[j]] - rho
    return out, rho


def _inverse_cdf_pick_loop(probs, u):  # pragma: no cover - exercised via dispatch
    acc = 0.0
    for i in range(probs.shape[0]):
        acc += probs[i]
        if acc > u:
            return i
    return probs.shape[0] - 1


def _build_numba_backend():
    from numba import njit

    return {
        "name": "numba",
        "fnv1a_words": njit(cache=True, nogil=True)(_fnv1a_words_loop),
        "mixer_logp": njit(cache=True, nogil=True)(_mixer_logp_loop),
        "restrict_logp": njit(cache=True, nogil=True)(_restrict_logp_loop),
        "inverse_cdf_pick": njit(cache=True, nogil=True)(_inverse_cdf_pick_loop),
    }


def _build_numpy_backend():
    return {
        "name": "numpy",
        "fnv1a_words": _fnv1a_words_np,
        "mixer_logp": _mixer_logp_np,
        "restrict_logp": _restrict_logp_np,
        "inverse_cdf_pick": _inverse_cdf_pick_np,
    }


def get_backend(name: str) -> dict:
    """Return a kernel table by name ("numba" or "numpy")."""
    if name == "numpy":
        return _build_numpy_backend()
    if name == "numba":
        return _build_numba_backend()
    raise ValueError(f"unknown kernel backend: {name!r}")


def _select_backend() -> dict:
    if _numba_requested():
        try:
            return _build_numba_backend()
        except ImportError:
            pass
    return _build_numpy_backend()


_BACKEND = _select_backend()

BACKEND_NAME: str = _BACKEND["name"]
_fnv1a_words = _BACKEND["fnv1a_words"]
_mixer_logp = _BACKEND["mixer_logp"]
_restrict_logp = _BACKEND["restrict_logp"]
_inverse_cdf_pick = _BACKEND["inverse_cdf_pick"]


def fnv1a_tokens(tokens) -> int:
    """FNV-1a hash of a token sequence (each id folded as 8 LE bytes)."""
    words = np.asarray(tokens, dtype=np.uint64)
    return int(_fnv1a_words(words))


def mixer_logp(seed: int, ctx_hash: int, V: int) -> np.ndarray:
    """Synthetic-mixer log-probability vector for a hashed context."""
    return np.asarray(_mixer_logp(np.uint64(seed & _MASK64), np.uint64(ctx_hash & _MASK64), V))


def restrict_logp(logp: np.ndarray, domain: np.ndarray) -> tuple[np.ndarray, float]:
    """Restrict a log-probability vector to ``domain`` and renormalize.

    ``domain`` must be a sorted int64 array of token ids.  Returns
    (restricted logp over the full vocab, log restricted mass).
    """
    out, rho = _restrict_logp(np.ascontiguousarray(logp, dtype=np.float64), domain)
    return np.asarray(out), float(rho)


def inverse_cdf_pick(probs: np.ndarray, u: float) -> int:
    """Pick an index by inverse CDF over ``probs`` given uniform ``u``."""
    return int(_inverse_cdf_pick(np.ascontiguousarray(probs, dtype=np.float64), u))
