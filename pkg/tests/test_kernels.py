"""Backend parity: the numba kernels and the numpy fallbacks must agree."""

from __future__ import annotations

import numpy as np
import pytest

from seqquery.kernels import (
    FNV_OFFSET,
    FNV_PRIME,
    fnv1a_tokens,
    get_backend,
    inverse_cdf_pick,
    mixer_logp,
    restrict_logp,
)

NP = get_backend("numpy")
try:
    NB = get_backend("numba")
except ImportError:  # pragma: no cover
    NB = None

needs_numba = pytest.mark.skipif(NB is None, reason="numba not installed")


def reference_fnv1a(byte_stream) -> int:
    h = FNV_OFFSET
    for b in byte_stream:
        h = ((h ^ b) * FNV_PRIME) & ((1 << 64) - 1)
    return h


def test_fnv1a_matches_bytewise_reference():
    tokens = [0, 1, 2**40 + 17]
    stream = b"".join(int(t).to_bytes(8, "little") for t in tokens)
    assert fnv1a_tokens(tokens) == reference_fnv1a(stream)


def test_fnv1a_empty_is_offset_basis():
    assert fnv1a_tokens([]) == FNV_OFFSET


@needs_numba
def test_fnv1a_backend_parity():
    gen = np.random.default_rng(0)
    for n in (0, 1, 7, 40):
        toks = gen.integers(0, 2**63, size=n).astype(np.uint64)
        assert int(NP["fnv1a_words"](toks)) == int(NB["fnv1a_words"](toks))


@needs_numba
def test_mixer_logits_backend_parity():
    for seed, ctx, V in [(0, 0, 2), (7, 12345, 8), (2**63 + 5, 2**64 - 1, 33)]:
        a = np.asarray(NP["mixer_logp"](np.uint64(seed), np.uint64(ctx), V))
        b = np.asarray(NB["mixer_logp"](np.uint64(seed), np.uint64(ctx), V))
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


@needs_numba
def test_restrict_backend_parity():
    gen = np.random.default_rng(1)
    for _ in range(20):
        V = int(gen.integers(2, 12))
        logp = np.log(gen.dirichlet(np.ones(V)))
        k = int(gen.integers(1, V + 1))
        domain = np.sort(gen.choice(V, size=k, replace=False)).astype(np.int64)
        out_a, rho_a = NP["restrict_logp"](logp, domain)
        out_b, rho_b = NB["restrict_logp"](logp, domain)
        assert rho_a == pytest.approx(rho_b, abs=1e-14)
        np.testing.assert_allclose(np.asarray(out_a), np.asarray(out_b), rtol=0, atol=1e-13)


@needs_numba
def test_inverse_cdf_backend_parity():
    gen = np.random.default_rng(2)
    for _ in range(50):
        n = int(gen.integers(1, 9))
        probs = gen.dirichlet(np.ones(n))
        u = float(gen.random())
        assert int(NP["inverse_cdf_pick"](probs, u)) == int(NB["inverse_cdf_pick"](probs, u))


def test_restrict_dead_domain():
    logp = np.array([0.0, -np.inf, -np.inf])
    out, rho = restrict_logp(logp, np.array([1, 2], dtype=np.int64))
    assert rho == -np.inf
    assert np.all(np.isneginf(out))


def test_inverse_cdf_edges():
    probs = np.array([0.25, 0.25, 0.5])
    assert inverse_cdf_pick(probs, 0.0) == 0
    assert inverse_cdf_pick(probs, 0.25) == 1  # boundary goes right
    assert inverse_cdf_pick(probs, 0.9999999) == 2
    # round-off undershoot still lands on the last bin
    assert inverse_cdf_pick(np.array([0.3, 0.3, 0.39999999]), 0.99999999999) == 2


def test_mixer_logp_normalizes():
    for V in (2, 5, 64):
        lp = mixer_logp(9, 1234, V)
        assert abs(np.logaddexp.reduce(lp)) < 1e-12
        assert lp.max() <= 0.0
