#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallbacks.

Runs both backends in-process (the public module-level selection is made
once at import; here we grab each table explicitly) and reports per-call
timings plus an end-to-end importance-sampling comparison.

    python benchmarks/bench_kernels.py [--repeat 5]

Set SEQQUERY_NO_NUMBA=1 before importing seqquery to force the fallback
path package-wide.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from seqquery.kernels import get_backend
from seqquery.models import SyntheticMixerModel, UniformModel
from seqquery.queries import Vocab, make_hitting_time
from seqquery.estimators import importance_sampling


def time_call(fn, *args, number=10000, repeat=5) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / number)
    return best


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--vocab", type=int, default=64)
    args = parser.parse_args()

    backends = {}
    for name in ("numpy", "numba"):
        try:
            backends[name] = get_backend(name)
        except (ImportError, ValueError) as e:
            print(f"{name}: unavailable ({e})")
    V = args.vocab

    gen = np.random.default_rng(0)
    logp = np.log(gen.dirichlet(np.ones(V)))
    domain = np.arange(0, V, 2, dtype=np.int64)
    probs = np.exp(logp[domain])
    probs /= probs.sum()
    tokens = np.arange(40, dtype=np.uint64)

    rows = []
    for name, table in backends.items():
        # trigger JIT compilation outside the timed region
        table["fnv1a_words"](tokens)
        table["mixer_logp"](np.uint64(7), np.uint64(12345), V)
        table["restrict_logp"](logp, domain)
        table["inverse_cdf_pick"](probs, 0.5)
        rows.append(
            (
                name,
                time_call(table["fnv1a_words"], tokens, repeat=args.repeat),
                time_call(table["mixer_logp"], np.uint64(7), np.uint64(12345), V, repeat=args.repeat),
                time_call(table["restrict_logp"], logp, domain, repeat=args.repeat),
                time_call(table["inverse_cdf_pick"], probs, 0.5, repeat=args.repeat),
            )
        )

    print(f"{'backend':8} {'fnv1a(40 tok)':>14} {'mixer_logp':>12} {'restrict':>10} {'inv_cdf':>10}")
    for name, t_fnv, t_mix, t_res, t_cdf in rows:
        print(f"{name:8} {t_fnv * 1e6:>12.2f}us {t_mix * 1e6:>10.2f}us {t_res * 1e6:>8.2f}us {t_cdf * 1e6:>8.2f}us")

    # end-to-end: importance sampling on the mixer model through each backend
    import seqquery.kernels as kernels_mod
    import seqquery.models as models_mod
    import seqquery.proposal as proposal_mod

    saved = {
        "fnv": kernels_mod.fnv1a_tokens,
        "mix": kernels_mod.mixer_logp,
        "res": kernels_mod.restrict_logp,
        "cdf": kernels_mod.inverse_cdf_pick,
    }
    print()
    for name, table in backends.items():
        kernels_mod._fnv1a_words = table["fnv1a_words"]
        kernels_mod._mixer_logp = table["mixer_logp"]
        kernels_mod._restrict_logp = table["restrict_logp"]
        kernels_mod._inverse_cdf_pick = table["inverse_cdf_pick"]
        model = SyntheticMixerModel(seed=3, V=V)
        query = make_hitting_time({0}, 6, Vocab(V))
        t0 = time.perf_counter()
        est = importance_sampling(query, model, [1, 2, 3], 2000, seed=9)
        dt = time.perf_counter() - t0
        print(f"{name:8} IS 2000x6 on mixer(V={V}): {dt:.3f}s  estimate={est.value:.6g}")
    kernels_mod._fnv1a_words = saved["fnv"]  # restore module state
    kernels_mod._mixer_logp = saved["mix"]
    kernels_mod._restrict_logp = saved["res"]
    kernels_mod._inverse_cdf_pick = saved["cdf"]


if __name__ == "__main__":
    main()
