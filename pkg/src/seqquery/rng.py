"""Counter-based random streams.

All sampling goes through Philox-4x64 substreams keyed by (seed, stream
index).  Because every draw owns its substream, parallel and serial runs
consume identical uniforms, and a sweep that reuses draw m of a family sees
the same sample path as a standalone run of draw m.
"""

from __future__ import annotations

import numpy as np

from .kernels import fnv1a_tokens

_MASK64 = (1 << 64) - 1


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for draw ``index`` of stream family ``seed``."""
    key = np.array([seed & _MASK64, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, *parts) -> int:
    """Deterministically derive a child seed from a parent seed and labels.

    Labels may be ints or strings; strings are folded byte-wise so that
    distinct label tuples land on distinct streams.
    """
    words = [seed & _MASK64]
    for p in parts:
        if isinstance(p, str):
            data = p.encode("utf-8")
            words.extend(int.from_bytes(data[i : i + 8], "little") for i in range(0, len(data), 8))
            words.append(len(data) | (1 << 63))
        else:
            words.append(int(p) & _MASK64)
    return fnv1a_tokens(words)
