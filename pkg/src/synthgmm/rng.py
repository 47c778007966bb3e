"""Counter-based per-row uniforms.

Each ``(seed, *stream)`` tuple keys a Philox generator; row ``r`` owns raw
draws ``r * width .. (r + 1) * width - 1`` of that counter stream. A row's
values therefore depend only on the key and ``r``: not on the number of
rows, on other rows, or on which worker produced them.
"""

from __future__ import annotations

import numpy as np

_TWO_M53 = 2.0**-53


def philox_key(seed, *stream) -> np.ndarray:
    entropy = [int(seed)] + [int(s) for s in stream]
    if any(e < 0 for e in entropy):
        raise ValueError("seed and stream components must be nonnegative")
    return np.random.SeedSequence(entropy).generate_state(2, np.uint64)


def row_uniforms(n_rows: int, width: int, seed, *stream) -> np.ndarray:
    """Open-interval uniforms of shape ``(n_rows, width)``."""
    bitgen = np.random.Philox(key=philox_key(seed, *stream))
    raw = bitgen.random_raw(n_rows * width).reshape(n_rows, width)
    return ((raw >> np.uint64(11)).astype(float) + 0.5) * _TWO_M53
