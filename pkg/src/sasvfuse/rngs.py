"""Counter-based random streams keyed by (seed, stream id).

Philox streams with distinct keys are independent, so every consumer
(parameter init, per-epoch shuffling, corpus synthesis) gets its own
stream without any draw-order coupling between them.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream ids. Epoch e of the training shuffle uses STREAM_EPOCH_BASE + e.
STREAM_SYNTH = 0
STREAM_INIT = 1
STREAM_EPOCH_BASE = 2


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one (seed, stream) pair."""
    return np.random.Generator(
        np.random.Philox(key=[int(seed) & _MASK64, int(stream) & _MASK64])
    )
