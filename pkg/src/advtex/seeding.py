"""Named random substreams derived from one root seed.

Every source of randomness in a run (view sampling, EoT draws, trial
jitter, noise defense, control baselines) pulls from its own named
substream, so paired comparisons share everything except the variable
under test and whole runs replay exactly from the root seed.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream"]


def substream(root_seed: int, *names) -> np.random.Generator:
    """Generator for (root_seed, names...); stable across runs and platforms."""
    keys = [zlib.crc32(str(n).encode("utf-8")) for n in names]
    return np.random.default_rng(np.random.SeedSequence([int(root_seed) & 0xFFFFFFFF, *keys]))
