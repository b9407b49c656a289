"""Input-space defenses applied to observations before the policy.

These run at evaluation time only; the attack never optimizes against
them. All three map [0, 1] images to [0, 1] images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["DefenseSpec", "apply_defense"]

_KINDS = ("additive-noise", "median-blur", "bit-depth-reduction")


@dataclass(frozen=True)
class DefenseSpec:
    kind: str
    sigma: float = 0.05          # additive-noise
    kernel_size: int = 3         # median-blur, odd in {3, 5, 7}
    bits: int = 4                # bit-depth-reduction, in 1..7
    seed: int = 0                # stochastic kinds only

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown defense {self.kind!r}; expected one of {_KINDS}")
        if self.kind == "additive-noise" and self.sigma < 0:
            raise ValueError("noise sigma must be nonnegative")
        if self.kind == "median-blur" and self.kernel_size not in (3, 5, 7):
            raise ValueError("median blur kernel must be 3, 5, or 7")
        if self.kind == "bit-depth-reduction" and not (1 <= self.bits <= 7):
            raise ValueError("bit depth must be between 1 and 7")


def _median_blur(obs: np.ndarray, k: int) -> np.ndarray:
    """Per-channel k x k median with edge replication."""
    pad = k // 2
    h, w = obs.shape[:2]
    padded = np.pad(obs, ((pad, pad), (pad, pad), (0, 0)), mode="edge")
    windows = np.stack([padded[dy:dy + h, dx:dx + w]
                        for dy in range(k) for dx in range(k)])
    return np.median(windows, axis=0)


def apply_defense(obs: np.ndarray, spec: DefenseSpec,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Run one defense over an observation. ``rng`` overrides spec.seed."""
    obs = np.asarray(obs, float)
    if obs.ndim != 3 or obs.shape[2] != 3:
        raise ValueError("observation must be (H, W, 3)")
    if spec.kind == "additive-noise":
        rng = rng or np.random.default_rng(spec.seed)
        return np.clip(obs + rng.normal(0.0, spec.sigma, size=obs.shape), 0.0, 1.0)
    if spec.kind == "median-blur":
        return _median_blur(obs, spec.kernel_size)
    levels = float(2 ** spec.bits - 1)
    return np.rint(obs * levels) / levels
