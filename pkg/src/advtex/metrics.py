"""Image and action-space metrics used by the reports."""

from __future__ import annotations

import numpy as np

__all__ = ["compute_ssim", "compute_action_l1"]

_SSIM_WINDOW = 8
_C1 = 0.01 ** 2  # stabilization constants for data range 1.0
_C2 = 0.03 ** 2


def _window_means(channel: np.ndarray, k: int) -> np.ndarray:
    """Mean over every k x k window (stride 1, valid positions) via cumsum."""
    ii = np.zeros((channel.shape[0] + 1, channel.shape[1] + 1))
    ii[1:, 1:] = channel.cumsum(0).cumsum(1)
    sums = ii[k:, k:] - ii[:-k, k:] - ii[k:, :-k] + ii[:-k, :-k]
    return sums / (k * k)


def compute_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity with sliding 8x8 uniform windows.

    Computed per channel over all valid window positions and averaged;
    identical images score exactly 1.0.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError("images must be (H, W, 3)")
    k = _SSIM_WINDOW
    if a.shape[0] < k or a.shape[1] < k:
        raise ValueError(f"images must be at least {k}x{k}")
    scores = []
    for c in range(3):
        x, y = a[..., c], b[..., c]
        mx = _window_means(x, k)
        my = _window_means(y, k)
        mxx = _window_means(x * x, k)
        myy = _window_means(y * y, k)
        mxy = _window_means(x * y, k)
        var_x = mxx - mx * mx
        var_y = myy - my * my
        cov = mxy - mx * my
        ssim_map = (((2 * mx * my + _C1) * (2 * cov + _C2))
                    / ((mx * mx + my * my + _C1) * (var_x + var_y + _C2)))
        scores.append(ssim_map.mean())
    return float(np.mean(scores))


def compute_action_l1(a, b) -> float:
    """Mean over timesteps of the mean per-channel absolute difference."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.shape != b.shape:
        raise ValueError(f"action sequences differ in shape: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValueError("expected (T, channels) action sequences")
    return float(np.abs(a - b).mean())
