"""Frame weighting from the latent dynamics of an observation sequence.

Frames where the scene changes fastest (grasp onset, lift-off) matter
most to a sequential policy, so per-frame attack losses are weighted by a
criticality score derived from latent velocity and acceleration:

    v_t = ||f_{t+1} - f_{t-1}||_2 / 2        (central difference)
    a_t = |v_t - v_{t-1}|
    s_t = max(v_hat_t, a_hat_t)              (min-max normalized)
    w_t = softmax(s / tau)

The latent encoder here is a fixed seeded random projection over patch
means; it has no learned weights but preserves exactly the dynamics math,
and anything implementing ``encode(obs) -> vector`` can replace it.

Weights are computed once from a clean rollout and frozen for the whole
attack, keeping the objective stationary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LatentEncoder",
    "DynamicsProfile",
    "FrameWeights",
    "latent_dynamics",
    "normalize_dynamics",
    "criticality",
    "frame_weights",
    "trajectory_weights",
    "uniform_weights",
    "one_hot_weights",
    "random_simplex_weights",
    "write_weights_csv",
]

DEFAULT_TAU = 0.25


class LatentEncoder:
    """Deterministic linear image encoder: 8x8 grid means -> random projection.

    The projection matrix is drawn once from the given seed and scaled by
    1/sqrt(input dim); an all-zero image maps to the zero feature.
    """

    GRID = 8

    def __init__(self, feature_dim: int = 64, seed: int = 0):
        self.feature_dim = feature_dim
        self.seed = seed
        in_dim = self.GRID * self.GRID * 3
        rng = np.random.default_rng(seed)
        self.projection = rng.normal(0.0, 1.0, size=(feature_dim, in_dim)) / np.sqrt(in_dim)

    def encode(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, float)
        if obs.ndim != 3 or obs.shape[2] != 3:
            raise ValueError("observation must be (H, W, 3)")
        h, w = obs.shape[:2]
        if h % self.GRID or w % self.GRID:
            raise ValueError(f"image size must be divisible by {self.GRID}")
        ph, pw = h // self.GRID, w // self.GRID
        cells = obs.reshape(self.GRID, ph, self.GRID, pw, 3).mean(axis=(1, 3))
        return self.projection @ cells.reshape(-1)


@dataclass
class DynamicsProfile:
    """Per-timestep latent velocity/acceleration and derived quantities."""

    velocity: np.ndarray
    acceleration: np.ndarray
    velocity_norm: np.ndarray | None = None
    acceleration_norm: np.ndarray | None = None
    criticality: np.ndarray | None = None


@dataclass(frozen=True)
class FrameWeights:
    """Positive per-frame weights summing to 1, with the temperature used."""

    weights: np.ndarray
    tau: float

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or (w <= 0).any():
            raise ValueError("weights must be a 1-d array of positive values")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")

    def __len__(self):
        return len(self.weights)

    def __getitem__(self, t):
        return self.weights[t]


def latent_dynamics(features) -> DynamicsProfile:
    """Central-difference velocity and acceleration of a feature sequence.

    Velocity is defined on interior frames and acceleration one frame
    further in; both are extended to the trajectory ends by replicating
    the nearest defined value, so endpoints are not artificially quiet.
    Requires T >= 3.
    """
    f = np.asarray([np.asarray(x, float) for x in features])
    t_len = f.shape[0]
    if t_len < 3:
        raise ValueError(f"need at least 3 frames, got {t_len}")
    v = np.zeros(t_len)
    v[1:-1] = np.linalg.norm(f[2:] - f[:-2], axis=1) / 2.0
    v[0] = v[1]
    v[-1] = v[-2]
    a = np.zeros(t_len)
    if t_len > 3:
        # raw a_t needs raw v_t and v_{t-1}, i.e. t in [2, T-2]
        a[2:-1] = np.abs(v[2:-1] - v[1:-2])
        a[0] = a[1] = a[2]
        a[-1] = a[-2]
    return DynamicsProfile(velocity=v, acceleration=a)


def normalize_dynamics(profile: DynamicsProfile) -> DynamicsProfile:
    """Min-max normalize velocity and acceleration over the trajectory.

    A constant signal (max == min) normalizes to all zeros.
    """
    def minmax(x):
        lo, hi = x.min(), x.max()
        if hi == lo:
            return np.zeros_like(x)
        return (x - lo) / (hi - lo)

    profile.velocity_norm = minmax(profile.velocity)
    profile.acceleration_norm = minmax(profile.acceleration)
    return profile


def criticality(profile: DynamicsProfile) -> np.ndarray:
    """Per-frame criticality: elementwise max of the normalized dynamics."""
    if profile.velocity_norm is None or profile.acceleration_norm is None:
        raise ValueError("normalize_dynamics must run first")
    profile.criticality = np.maximum(profile.velocity_norm, profile.acceleration_norm)
    return profile.criticality


def frame_weights(scores, tau: float) -> FrameWeights:
    """Temperature-scaled softmax of the criticality scores."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    s = np.asarray(scores, float)
    if not np.isfinite(s).all():
        raise ValueError("criticality scores must be finite")
    z = s / tau
    z = z - z.max()
    e = np.exp(z)
    return FrameWeights(weights=e / e.sum(), tau=tau)


def trajectory_weights(observations, tau: float = DEFAULT_TAU,
                       encoder: LatentEncoder | None = None):
    """Observations -> (FrameWeights, DynamicsProfile), the full chain."""
    encoder = encoder or LatentEncoder()
    features = [encoder.encode(o) for o in observations]
    profile = normalize_dynamics(latent_dynamics(features))
    scores = criticality(profile)
    return frame_weights(scores, tau), profile


def uniform_weights(t_len: int, tau: float = DEFAULT_TAU) -> FrameWeights:
    return FrameWeights(weights=np.full(t_len, 1.0 / t_len), tau=tau)


def one_hot_weights(t_len: int, frame: int, tau: float = DEFAULT_TAU) -> FrameWeights:
    """Single-frame baseline; the off-frame mass is epsilon to stay positive."""
    eps = 1e-12
    w = np.full(t_len, eps)
    w[frame] = 1.0 - eps * (t_len - 1)
    return FrameWeights(weights=w, tau=tau)


def random_simplex_weights(t_len: int, rng: np.random.Generator,
                           tau: float = DEFAULT_TAU) -> FrameWeights:
    draw = rng.exponential(1.0, size=t_len)
    return FrameWeights(weights=draw / draw.sum(), tau=tau)


def write_weights_csv(path, profile: DynamicsProfile, weights: FrameWeights) -> None:
    """Dump the per-frame dynamics and weights: step,v,alpha,v_hat,alpha_hat,s,w."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "v", "alpha", "v_hat", "alpha_hat", "s", "w"])
        for t in range(len(weights)):
            row = (profile.velocity[t], profile.acceleration[t],
                   profile.velocity_norm[t], profile.acceleration_norm[t],
                   profile.criticality[t], weights.weights[t])
            writer.writerow([t, *(repr(float(x)) for x in row)])
