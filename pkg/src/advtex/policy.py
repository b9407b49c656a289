"""Frozen, seeded stand-in for the manipulation policy under attack.

The policy maps an RGB observation plus an instruction id to a 7-channel
end-effector delta command (dx, dy, dz, droll, dpitch, dyaw, gripper).
Architecture: non-overlapping patch mean-pooling over the image, flatten,
concatenate a fixed instruction embedding, two affine+tanh layers, and an
affine head whose gripper channel is tanh-squashed. Everything is smooth,
so finite-difference gradient checks are clean everywhere, and weights
are deterministic functions of the seed (there is no training loop).

The attack code only ever touches ``forward`` and ``input_gradient``; a
real policy can be dropped in behind the same two calls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PolicySpec", "Policy", "build_policy", "ACTION_DIM"]

ACTION_DIM = 7
_WEIGHT_GAIN = 2.5  # init scale on top of 1/sqrt(fan_in); sets attackability of the toy


@dataclass(frozen=True)
class PolicySpec:
    seed: int = 0
    height: int = 64
    width: int = 64
    patch_size: int = 4
    hidden: tuple[int, int] = (64, 64)
    embedding_dim: int = 16
    num_instructions: int = 8
    linear: bool = False  # test configuration: tanh replaced by identity

    def __post_init__(self):
        if self.height % self.patch_size or self.width % self.patch_size:
            raise ValueError("image size must be divisible by the patch size")
        if self.patch_size <= 0 or self.embedding_dim <= 0 or self.num_instructions <= 0:
            raise ValueError("patch size, embedding dim and table size must be positive")
        if len(self.hidden) != 2 or any(h <= 0 for h in self.hidden):
            raise ValueError("hidden must be two positive widths")

    @property
    def feature_dim(self) -> int:
        return (self.height // self.patch_size) * (self.width // self.patch_size) * 3


class Policy:
    """Immutable policy instance; all calls are pure."""

    def __init__(self, spec: PolicySpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        in_dim = spec.feature_dim + spec.embedding_dim
        h1, h2 = spec.hidden

        def affine(n_out, n_in):
            w = rng.normal(0.0, _WEIGHT_GAIN / np.sqrt(n_in), size=(n_out, n_in))
            b = rng.normal(0.0, 0.1, size=n_out)
            return w, b

        self.w1, self.b1 = affine(h1, in_dim)
        self.w2, self.b2 = affine(h2, h1)
        self.w3, self.b3 = affine(ACTION_DIM, h2)
        self.embeddings = rng.normal(0.0, 1.0, size=(spec.num_instructions, spec.embedding_dim))

    # -- internals ---------------------------------------------------------

    def _nonlin(self, x):
        return x if self.spec.linear else np.tanh(x)

    def _pool(self, obs: np.ndarray) -> np.ndarray:
        p = self.spec.patch_size
        h, w = self.spec.height, self.spec.width
        return obs.reshape(h // p, p, w // p, p, 3).mean(axis=(1, 3)).reshape(-1)

    def _embed(self, instruction_id: int) -> np.ndarray:
        if not (0 <= instruction_id < self.spec.num_instructions):
            raise ValueError(f"instruction id {instruction_id} outside table of "
                             f"size {self.spec.num_instructions}")
        return self.embeddings[instruction_id]

    def _check_obs(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, float)
        expected = (self.spec.height, self.spec.width, 3)
        if obs.shape != expected:
            raise ValueError(f"observation shape {obs.shape}, expected {expected}")
        return obs

    def _trace(self, obs: np.ndarray, instruction_id: int):
        x0 = np.concatenate([self._pool(obs), self._embed(instruction_id)])
        z1 = self.w1 @ x0 + self.b1
        h1 = self._nonlin(z1)
        z2 = self.w2 @ h1 + self.b2
        h2 = self._nonlin(z2)
        raw = self.w3 @ h2 + self.b3
        action = raw.copy()
        action[6] = np.tanh(raw[6])
        return action, (h1, h2, raw)

    # -- public surface ----------------------------------------------------

    def forward(self, obs: np.ndarray, instruction_id: int) -> np.ndarray:
        """Predict the 7-channel action for one observation."""
        obs = self._check_obs(obs)
        action, _ = self._trace(obs, instruction_id)
        return action

    def input_gradient(self, obs: np.ndarray, instruction_id: int,
                       d_action: np.ndarray) -> np.ndarray:
        """Exact gradient of <forward(obs), d_action> with respect to obs."""
        obs = self._check_obs(obs)
        d_action = np.asarray(d_action, float)
        if d_action.shape != (ACTION_DIM,):
            raise ValueError(f"d_action must have shape ({ACTION_DIM},)")
        _, (h1, h2, raw) = self._trace(obs, instruction_id)

        d_raw = d_action.copy()
        d_raw[6] *= 1.0 - np.tanh(raw[6]) ** 2
        d_h2 = self.w3.T @ d_raw
        d_z2 = d_h2 if self.spec.linear else d_h2 * (1.0 - h2 ** 2)
        d_h1 = self.w2.T @ d_z2
        d_z1 = d_h1 if self.spec.linear else d_h1 * (1.0 - h1 ** 2)
        d_x0 = self.w1.T @ d_z1

        p = self.spec.patch_size
        h, w = self.spec.height, self.spec.width
        d_feat = d_x0[:self.spec.feature_dim].reshape(h // p, w // p, 3)
        # Mean pooling spreads each feature gradient evenly over its patch.
        d_obs = np.repeat(np.repeat(d_feat, p, axis=0), p, axis=1) / (p * p)
        return d_obs

    def lipschitz_bound(self) -> float:
        """Operator-norm product bound on ||d action / d obs||, for sanity tests."""
        norms = (np.linalg.norm(self.w1, 2) * np.linalg.norm(self.w2, 2)
                 * np.linalg.norm(self.w3, 2))
        return float(norms)  # pooling and tanh are both 1-Lipschitz


def build_policy(spec: PolicySpec) -> Policy:
    """Construct the deterministic policy for a spec; same spec, same weights."""
    return Policy(spec)
