"""Central-difference audits of every hand-derived backward path.

Each check compares an analytic gradient against a finite-difference
estimate computed from forward evaluations only, on scenes small enough
that coordinate-wise differences stay cheap. Colors and lighting are kept
away from the clamp boundaries, where the documented zero subgradient
would make the comparison meaningless.
"""

from __future__ import annotations

import numpy as np

from . import render
from .attack import AttackConfig, AttackProblem
from .fixtures import micro_scenario
from .mesh import BakeMap
from .policy import PolicySpec, build_policy
from .weighting import uniform_weights

__all__ = [
    "relative_error",
    "central_difference",
    "check_bake_adjoint",
    "check_render_backward",
    "check_policy_gradient",
    "check_pipeline_gradient",
    "run_all",
]

BAKE_TOL = 1e-4
RENDER_TOL = 1e-4
POLICY_TOL = 1e-5
PIPELINE_TOL = 1e-3


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max absolute difference, relative to the numeric gradient's scale."""
    analytic = np.asarray(analytic, float)
    numeric = np.asarray(numeric, float)
    scale = max(float(np.abs(numeric).max()), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def central_difference(fn, x: np.ndarray, eps: float) -> np.ndarray:
    """Coordinate-wise central differences of a scalar function."""
    x = np.asarray(x, float)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xflat = x.reshape(-1)
    for i in range(xflat.size):
        xp = xflat.copy()
        xm = xflat.copy()
        xp[i] += eps
        xm[i] -= eps
        flat[i] = (fn(xp.reshape(x.shape)) - fn(xm.reshape(x.shape))) / (2.0 * eps)
    return grad


def _micro_problem(seed: int, image_size: int = 16, t_len: int = 3):
    scenario = micro_scenario(t_len=t_len, image_size=image_size)
    rng = np.random.default_rng(seed)
    colors = np.clip(scenario.clean_colors
                     + rng.uniform(-0.15, 0.15, scenario.clean_colors.shape), 0.1, 0.9)
    policy = build_policy(PolicySpec(seed=seed, height=image_size, width=image_size,
                                     patch_size=4, hidden=(24, 24)))
    return scenario, colors, policy, rng


def check_bake_adjoint(seed: int = 0) -> float:
    scenario, colors, _, rng = _micro_problem(seed)
    bake = BakeMap.build(scenario.target_mesh, scenario.texture_size)
    g = rng.normal(size=(*scenario.texture_size, 3))
    analytic = bake.backward(g)

    def forward(c):
        return float(np.sum(bake.apply(c) * g))

    numeric = central_difference(forward, colors, eps=1e-4)
    return relative_error(analytic, numeric)


def check_render_backward(seed: int = 0) -> float:
    scenario, colors, _, rng = _micro_problem(seed)
    frame = scenario.frames()[0]
    mesh = scenario.target_mesh
    image, tape = render.render_foreground(mesh, colors, frame)
    d_image = rng.normal(size=image.shape)
    analytic = render.render_backward(tape, d_image)

    def forward(c):
        img, _ = render.render_foreground(mesh, c, frame)
        return float(np.sum(img * d_image))

    numeric = central_difference(forward, colors, eps=1e-3)
    return relative_error(analytic, numeric)


def check_policy_gradient(seed: int = 0) -> float:
    _, _, policy, rng = _micro_problem(seed)
    spec = policy.spec
    obs = rng.uniform(0.1, 0.9, (spec.height, spec.width, 3))
    d_action = rng.normal(size=7)
    analytic = policy.input_gradient(obs, 0, d_action)
    # full coordinate-wise FD over a 16x16x3 image is 1536 evaluations;
    # a random subset keeps the check fast without losing coverage
    idx = rng.choice(obs.size, size=192, replace=False)
    numeric = np.zeros(obs.size)
    flat = obs.reshape(-1)
    eps = 1e-6
    for i in idx:
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += eps
        xm[i] -= eps
        fp = float(policy.forward(xp.reshape(obs.shape), 0) @ d_action)
        fm = float(policy.forward(xm.reshape(obs.shape), 0) @ d_action)
        numeric[i] = (fp - fm) / (2.0 * eps)
    return relative_error(analytic.reshape(-1)[idx], numeric[idx])


def check_pipeline_gradient(seed: int = 0) -> float:
    """Full attack-loss gradient (render + composite + policy) vs FD."""
    scenario, colors, policy, _ = _micro_problem(seed)
    cfg = AttackConfig(level="L3", iterations=1, seed=seed)
    problem = AttackProblem(policy, scenario.frames(), cfg,
                            scenario.instruction_id,
                            weights=uniform_weights(scenario.num_timesteps))
    _, analytic, _ = problem.step_loss(colors)

    def forward(c):
        loss, _, _ = problem.step_loss(c)
        return loss

    numeric = central_difference(forward, colors, eps=1e-4)
    return relative_error(analytic, numeric)


def run_all() -> list[tuple[str, float, float, bool]]:
    """All gradient audits; returns (name, rel_err, tolerance, passed) rows."""
    rows = []
    for seed in range(3):
        err = check_bake_adjoint(seed)
        rows.append((f"bake_adjoint[seed={seed}]", err, BAKE_TOL, err < BAKE_TOL))
    for seed in range(3):
        err = check_render_backward(seed)
        rows.append((f"render_backward[seed={seed}]", err, RENDER_TOL, err < RENDER_TOL))
    for seed in range(3):
        err = check_policy_gradient(seed)
        rows.append((f"policy_gradient[seed={seed}]", err, POLICY_TOL, err < POLICY_TOL))
    for seed in range(5):
        err = check_pipeline_gradient(seed)
        rows.append((f"pipeline[seed={seed}]", err, PIPELINE_TOL, err < PIPELINE_TOL))
    return rows
