"""Adversarial vertex-color optimization against a frozen policy.

The optimization variable is the target object's per-vertex color array
``c``. Each step renders every (timestep, view) observation under the
current colors, measures the weighted L2 deviation of the policy's
actions from per-view clean references (untargeted, maximized) or from a
prescribed action trajectory (targeted, minimized), backpropagates
through policy, compositing, shading and bake, and takes a projected
sign-gradient step inside the L-infinity ball of radius epsilon around
the clean colors, intersected with [0, 1].

Robustness to deployment variation comes from two mechanisms layered on
top: multi-view optimization (fixed per-trajectory camera orbits, drawn
once) and expectation over transformations (fresh random 3D pose/camera
and 2D photometric transforms per step, with analytic adjoints for the
2D part).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .compositing import (SceneFrame, align_parameters, composite,
                          composite_backward, reference_render)
from .geometry import rotation_axis, translation
from .mesh import BakeMap, check_vertex_colors
from .policy import ACTION_DIM, Policy
from .render import rasterize, shade, shade_backward
from .seeding import substream
from .weighting import DEFAULT_TAU, FrameWeights, trajectory_weights

__all__ = [
    "PERTURBATION_LEVELS",
    "AttackConfig",
    "EoTConfig",
    "TargetTrajectory",
    "NonFiniteLossError",
    "Transform2D",
    "sample_eot",
    "sample_views",
    "AttackProblem",
    "untargeted_step_loss",
    "targeted_step_loss",
    "optimize",
    "default_target_trajectory",
]

# Per-channel L-infinity budgets on vertex colors. L0 shares the largest
# budget but adds an MSE naturalness penalty toward the clean colors.
PERTURBATION_LEVELS = {
    "L0": 64.0 / 255.0,
    "L1": 16.0 / 255.0,
    "L2": 32.0 / 255.0,
    "L3": 64.0 / 255.0,
}


class NonFiniteLossError(RuntimeError):
    """Attack aborted on a NaN/inf loss; carries a diagnostic snapshot."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class EoTConfig:
    """Uniform sampling ranges for the per-step stochastic transforms.

    The identity transform lies inside every range: rotation, translation,
    orbit and the photometric offsets are symmetric about zero, the
    distance scale range must contain 1, and the blur kernel set must
    contain 1 (no blur).
    """

    rotation_max: float = 0.0        # radians, object pose
    translation_max: float = 0.0     # scene units, object pose
    orbit_max: float = 0.0           # radians, camera yaw about the target
    distance_range: tuple[float, float] = (1.0, 1.0)
    brightness_max: float = 0.0
    contrast_max: float = 0.0        # contrast factor drawn from [1-c, 1+c]
    blur_sizes: tuple[int, ...] = (1,)

    def __post_init__(self):
        vals = (self.rotation_max, self.translation_max, self.orbit_max,
                self.brightness_max, self.contrast_max, *self.distance_range)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("EoT ranges must be finite")
        if min(self.rotation_max, self.translation_max, self.orbit_max,
               self.brightness_max, self.contrast_max) < 0:
            raise ValueError("EoT ranges must be nonnegative")
        lo, hi = self.distance_range
        if not (0 < lo <= 1.0 <= hi):
            raise ValueError("distance_range must contain 1")
        sizes = tuple(int(k) for k in self.blur_sizes)
        if 1 not in sizes or any(k < 1 or k % 2 == 0 for k in sizes):
            raise ValueError("blur_sizes must be odd and include 1")
        object.__setattr__(self, "blur_sizes", sizes)

    @property
    def has_3d(self) -> bool:
        return (self.rotation_max > 0 or self.translation_max > 0
                or self.orbit_max > 0 or self.distance_range != (1.0, 1.0))

    @property
    def has_2d(self) -> bool:
        return (self.brightness_max > 0 or self.contrast_max > 0
                or any(k > 1 for k in self.blur_sizes))

    @property
    def is_identity(self) -> bool:
        return not (self.has_3d or self.has_2d)


@dataclass(frozen=True)
class AttackConfig:
    mode: str = "untargeted"            # "untargeted" | "targeted"
    level: str = "L3"
    epsilon: float | None = None        # resolved from level when None
    lambda_mse: float = 0.0             # naturalness weight; nonzero only for L0
    step_size: float | None = None      # resolved to epsilon / 10 when None
    step_decay: float = 1.0             # step multiplier applied every step_decay_every
    step_decay_every: int = 0           # 0 keeps the step constant
    iterations: int = 200
    views: int = 1                      # views per timestep (view 0 is canonical)
    view_orbit_max: float = 0.0         # radians, bound for views 1..M-1
    tau: float = DEFAULT_TAU
    eot: EoTConfig | None = None        # None disables EoT entirely
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("untargeted", "targeted"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.level not in PERTURBATION_LEVELS:
            raise ValueError(f"unknown perturbation level {self.level!r}")
        level_eps = PERTURBATION_LEVELS[self.level]
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", level_eps)
        elif self.epsilon != level_eps and self.epsilon != 0.0:
            # epsilon 0 is the degenerate no-budget baseline; anything else
            # must agree with the declared level.
            raise ValueError(f"epsilon {self.epsilon} contradicts level {self.level}")
        if self.level == "L0":
            if self.lambda_mse <= 0:
                raise ValueError("L0 requires a positive naturalness weight")
        elif self.lambda_mse != 0.0:
            raise ValueError("lambda_mse is only used at level L0")
        if self.step_size is None:
            object.__setattr__(self, "step_size", self.epsilon / 10.0)
        if self.step_size < 0 or self.iterations < 1 or self.views < 1:
            raise ValueError("invalid step size, iteration count or view count")
        if not (0.0 < self.step_decay <= 1.0) or self.step_decay_every < 0:
            raise ValueError("invalid step decay schedule")


@dataclass(frozen=True)
class TargetTrajectory:
    """Prescribed erroneous actions, one per attacked timestep."""

    actions: np.ndarray  # (T, 7)

    def __post_init__(self):
        a = np.asarray(self.actions, float)
        object.__setattr__(self, "actions", a)
        if a.ndim != 2 or a.shape[1] != ACTION_DIM or not np.isfinite(a).all():
            raise ValueError("target actions must be a finite (T, 7) array")

    def __len__(self):
        return self.actions.shape[0]


# ---------------------------------------------------------------------------
# Stochastic transforms
# ---------------------------------------------------------------------------

def box_blur(image: np.ndarray, k: int) -> np.ndarray:
    """k x k box filter with zero padding and constant 1/k^2 normalization.

    The constant normalization makes the operator symmetric, hence its own
    adjoint, which the backward pass relies on.
    """
    if k == 1:
        return image
    pad = k // 2
    h, w = image.shape[:2]
    padded = np.pad(image, ((pad, pad), (pad, pad), (0, 0)))
    acc = np.zeros_like(image)
    for dy in range(k):
        for dx in range(k):
            acc += padded[dy:dy + h, dx:dx + w]
    return acc / (k * k)


@dataclass
class Transform2D:
    """Differentiable photometric transform: blur, contrast, brightness.

    Forward: clamp(contrast * (blur(x) - 0.5) + 0.5 + brightness, 0, 1).
    The adjoint replays the linear chain with a zero subgradient where the
    clamp was active.
    """

    brightness: float = 0.0
    contrast: float = 1.0
    blur_size: int = 1
    _pass_mask: np.ndarray = field(default=None, repr=False)

    @property
    def is_identity(self) -> bool:
        return self.brightness == 0.0 and self.contrast == 1.0 and self.blur_size == 1

    def apply(self, obs: np.ndarray) -> np.ndarray:
        if self.is_identity:
            self._pass_mask = None
            return obs
        raw = self.contrast * (box_blur(obs, self.blur_size) - 0.5) + 0.5 + self.brightness
        self._pass_mask = (raw > 0.0) & (raw < 1.0)
        return np.clip(raw, 0.0, 1.0)

    def adjoint(self, d_obs: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return d_obs
        if self._pass_mask is None:
            raise ValueError("adjoint called before apply")
        return box_blur(self.contrast * (d_obs * self._pass_mask), self.blur_size)


def sample_eot(cfg: EoTConfig, frame: SceneFrame, rng: np.random.Generator):
    """Draw one stochastic transform: a perturbed frame plus a 2D transform.

    The 3D part perturbs the object pose and the camera before rendering;
    the 2D part applies to the composited observation and carries an
    analytic adjoint. Components whose range is degenerate leave the frame
    untouched, so a zero-range config is exactly the identity.
    """
    angle = rng.uniform(-cfg.rotation_max, cfg.rotation_max)
    axis = rng.normal(size=3)
    offset = rng.uniform(-cfg.translation_max, cfg.translation_max, size=3)
    orbit = rng.uniform(-cfg.orbit_max, cfg.orbit_max)
    dist = rng.uniform(cfg.distance_range[0], cfg.distance_range[1])
    brightness = rng.uniform(-cfg.brightness_max, cfg.brightness_max)
    contrast = rng.uniform(1.0 - cfg.contrast_max, 1.0 + cfg.contrast_max)
    blur = int(rng.choice(np.asarray(cfg.blur_sizes)))

    target_model = frame.target_model
    if cfg.rotation_max > 0 or cfg.translation_max > 0:
        spin = rotation_axis(axis, angle) if cfg.rotation_max > 0 else np.eye(4)
        target_model = translation(offset) @ frame.target_model @ spin

    camera = frame.camera
    if cfg.orbit_max > 0 or cfg.distance_range != (1.0, 1.0):
        camera = _orbit_camera(camera, yaw=orbit, distance_scale=dist)

    out = frame
    if target_model is not frame.target_model or camera is not frame.camera:
        out = frame.with_pose(target_model=target_model, camera=camera)
    return out, Transform2D(brightness=brightness, contrast=contrast, blur_size=blur)


def _orbit_camera(camera, yaw: float, distance_scale: float = 1.0):
    eye = np.asarray(camera.eye, float)
    target = np.asarray(camera.target, float)
    arm = eye - target
    spun = rotation_axis(np.asarray(camera.up, float), yaw)[:3, :3] @ arm
    return camera.with_eye(target + distance_scale * spun)


def sample_views(frame: SceneFrame, m_views: int, rng: np.random.Generator,
                 orbit_max: float = 0.0) -> list[SceneFrame]:
    """The canonical frame plus m_views - 1 random camera orbits of it."""
    if m_views < 1:
        raise ValueError("need at least one view")
    frames = [frame]
    for _ in range(m_views - 1):
        yaw = rng.uniform(-orbit_max, orbit_max)
        if orbit_max == 0.0:
            frames.append(frame)
        else:
            frames.append(frame.with_pose(camera=_orbit_camera(frame.camera, yaw)))
    return frames


# ---------------------------------------------------------------------------
# Loss evaluation
# ---------------------------------------------------------------------------

class _FrameContext:
    """Static per-(t, view) render state reused across optimizer steps.

    Rasterization, background image and silhouette mask depend only on
    geometry and camera, not on the colors under optimization, so they
    are computed once; each step only re-shades and re-composites.
    """

    def __init__(self, frame: SceneFrame):
        self.frame = frame
        mvp, self.lighting = align_parameters(frame)
        self.background, self.mask = reference_render(frame)
        self.frags = rasterize(frame.target_mesh, mvp, frame.image_size,
                               model=frame.target_model)

    def observe(self, texture: np.ndarray):
        fg, tape = shade(self.frags, texture, self.lighting)
        return composite(self.mask, fg, self.background), tape

    def backward_texture(self, tape, d_obs: np.ndarray) -> np.ndarray:
        return shade_backward(tape, composite_backward(self.mask, d_obs))


class AttackProblem:
    """One attack instance: policy, trajectory, frozen weights, references.

    Preparing the problem runs the clean rollout once: it fixes the view
    set per timestep, records the clean reference action for every
    (timestep, view), and freezes the frame weights (computed from the
    canonical clean observation sequence unless supplied).
    """

    def __init__(self, policy: Policy, trajectory, cfg: AttackConfig,
                 instruction_id: int = 0, weights: FrameWeights | None = None):
        if len(trajectory) < 1:
            raise ValueError("empty trajectory")
        self.policy = policy
        self.cfg = cfg
        self.instruction_id = instruction_id
        self.clean_colors = np.asarray(trajectory[0].target_clean_colors, float)
        self.bake = BakeMap.build(trajectory[0].target_mesh, trajectory[0].texture_size)

        view_rng = substream(cfg.seed, "views")
        self.contexts: list[list[_FrameContext]] = []
        for frame in trajectory:
            frames = sample_views(frame, cfg.views, view_rng, cfg.view_orbit_max)
            self.contexts.append([_FrameContext(f) for f in frames])

        clean_texture = self.bake.apply(self.clean_colors)
        self.reference_actions = []
        self.clean_observations = []  # canonical view only
        for views in self.contexts:
            row = []
            for m, ctx in enumerate(views):
                obs, _ = ctx.observe(clean_texture)
                if m == 0:
                    self.clean_observations.append(obs)
                row.append(policy.forward(obs, instruction_id))
            self.reference_actions.append(row)

        self.dynamics_profile = None
        if weights is None:
            weights, self.dynamics_profile = trajectory_weights(
                self.clean_observations, tau=cfg.tau)
        if len(weights) != len(trajectory):
            raise ValueError("weights length does not match trajectory")
        self.weights = weights

    @property
    def num_timesteps(self) -> int:
        return len(self.contexts)

    def step_loss(self, colors: np.ndarray, target: TargetTrajectory | None = None,
                  rng: np.random.Generator | None = None):
        """Objective value, its vertex-color gradient, and the mean deviation.

        ``target`` switches the per-frame term from deviation-from-clean
        (to be maximized) to deviation-from-target (to be minimized); the
        gradient returned is always the gradient of the summed objective.
        A frame whose deviation is exactly zero contributes zero gradient
        (subgradient at the L2 kink).
        """
        colors = check_vertex_colors(self.contexts[0][0].frame.target_mesh, colors)
        if target is not None and len(target) != self.num_timesteps:
            raise ValueError("target trajectory length mismatch")
        eot = self.cfg.eot
        if eot is not None and rng is None:
            rng = substream(self.cfg.seed, "eot")
        texture = self.bake.apply(colors)
        m_views = self.cfg.views
        loss = 0.0
        d_texture = np.zeros_like(texture)
        deviations = []
        for t, views in enumerate(self.contexts):
            coef = self.weights[t] / m_views
            for m, ctx in enumerate(views):
                transform = None
                use_ctx = ctx
                if eot is not None:
                    frame, transform = sample_eot(eot, ctx.frame, rng)
                    if frame is not ctx.frame:
                        use_ctx = _FrameContext(frame)
                obs, tape = use_ctx.observe(texture)
                if transform is not None:
                    obs = transform.apply(obs)
                action = self.policy.forward(obs, self.instruction_id)
                ref = target.actions[t] if target is not None else self.reference_actions[t][m]
                diff = action - ref
                norm = float(np.linalg.norm(diff))
                loss += coef * norm
                deviations.append(norm)
                if norm > 0.0:
                    d_action = (coef / norm) * diff
                    d_obs = self.policy.input_gradient(obs, self.instruction_id, d_action)
                    if transform is not None:
                        d_obs = transform.adjoint(d_obs)
                    d_texture += use_ctx.backward_texture(tape, d_obs)
        d_colors = self.bake.backward(d_texture)
        return loss, d_colors, float(np.mean(deviations))


def untargeted_step_loss(policy: Policy, trajectory, colors, weights: FrameWeights,
                         cfg: AttackConfig, instruction_id: int = 0,
                         rng: np.random.Generator | None = None):
    """Weighted deviation from clean references and its color gradient."""
    problem = AttackProblem(policy, trajectory, cfg, instruction_id, weights=weights)
    loss, grad, _ = problem.step_loss(colors, rng=rng)
    return loss, grad


def targeted_step_loss(policy: Policy, trajectory, colors, weights: FrameWeights,
                       target: TargetTrajectory, cfg: AttackConfig,
                       instruction_id: int = 0, rng: np.random.Generator | None = None):
    """Weighted deviation from the target trajectory and its color gradient."""
    problem = AttackProblem(policy, trajectory, cfg, instruction_id, weights=weights)
    loss, grad, _ = problem.step_loss(colors, target=target, rng=rng)
    return loss, grad


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

def optimize(policy: Policy, trajectory, cfg: AttackConfig,
             target: TargetTrajectory | None = None, instruction_id: int = 0,
             weights: FrameWeights | None = None, problem: AttackProblem | None = None):
    """Projected sign-gradient attack. Returns (colors, per-iteration metrics).

    Untargeted mode ascends the deviation objective, targeted mode
    descends it; at level L0 the naturalness penalty
    ``lambda * ||c - c_clean||^2`` is folded into the objective. After
    every step the colors are projected back into the epsilon ball around
    the clean colors and into [0, 1], and both constraints are asserted.

    The iterate starts at a seeded uniform draw inside the budget rather
    than at the clean colors: the deviation objective has a zero
    subgradient exactly there (every per-frame deviation sits at the L2
    kink), so a clean start would never move. A zero budget degenerates
    to the clean colors and every step is a no-op.

    A prepared ``problem`` may be passed to reuse its cached render state
    across configs that share the view and EoT settings (e.g. budget
    sweeps); the budget, step schedule and mode always come from ``cfg``.
    """
    if (target is None) == (cfg.mode == "targeted"):
        raise ValueError(f"mode {cfg.mode!r} and target argument disagree")
    if problem is None:
        problem = AttackProblem(policy, trajectory, cfg, instruction_id, weights=weights)
    clean = problem.clean_colors
    eps = cfg.epsilon
    init_rng = substream(cfg.seed, "init")
    colors = np.clip(clean + init_rng.uniform(-eps, eps, size=clean.shape), 0.0, 1.0)
    sign = -1.0 if cfg.mode == "targeted" else 1.0
    metrics = []
    for iteration in range(cfg.iterations):
        started = time.perf_counter()
        rng = substream(cfg.seed, "eot", iteration) if cfg.eot is not None else None
        loss, grad, mean_dev = problem.step_loss(colors, target=target, rng=rng)
        penalty = cfg.lambda_mse * float(np.sum((colors - clean) ** 2))
        objective = loss - sign * penalty  # maximized if untargeted, minimized if targeted
        if not np.isfinite(objective) or not np.isfinite(grad).all():
            raise NonFiniteLossError(
                f"non-finite loss at iteration {iteration}",
                diagnostics={"iteration": iteration, "loss": loss,
                             "colors": colors.copy(), "grad": grad.copy()},
            )
        step = cfg.step_size
        if cfg.step_decay_every:
            step *= cfg.step_decay ** (iteration // cfg.step_decay_every)
        ascent = sign * grad - 2.0 * cfg.lambda_mse * (colors - clean)
        colors = colors + step * np.sign(ascent)
        colors = np.clip(colors, clean - eps, clean + eps)
        colors = np.clip(colors, 0.0, 1.0)
        budget = float(np.abs(colors - clean).max()) if colors.size else 0.0
        assert budget <= eps + 1e-9, "projection violated the epsilon budget"
        assert colors.min() >= 0.0 and colors.max() <= 1.0, "projection left [0, 1]"
        metrics.append({
            "iteration": iteration,
            "loss": float(objective),
            "mean_deviation": mean_dev,
            "linf_budget_used": budget,
            "wall_ms": (time.perf_counter() - started) * 1000.0,
        })
    return colors, metrics


def default_target_trajectory(reference_actions, alt_point, gripper: float = 0.9,
                              redirect_gain: float = 0.25) -> TargetTrajectory:
    """Redirection target: ramp the commands toward an alternative 3D point.

    The prescribed translation blends, progressively over the episode,
    from the clean command toward a constant step (of the clean commands'
    typical magnitude) pointing at ``alt_point``; rotation deltas decay on
    the same ramp and the gripper is pulled toward the given open command.
    ``redirect_gain`` sets the final blend depth: small values keep the
    hijacked trajectory close to plausible clean behavior, which is the
    point of a stealthy redirection.
    """
    refs = np.asarray(reference_actions, float)
    if refs.ndim != 2 or refs.shape[1] != ACTION_DIM:
        raise ValueError("reference actions must be (T, 7)")
    if not (0.0 < redirect_gain <= 1.0):
        raise ValueError("redirect_gain must lie in (0, 1]")
    t_len = refs.shape[0]
    direction = np.asarray(alt_point, float)
    norm = np.linalg.norm(direction)
    if norm < 1e-12:
        raise ValueError("alternative target point must be nonzero")
    step = float(np.mean(np.linalg.norm(refs[:, :3], axis=1)))
    toward = direction / norm * step
    ramp = (np.linspace(0.0, 1.0, t_len) * redirect_gain)[:, None] \
        if t_len > 1 else np.full((1, 1), redirect_gain)
    out = refs.copy()
    out[:, :3] = refs[:, :3] + ramp * (toward - refs[:, :3])
    out[:, 3:6] = refs[:, 3:6] * (1.0 - ramp)
    out[:, 6] = refs[:, 6] + ramp[:, 0] * (gripper - refs[:, 6])
    return TargetTrajectory(actions=out)
