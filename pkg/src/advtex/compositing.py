"""Dual-path scene rendering and differentiable compositing.

One rendering path serves as the reference: it draws every object in the
scene, target included, with fixed appearance and no tape. The other path
renders only the target object with gradient tracking. The two are glued
together per frame by (a) a silhouette mask taken from the full-scene
depth buffer and (b) a single source of truth for the target's MVP and
lighting, so the composited observation

    obs = mask * foreground + (1 - mask) * background

is pixel-identical to the reference render whenever the target wears its
clean colors, while gradients flow only through the masked foreground.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import geometry, render
from .geometry import CameraSpec
from .mesh import BakeMap, Mesh, check_vertex_colors
from .render import FragmentBuffer, Lighting, RenderTape

logger = logging.getLogger(__name__)

__all__ = [
    "SceneObject",
    "SceneFrame",
    "reference_render",
    "render_background",
    "extract_mask",
    "align_parameters",
    "composite",
    "composite_backward",
    "render_adversarial_observation",
    "ObservationTape",
]


@dataclass(frozen=True)
class SceneObject:
    """A static scene prop: mesh, object-to-world transform, fixed texture."""

    mesh: Mesh
    model: np.ndarray
    texture: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "model", np.asarray(self.model, float))
        object.__setattr__(self, "texture", np.asarray(self.texture, float))
        if self.model.shape != (4, 4):
            raise ValueError("model matrix must be 4x4")
        if self.texture.ndim != 3 or self.texture.shape[2] != 3:
            raise ValueError("texture must be (H_t, W_t, 3)")


@dataclass(frozen=True)
class SceneFrame:
    """Simulator state for one timestep, shared by both render paths."""

    t: int
    target_mesh: Mesh
    target_model: np.ndarray
    target_clean_colors: np.ndarray
    camera: CameraSpec
    lighting: Lighting
    background: tuple[SceneObject, ...] = ()
    texture_size: tuple[int, int] = (64, 64)

    def __post_init__(self):
        object.__setattr__(self, "target_model", np.asarray(self.target_model, float))
        object.__setattr__(self, "background", tuple(self.background))
        check_vertex_colors(self.target_mesh, self.target_clean_colors)
        if self.t < 0:
            raise ValueError("timestep must be nonnegative")
        if not np.isfinite(self.target_model).all():
            raise ValueError("target model matrix must be finite")

    @property
    def image_size(self) -> tuple[int, int]:
        return (self.camera.height, self.camera.width)

    def with_pose(self, target_model=None, camera=None) -> "SceneFrame":
        return SceneFrame(
            t=self.t,
            target_mesh=self.target_mesh,
            target_model=self.target_model if target_model is None else target_model,
            target_clean_colors=self.target_clean_colors,
            camera=camera or self.camera,
            lighting=self.lighting,
            background=self.background,
            texture_size=self.texture_size,
        )


def align_parameters(frame: SceneFrame):
    """The exact MVP and lighting the reference path uses for the target.

    Both renderers consume this one composition, which is what keeps them
    geometrically and photometrically consistent.
    """
    proj = geometry.perspective(frame.camera)
    view = geometry.look_at(frame.camera)
    mvp = geometry.compose_mvp(proj, view, frame.target_model)
    return mvp, frame.lighting


_TARGET_ID = -2  # owner tag for the target object in the merged depth buffer


def _scene_fragments(frame: SceneFrame):
    """Rasterize all scene objects into one z-buffered fragment set.

    Returns the merged FragmentBuffer plus a per-pixel owner map: index
    into frame.background, or _TARGET_ID for the target, or -1 for empty.
    Objects are merged in a fixed order (background list, then target)
    with a strict depth test, so ties are resolved deterministically.
    """
    height, width = frame.image_size
    frags = FragmentBuffer(
        face=np.full((height, width), -1, np.int32),
        bary=np.zeros((height, width, 3)),
        depth=np.full((height, width), np.inf),
        uv=np.zeros((height, width, 2)),
        normal=np.zeros((height, width, 3)),
    )
    proj = geometry.perspective(frame.camera)
    view = geometry.look_at(frame.camera)
    owner = np.full((height, width), -1, np.int32)

    def merge(mesh, model, tag):
        mvp = geometry.compose_mvp(proj, view, model)
        before = frags.depth.copy()
        render._rasterize_into(frags, mesh, mvp, model)
        owner[frags.depth < before] = tag

    for idx, obj in enumerate(frame.background):
        merge(obj.mesh, obj.model, idx)
    merge(frame.target_mesh, frame.target_model, _TARGET_ID)
    render._finalize_depth(frags)
    return frags, owner


def reference_render(frame: SceneFrame):
    """One full-scene pass: the reference observation plus the target mask.

    Fused form of :func:`render_background` and :func:`extract_mask`; both
    delegate here, so the three stay consistent by construction.
    """
    frags, owner = _scene_fragments(frame)
    height, width = frame.image_size
    image = np.zeros((height, width, 3))
    clean_texture = BakeMap.build(frame.target_mesh, frame.texture_size).apply(
        np.asarray(frame.target_clean_colors, float))

    def shade_owner(tag, texture):
        sel = owner == tag
        if not sel.any():
            return
        sub = FragmentBuffer(
            face=np.where(sel, frags.face, -1),
            bary=frags.bary, depth=frags.depth, uv=frags.uv, normal=frags.normal,
        )
        shaded, _ = render.shade(sub, texture, frame.lighting)
        image[sel] = shaded[sel]

    for idx, obj in enumerate(frame.background):
        shade_owner(idx, obj.texture)
    shade_owner(_TARGET_ID, clean_texture)
    mask = (owner == _TARGET_ID).astype(np.uint8)
    if not mask.any():
        # kept in the trajectory: the empty mask makes its gradient zero
        logger.info("target fully occluded at timestep %d", frame.t)
    return image, mask


def render_background(frame: SceneFrame) -> np.ndarray:
    """Tape-free reference render of the full scene, clean target included."""
    image, _ = reference_render(frame)
    return image


def extract_mask(frame: SceneFrame) -> np.ndarray:
    """Binary mask of pixels where the target is the frontmost surface.

    Computed from the full-scene depth buffer, so occluders win. A fully
    occluded target yields an all-zero mask; that frame then contributes
    zero gradient through the compositing, which is the intended behavior.
    """
    _, mask = reference_render(frame)
    return mask


def composite(mask: np.ndarray, fg: np.ndarray, bg: np.ndarray) -> np.ndarray:
    """Per-pixel selection: mask * fg + (1 - mask) * bg."""
    mask = np.asarray(mask)
    fg = np.asarray(fg, float)
    bg = np.asarray(bg, float)
    if fg.shape != bg.shape or mask.shape != fg.shape[:2]:
        raise ValueError(f"shape mismatch: mask {mask.shape}, fg {fg.shape}, bg {bg.shape}")
    m = mask.astype(float)[..., None]
    return m * fg + (1.0 - m) * bg


def composite_backward(mask: np.ndarray, d_obs: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`composite` w.r.t. the foreground: mask * d_obs."""
    mask = np.asarray(mask)
    d_obs = np.asarray(d_obs, float)
    if mask.shape != d_obs.shape[:2]:
        raise ValueError(f"shape mismatch: mask {mask.shape}, d_obs {d_obs.shape}")
    return mask.astype(float)[..., None] * d_obs


@dataclass
class ObservationTape:
    """Backward bundle for one composited observation."""

    render_tape: RenderTape
    mask: np.ndarray

    def backward(self, d_obs: np.ndarray) -> np.ndarray:
        """Observation gradient -> vertex-color gradient."""
        return render.render_backward(self.render_tape, composite_backward(self.mask, d_obs))


def render_adversarial_observation(frame: SceneFrame, colors: np.ndarray):
    """Full per-frame pipeline: reference render, mask, foreground, composite.

    Returns the observation seen by the policy and the tape bundle whose
    ``backward`` carries an observation-space gradient to the target's
    vertex colors. Background appearance receives no gradient by
    construction.
    """
    colors = check_vertex_colors(frame.target_mesh, colors)
    bg, mask = reference_render(frame)
    fg, tape = render.render_foreground(frame.target_mesh, colors, frame)
    obs = composite(mask, fg, bg)
    return obs, ObservationTape(render_tape=tape, mask=mask)
