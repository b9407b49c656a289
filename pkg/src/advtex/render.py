"""Deterministic software rasterizer with a hand-derived backward pass.

The forward path is rasterize -> bilinear texture sampling -> Lambertian
shading, and every quantity the chain rule needs (sampling footprints,
shading scalars, clamp state) is recorded on a tape. The backward pass
propagates an image-space gradient to the texture and on to per-vertex
colors. Geometry carries no gradient: coverage is binary and vertex
positions are never differentiated, so the attack surface is appearance
only.

Determinism: identical inputs produce bit-identical images and tapes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .mesh import BakeMap, Mesh, check_vertex_colors
from .raster2d import triangle_coverage

__all__ = [
    "Lighting",
    "FragmentBuffer",
    "RenderTape",
    "rasterize",
    "shade",
    "shade_backward",
    "render_foreground",
    "render_backward",
]

# Triangles with any vertex at w below this are discarded instead of clipped;
# scenes are expected to keep geometry inside the frustum.
_MIN_CLIP_W = 1e-9


@dataclass(frozen=True)
class Lighting:
    """Ambient/diffuse intensities, reflectance, and a world light direction."""

    ambient: float
    diffuse: float
    reflectance: float
    direction: tuple[float, float, float]

    def __post_init__(self):
        if self.ambient < 0 or self.diffuse < 0:
            raise ValueError("light intensities must be nonnegative")
        if not (0.0 <= self.reflectance <= 1.0):
            raise ValueError("reflectance must lie in [0, 1]")
        d = np.asarray(self.direction, float)
        n = np.linalg.norm(d)
        if not np.isfinite(n) or n < 1e-12:
            raise ValueError("light direction must be a nonzero vector")
        object.__setattr__(self, "direction", tuple(d / n))


@dataclass
class FragmentBuffer:
    """Per-pixel rasterization output.

    ``face`` is -1 where nothing covers the pixel. ``bary`` holds
    perspective-corrected barycentrics that sum to 1 on covered pixels.
    ``depth`` is NDC z, ``uv`` and ``normal`` are interpolated vertex
    attributes (normals renormalized, world space).
    """

    face: np.ndarray     # (H, W) int32
    bary: np.ndarray     # (H, W, 3)
    depth: np.ndarray    # (H, W)
    uv: np.ndarray       # (H, W, 2)
    normal: np.ndarray   # (H, W, 3)

    @property
    def covered(self) -> np.ndarray:
        return self.face >= 0


@dataclass
class RenderTape:
    """Everything needed to replay the chain rule for one shaded image.

    Stores the fragment buffer, the bilinear sampling footprint (four
    texel indices and weights per pixel), the scalar Lambert factor, and
    which channels were clamped at 1. ``bake_map`` is attached by
    :func:`render_foreground` so the gradient can continue to the vertex
    colors.
    """

    frags: FragmentBuffer
    texel_rows: np.ndarray     # (H, W, 4) int32
    texel_cols: np.ndarray     # (H, W, 4) int32
    texel_weights: np.ndarray  # (H, W, 4)
    shading: np.ndarray        # (H, W)
    unclamped: np.ndarray      # (H, W, 3) bool, True where gradient passes
    texture_shape: tuple[int, int]
    bake_map: BakeMap | None = None


def rasterize(mesh: Mesh, mvp: np.ndarray, image_size: tuple[int, int],
              model: np.ndarray | None = None) -> FragmentBuffer:
    """Z-buffered coverage of the mesh at pixel centers.

    ``image_size`` is (height, width). Pixel (r, c) is sampled at NDC
    x = (c + 0.5) / W * 2 - 1, y = 1 - (r + 0.5) / H * 2, so row 0 is the
    top of the image. Depth ties keep the earlier face. ``model`` (when
    given) is used only to move normals to world space; pass the same
    model matrix that is already folded into ``mvp``.
    """
    height, width = image_size
    frags = FragmentBuffer(
        face=np.full((height, width), -1, np.int32),
        bary=np.zeros((height, width, 3)),
        depth=np.full((height, width), np.inf),
        uv=np.zeros((height, width, 2)),
        normal=np.zeros((height, width, 3)),
    )
    _rasterize_into(frags, mesh, mvp, model)
    _finalize_depth(frags)
    return frags


def _rasterize_into(frags: FragmentBuffer, mesh: Mesh, mvp: np.ndarray,
                    model: np.ndarray | None, face_offset: int = 0) -> None:
    """Merge one mesh into an existing fragment buffer (shared z-buffer)."""
    height, width = frags.face.shape
    clip = (np.asarray(mvp, float) @ np.c_[mesh.vertices, np.ones(mesh.num_vertices)].T).T
    w = clip[:, 3]
    ok = w > _MIN_CLIP_W
    ndc = np.zeros((mesh.num_vertices, 3))
    ndc[ok] = clip[ok, :3] / w[ok, None]
    screen = np.empty((mesh.num_vertices, 2))
    screen[:, 0] = (ndc[:, 0] + 1.0) * 0.5 * width
    screen[:, 1] = (1.0 - ndc[:, 1]) * 0.5 * height

    if model is None:
        world_normals = mesh.normals
    else:
        nm = geometry.normal_matrix(model)
        world_normals = mesh.normals @ nm.T
        world_normals = world_normals / np.linalg.norm(world_normals, axis=1, keepdims=True)

    for f_idx, face in enumerate(mesh.faces):
        if not ok[face].all():
            continue
        p0, p1, p2 = screen[face]
        rows, cols, sbary = triangle_coverage(p0, p1, p2, (height, width))
        if rows.size == 0:
            continue
        # NDC z is an affine function of screen x, y on the triangle's plane,
        # so screen-space barycentrics interpolate it exactly.
        depth = sbary @ ndc[face, 2]
        valid = (depth >= -1.0) & (depth <= 1.0) & (depth < frags.depth[rows, cols])
        if not valid.any():
            continue
        rows, cols, sbary, depth = rows[valid], cols[valid], sbary[valid], depth[valid]
        # Perspective-correct barycentrics for attribute interpolation.
        inv_w = 1.0 / w[face]
        pb = sbary * inv_w[None, :]
        pb /= pb.sum(axis=1, keepdims=True)
        frags.face[rows, cols] = f_idx + face_offset
        frags.bary[rows, cols] = pb
        frags.depth[rows, cols] = depth
        frags.uv[rows, cols] = pb @ mesh.uvs[face]
        normal = pb @ world_normals[face]
        norm = np.linalg.norm(normal, axis=1, keepdims=True)
        norm[norm == 0.0] = 1.0
        frags.normal[rows, cols] = normal / norm


def _finalize_depth(frags: FragmentBuffer) -> None:
    frags.depth[~frags.covered] = 0.0


def _bilinear_footprint(uv: np.ndarray, texture_shape: tuple[int, int]):
    """Four texel indices and weights per pixel, clamp-to-edge addressing."""
    t_h, t_w = texture_shape
    x = uv[..., 0] * t_w - 0.5
    y = uv[..., 1] * t_h - 0.5
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    cols0 = np.clip(x0.astype(np.int64), 0, t_w - 1)
    cols1 = np.clip(x0.astype(np.int64) + 1, 0, t_w - 1)
    rows0 = np.clip(y0.astype(np.int64), 0, t_h - 1)
    rows1 = np.clip(y0.astype(np.int64) + 1, 0, t_h - 1)
    rows = np.stack([rows0, rows0, rows1, rows1], axis=-1).astype(np.int32)
    cols = np.stack([cols0, cols1, cols0, cols1], axis=-1).astype(np.int32)
    weights = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy),
                        (1 - fx) * fy, fx * fy], axis=-1)
    return rows, cols, weights


def shade(frags: FragmentBuffer, texture: np.ndarray, lighting: Lighting):
    """Lambert-shade a fragment buffer against a texture.

    Covered pixels get ``clamp(rho * (I_a + I_d * max(0, n.l)) * sample)``
    where ``sample`` is the bilinear texture sample at the fragment UV;
    uncovered pixels are black. Returns the image and the tape for the
    backward pass.
    """
    texture = np.asarray(texture, float)
    height, width = frags.face.shape
    covered = frags.covered

    rows, cols, weights = _bilinear_footprint(frags.uv, texture.shape[:2])
    weights = np.where(covered[..., None], weights, 0.0)
    sample = np.einsum("hwk,hwkc->hwc", weights, texture[rows, cols])

    light = np.asarray(lighting.direction, float)
    lambert = np.maximum(0.0, frags.normal @ light)
    shading = lighting.reflectance * (lighting.ambient + lighting.diffuse * lambert)
    shading = np.where(covered, shading, 0.0)

    raw = shading[..., None] * sample
    image = np.clip(raw, 0.0, 1.0)
    tape = RenderTape(
        frags=frags,
        texel_rows=rows,
        texel_cols=cols,
        texel_weights=weights,
        shading=shading,
        unclamped=raw < 1.0,
        texture_shape=texture.shape[:2],
    )
    return image, tape


def shade_backward(tape: RenderTape, d_image: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`shade` with respect to the texture.

    Channels that hit the upper clamp in the forward pass contribute
    nothing (zero subgradient outside [0, 1]; the lower clamp can never
    activate because shading and samples are nonnegative).
    """
    d_image = np.asarray(d_image, float)
    expected = (*tape.frags.face.shape, 3)
    if d_image.shape != expected:
        raise ValueError(f"d_image shape {d_image.shape}, expected {expected}")
    d_sample = d_image * tape.unclamped * tape.shading[..., None]
    d_texture = np.zeros((*tape.texture_shape, 3))
    contrib = tape.texel_weights[..., None] * d_sample[:, :, None, :]
    np.add.at(d_texture,
              (tape.texel_rows.reshape(-1), tape.texel_cols.reshape(-1)),
              contrib.reshape(-1, 3))
    return d_texture


def render_foreground(mesh: Mesh, colors: np.ndarray, frame):
    """Render the target object alone, as a function of its vertex colors.

    Bakes the colors into a texture, rasterizes the mesh under the frame's
    aligned MVP transform, and shades with the frame's lighting. Returns
    the image and a tape whose backward reaches the vertex colors.
    """
    from .compositing import align_parameters  # local import, avoids a cycle

    colors = check_vertex_colors(mesh, colors)
    mvp, lighting = align_parameters(frame)
    bake = BakeMap.build(mesh, frame.texture_size)
    texture = bake.apply(colors)
    frags = rasterize(mesh, mvp, frame.image_size, model=frame.target_model)
    image, tape = shade(frags, texture, lighting)
    tape.bake_map = bake
    return image, tape


def render_backward(tape: RenderTape, d_image: np.ndarray) -> np.ndarray:
    """Image gradient -> vertex-color gradient through the full tape."""
    if tape.bake_map is None:
        raise ValueError("tape has no bake map; use a tape from render_foreground")
    return tape.bake_map.backward(shade_backward(tape, d_image))
