"""Triangle-mesh data model, vertex-color texture bake, and file IO.

The attack variable is a set of per-vertex RGB colors. ``BakeMap`` expands
those colors into a texture map by rasterizing each face into UV space and
barycentrically blending the face's three vertex colors; its ``backward``
is the exact adjoint of that expansion. Because the blend is a convex
combination, baked texels stay inside [0, 1] whenever the colors do.

The vertex count is expected to be far smaller than the texel count: the
bake confines any optimized perturbation to the smooth, low-dimensional
surface spanned by the mesh's interpolation, which is the point of
parameterizing the texture through vertex colors. This is not enforced.
Meshes used as bake targets need face-injective UVs; overlapping charts
would let later faces overwrite earlier ones.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .raster2d import signed_area2, triangle_coverage

__all__ = [
    "Mesh",
    "MeshError",
    "BakeMap",
    "bake_vertex_colors",
    "bake_backward",
    "load_mesh",
    "save_texture",
    "load_texture",
    "save_vertex_colors",
    "load_vertex_colors",
    "FILL_COLOR",
]

FILL_COLOR = 0.5  # texels covered by no face; never sampled, never receives gradient


class MeshError(ValueError):
    """Raised for malformed meshes or unsupported mesh files."""


@dataclass(frozen=True)
class Mesh:
    """Immutable triangle mesh with per-vertex UVs and unit normals.

    ``vertices``: (N_v, 3) object-space positions.
    ``faces``: (N_f, 3) vertex indices.
    ``uvs``: (N_v, 2) texture coordinates in [0, 1].
    ``normals``: (N_v, 3) unit vectors.
    """

    vertices: np.ndarray
    faces: np.ndarray
    uvs: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.ascontiguousarray(self.vertices, float))
        object.__setattr__(self, "faces", np.ascontiguousarray(self.faces, np.int32))
        object.__setattr__(self, "uvs", np.ascontiguousarray(self.uvs, float))
        object.__setattr__(self, "normals", np.ascontiguousarray(self.normals, float))
        n_v = self.vertices.shape[0]
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must be (N_v, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError("faces must be (N_f, 3)")
        if self.uvs.shape != (n_v, 2):
            raise MeshError("uvs must be (N_v, 2)")
        if self.normals.shape != (n_v, 3):
            raise MeshError("normals must be (N_v, 3)")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= n_v):
            raise MeshError("face index out of range")
        if not np.isfinite(self.vertices).all() or not np.isfinite(self.uvs).all():
            raise MeshError("non-finite mesh data")
        lengths = np.linalg.norm(self.normals, axis=1)
        if self.normals.size and np.abs(lengths - 1.0).max() > 1e-6:
            raise MeshError("normals must be unit length")
        if self.uvs.size and (self.uvs.min() < -1e-9 or self.uvs.max() > 1.0 + 1e-9):
            raise MeshError("uvs must lie in [0, 1]")
        for i, (a, b, c) in enumerate(self.faces):
            e1 = self.vertices[b] - self.vertices[a]
            e2 = self.vertices[c] - self.vertices[a]
            if np.linalg.norm(np.cross(e1, e2)) <= 0.0:
                raise MeshError(f"face {i} is degenerate in object space")

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]


def check_vertex_colors(mesh: Mesh, colors: np.ndarray) -> np.ndarray:
    colors = np.asarray(colors, float)
    if colors.shape != (mesh.num_vertices, 3):
        raise ValueError(f"colors must be ({mesh.num_vertices}, 3), got {colors.shape}")
    if colors.min() < -1e-9 or colors.max() > 1.0 + 1e-9:
        raise ValueError("vertex colors must lie in [0, 1]")
    return colors


class BakeMap:
    """Precomputed UV-space coverage of a mesh at one texture resolution.

    For each texel: the covering face (or -1) and the barycentric weights
    of that face's vertices at the texel center. Texel ownership uses the
    half-open fill rule from :mod:`advtex.raster2d`, so shared edges are
    never written twice and the forward/backward pair stays an exact
    adjoint. Build once, then ``apply`` per color update.
    """

    def __init__(self, mesh: Mesh, out_size: tuple[int, int]):
        height, width = out_size
        self.shape = (height, width)
        self.texel_face = np.full((height, width), -1, np.int32)
        self.texel_bary = np.zeros((height, width, 3))
        for f_idx, face in enumerate(mesh.faces):
            uv = mesh.uvs[face]
            # UV (u, v) -> texel grid (x, y): u spans columns, v spans rows.
            pts = uv * np.array([width, height], float)
            if signed_area2(pts[0], pts[1], pts[2]) == 0.0:
                _reject_degenerate_uv_face(f_idx, pts, (height, width))
                continue
            rows, cols, bary = triangle_coverage(pts[0], pts[1], pts[2], (height, width))
            self.texel_face[rows, cols] = f_idx
            self.texel_bary[rows, cols] = bary
        rows, cols = np.nonzero(self.texel_face >= 0)
        self._covered = (rows, cols)
        self._vertex_idx = mesh.faces[self.texel_face[rows, cols]]
        self._bary = self.texel_bary[rows, cols]
        self._num_vertices = mesh.num_vertices

    @classmethod
    def build(cls, mesh: Mesh, out_size: tuple[int, int]) -> "BakeMap":
        return cls(mesh, out_size)

    def apply(self, colors: np.ndarray) -> np.ndarray:
        """Expand per-vertex colors into a texture map."""
        height, width = self.shape
        texture = np.full((height, width, 3), FILL_COLOR)
        rows, cols = self._covered
        blended = np.einsum("ki,kic->kc", self._bary, colors[self._vertex_idx])
        texture[rows, cols] = blended
        return texture

    def backward(self, d_texture: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`apply`: texture gradient to vertex-color gradient."""
        if d_texture.shape != (*self.shape, 3):
            raise ValueError(f"gradient shape {d_texture.shape} does not match texture {self.shape}")
        rows, cols = self._covered
        d_tex = np.asarray(d_texture, float)[rows, cols]  # (K, 3)
        d_colors = np.zeros((self._num_vertices, 3))
        for i in range(3):
            np.add.at(d_colors, self._vertex_idx[:, i], self._bary[:, i:i + 1] * d_tex)
        return d_colors


def _reject_degenerate_uv_face(f_idx, pts, grid_shape):
    # A zero-area UV face that would claim texels is a modelling error.
    height, width = grid_shape
    lo = np.floor(pts.min(axis=0) - 0.5)
    hi = np.ceil(pts.max(axis=0) - 0.5)
    c0, r0 = int(max(lo[0], 0)), int(max(lo[1], 0))
    c1, r1 = int(min(hi[0], width - 1)), int(min(hi[1], height - 1))
    for r in range(r0, r1 + 1):
        for c in range(c0, c1 + 1):
            p = np.array([c + 0.5, r + 0.5])
            if (signed_area2(pts[0], pts[1], p) == 0.0
                    and signed_area2(pts[1], pts[2], p) == 0.0
                    and min(pts[:, 0]) <= p[0] <= max(pts[:, 0])
                    and min(pts[:, 1]) <= p[1] <= max(pts[:, 1])):
                raise MeshError(f"face {f_idx} has zero UV area but covers texel ({r}, {c})")


def bake_vertex_colors(mesh: Mesh, colors: np.ndarray, out_size: tuple[int, int]) -> np.ndarray:
    """Rasterize per-vertex colors into an ``(H_t, W_t, 3)`` texture map."""
    colors = check_vertex_colors(mesh, colors)
    return BakeMap.build(mesh, out_size).apply(colors)


def bake_backward(mesh: Mesh, d_texture: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`bake_vertex_colors` for the same mesh and size."""
    d_texture = np.asarray(d_texture, float)
    return BakeMap.build(mesh, d_texture.shape[:2]).backward(d_texture)


# ---------------------------------------------------------------------------
# File IO: OBJ subset, binary PPM, float sidecars
# ---------------------------------------------------------------------------

def load_mesh(path) -> Mesh:
    """Parse a minimal OBJ subset: v, vt, vn and triangular f v/vt/vn faces.

    Corners are re-indexed so each distinct (v, vt, vn) triple becomes one
    mesh vertex. Anything outside the subset is a hard error with the
    offending line number.
    """
    positions, uvs, normals = [], [], []
    corner_index: dict[tuple[int, int, int], int] = {}
    out_pos, out_uv, out_nrm, out_faces = [], [], [], []

    def err(lineno, message):
        raise MeshError(f"{path}:{lineno}: {message}")

    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) != 4:
                    err(lineno, "expected 'v x y z'")
                positions.append([float(p) for p in parts[1:]])
            elif tag == "vt":
                if len(parts) < 3:
                    err(lineno, "expected 'vt u v'")
                uvs.append([float(parts[1]), float(parts[2])])
            elif tag == "vn":
                if len(parts) != 4:
                    err(lineno, "expected 'vn x y z'")
                normals.append([float(p) for p in parts[1:]])
            elif tag == "f":
                if len(parts) != 4:
                    err(lineno, "only triangular faces are supported")
                face = []
                for corner in parts[1:]:
                    fields = corner.split("/")
                    if len(fields) != 3 or not all(fields):
                        err(lineno, f"face corner '{corner}' is not v/vt/vn")
                    vi, ti, ni = (int(f) for f in fields)
                    if not (1 <= vi <= len(positions)):
                        err(lineno, f"vertex index {vi} out of range")
                    if not (1 <= ti <= len(uvs)):
                        err(lineno, f"uv index {ti} out of range")
                    if not (1 <= ni <= len(normals)):
                        err(lineno, f"normal index {ni} out of range")
                    key = (vi, ti, ni)
                    if key not in corner_index:
                        corner_index[key] = len(out_pos)
                        out_pos.append(positions[vi - 1])
                        out_uv.append(uvs[ti - 1])
                        out_nrm.append(normals[ni - 1])
                    face.append(corner_index[key])
                out_faces.append(face)
            else:
                err(lineno, f"unsupported OBJ directive '{tag}'")
    if not out_faces:
        raise MeshError(f"{path}: no faces found")
    nrm = np.asarray(out_nrm, float)
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    return Mesh(np.asarray(out_pos), np.asarray(out_faces), np.asarray(out_uv), nrm)


def save_mesh_obj(mesh: Mesh, path) -> None:
    """Write the mesh back out in the same OBJ subset load_mesh accepts."""
    with open(path, "w", encoding="ascii") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in mesh.uvs:
            fh.write(f"vt {t[0]:.9g} {t[1]:.9g}\n")
        for n in mesh.normals:
            fh.write(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
        for f in mesh.faces:
            fh.write("f " + " ".join(f"{i + 1}/{i + 1}/{i + 1}" for i in f) + "\n")


_TEXF_MAGIC = b"TEXF"
_VCOL_MAGIC = b"VCOL"


def save_texture(texture: np.ndarray, path) -> None:
    """Write an image as 8-bit binary PPM plus a lossless float32 sidecar.

    The sidecar lives next to the PPM with an extra ``.texf`` suffix:
    magic ``TEXF``, u32 height, u32 width, then H*W*3 little-endian f32.
    """
    texture = np.asarray(texture, float)
    if texture.ndim != 3 or texture.shape[2] != 3:
        raise ValueError("texture must be (H, W, 3)")
    height, width = texture.shape[:2]
    quantized = np.clip(np.rint(texture * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(quantized.tobytes())
    with open(str(path) + ".texf", "wb") as fh:
        fh.write(_TEXF_MAGIC)
        fh.write(struct.pack("<II", height, width))
        fh.write(texture.astype("<f4").tobytes())


def load_texture(path) -> np.ndarray:
    """Load the float sidecar written by :func:`save_texture`."""
    sidecar = str(path) if str(path).endswith(".texf") else str(path) + ".texf"
    with open(sidecar, "rb") as fh:
        if fh.read(4) != _TEXF_MAGIC:
            raise ValueError(f"{sidecar}: not a TEXF sidecar")
        height, width = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(height * width * 12), dtype="<f4")
    return data.reshape(height, width, 3).astype(float)


def save_vertex_colors(colors: np.ndarray, path) -> None:
    """Serialize per-vertex colors: magic VCOL, u32 N_v, N_v*3 LE f32."""
    colors = np.asarray(colors, float)
    if colors.ndim != 2 or colors.shape[1] != 3:
        raise ValueError("colors must be (N_v, 3)")
    with open(path, "wb") as fh:
        fh.write(_VCOL_MAGIC)
        fh.write(struct.pack("<I", colors.shape[0]))
        fh.write(colors.astype("<f4").tobytes())


def load_vertex_colors(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != _VCOL_MAGIC:
            raise ValueError(f"{path}: not a VCOL file")
        (n_v,) = struct.unpack("<I", fh.read(4))
        data = np.frombuffer(fh.read(n_v * 12), dtype="<f4")
    return data.reshape(n_v, 3).astype(float)
