"""Procedural meshes and the in-repo fixture scenes.

Everything here is deterministic, so fixtures can be built in memory for
tests or written to disk for the CLI. The tabletop scene is the standard
benchmark: a ground plane, two distractor boxes, and a ~200-vertex sphere
target that rests, is snatched upward over a few frames (the "grasp"
spike the frame weighting should find), and is then carried aside.
"""

from __future__ import annotations

import math

import numpy as np

from .compositing import SceneObject
from .geometry import CameraSpec, model_matrix
from .mesh import Mesh
from .render import Lighting
from .scenario import Scenario, save_scenario

__all__ = [
    "quad_mesh",
    "plane_mesh",
    "box_mesh",
    "sphere_mesh",
    "constant_texture",
    "tabletop_scenario",
    "micro_scenario",
    "write_fixture",
]


def quad_mesh(size: float = 1.0) -> Mesh:
    """Two-triangle square in the xy plane, facing +z, UVs spanning [0,1]."""
    h = size / 2.0
    vertices = np.array([[-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0]])
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    uvs = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    normals = np.tile([0.0, 0.0, 1.0], (4, 1))
    return Mesh(vertices, faces, uvs, normals)


def plane_mesh(size: float = 1.0, cells: int = 1) -> Mesh:
    """Square grid in the xz plane, facing +y (a tabletop).

    ``cells`` subdivides each side. The renderer discards whole triangles
    that cross the camera plane instead of clipping them, so a tabletop
    that extends behind the camera must be tessellated finely enough that
    only genuinely out-of-view cells are lost.
    """
    h = size / 2.0
    verts, uvs = [], []
    for i in range(cells + 1):
        for j in range(cells + 1):
            u, v = j / cells, i / cells
            verts.append([-h + u * size, 0.0, -h + v * size])
            uvs.append([u, v])
    faces = []
    stride = cells + 1
    for i in range(cells):
        for j in range(cells):
            a = i * stride + j
            b, c, d = a + 1, a + stride + 1, a + stride
            faces.append([a, b, c])
            faces.append([a, c, d])
    normals = np.tile([0.0, 1.0, 0.0], (len(verts), 1))
    return Mesh(np.asarray(verts, float), np.asarray(faces), np.asarray(uvs, float),
                normals)


def box_mesh(extents=(1.0, 1.0, 1.0)) -> Mesh:
    """Axis-aligned box with per-face normals; 24 vertices, 12 faces.

    Every face reuses the full UV square, which is fine for props with
    constant textures but makes the mesh unsuitable as a bake target.
    """
    ex, ey, ez = (e / 2.0 for e in extents)
    quads = [
        # (corner order CCW seen from outside, normal)
        (((-ex, -ey, ez), (ex, -ey, ez), (ex, ey, ez), (-ex, ey, ez)), (0, 0, 1)),
        (((ex, -ey, -ez), (-ex, -ey, -ez), (-ex, ey, -ez), (ex, ey, -ez)), (0, 0, -1)),
        (((ex, -ey, ez), (ex, -ey, -ez), (ex, ey, -ez), (ex, ey, ez)), (1, 0, 0)),
        (((-ex, -ey, -ez), (-ex, -ey, ez), (-ex, ey, ez), (-ex, ey, -ez)), (-1, 0, 0)),
        (((-ex, ey, ez), (ex, ey, ez), (ex, ey, -ez), (-ex, ey, -ez)), (0, 1, 0)),
        (((-ex, -ey, -ez), (ex, -ey, -ez), (ex, -ey, ez), (-ex, -ey, ez)), (0, -1, 0)),
    ]
    verts, uvs, normals, faces = [], [], [], []
    uv_quad = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    for corners, normal in quads:
        base = len(verts)
        verts.extend(corners)
        uvs.extend(uv_quad)
        normals.extend([normal] * 4)
        faces.append([base, base + 1, base + 2])
        faces.append([base, base + 2, base + 3])
    return Mesh(np.asarray(verts, float), np.asarray(faces), np.asarray(uvs, float),
                np.asarray(normals, float))


def sphere_mesh(rings: int = 12, segments: int = 16, radius: float = 1.0) -> Mesh:
    """Lat-long sphere with a duplicated seam column and per-segment poles.

    The UV parameterization is injective over faces, so the mesh is a
    valid bake target. rings=12, segments=16 gives 219 vertices.
    """
    if rings < 3 or segments < 3:
        raise ValueError("need rings >= 3 and segments >= 3")
    verts, uvs, normals = [], [], []
    grid = {}
    for i in range(1, rings):
        phi = math.pi * i / rings
        for j in range(segments + 1):
            theta = 2.0 * math.pi * j / segments
            n = (math.sin(phi) * math.cos(theta), math.cos(phi),
                 math.sin(phi) * math.sin(theta))
            grid[(i, j)] = len(verts)
            verts.append([radius * c for c in n])
            uvs.append([j / segments, i / rings])
            normals.append(n)
    top, bottom = {}, {}
    for j in range(segments):
        top[j] = len(verts)
        verts.append([0.0, radius, 0.0])
        uvs.append([(j + 0.5) / segments, 0.0])
        normals.append((0.0, 1.0, 0.0))
    for j in range(segments):
        bottom[j] = len(verts)
        verts.append([0.0, -radius, 0.0])
        uvs.append([(j + 0.5) / segments, 1.0])
        normals.append((0.0, -1.0, 0.0))

    faces = []
    for j in range(segments):
        faces.append([top[j], grid[(1, j + 1)], grid[(1, j)]])
    for i in range(1, rings - 1):
        for j in range(segments):
            a, b = grid[(i, j)], grid[(i, j + 1)]
            c, d = grid[(i + 1, j + 1)], grid[(i + 1, j)]
            faces.append([a, b, c])
            faces.append([a, c, d])
    for j in range(segments):
        faces.append([bottom[j], grid[(rings - 1, j)], grid[(rings - 1, j + 1)]])
    return Mesh(np.asarray(verts, float), np.asarray(faces), np.asarray(uvs, float),
                np.asarray(normals, float))


def constant_texture(color, size=(8, 8)) -> np.ndarray:
    tex = np.empty((*size, 3))
    tex[:] = np.asarray(color, float)
    return tex


# ---------------------------------------------------------------------------
# Fixture scenes
# ---------------------------------------------------------------------------

_TABLETOP_POSES = None  # built lazily; (pose_doc, matrix) pairs


def _tabletop_pose_docs(t_len: int = 40):
    """Scripted target trajectory: rest (0-14), fast lift (15-19), carry.

    The lift phase moves far more per frame than anything else, producing
    a clear latent-velocity spike there.
    """
    docs = []
    drift = 0.004
    rest = np.array([0.0, 0.3, 0.1])
    rest_end = rest + np.array([drift * 14, 0.0, 0.0])
    apex = rest_end + np.array([0.0, 0.42, 0.0])
    final = np.array([-0.45, 0.67, -0.2])
    for t in range(t_len):
        if t < 15:
            pos = rest + np.array([drift * t, 0.0, 0.0])
        elif t < 20:
            pos = rest_end + ((t - 14) / 5.0) * (apex - rest_end)
        else:
            pos = apex + ((t - 19) / float(t_len - 20)) * (final - apex)
        docs.append({"translation": [round(float(v), 6) for v in pos],
                     "rotation_deg": [0.0, round(2.0 * t, 6), 0.0],
                     "scale": 1.0})
    return docs


def tabletop_scenario(t_len: int = 40) -> Scenario:
    """The standard fixture: plane, two boxes, sphere target, 40 frames."""
    pose_docs = _tabletop_pose_docs(t_len)
    poses = [model_matrix(d["translation"], np.deg2rad(d["rotation_deg"]), d["scale"])
             for d in pose_docs]
    background = (
        SceneObject(mesh=plane_mesh(4.0, cells=6), model=model_matrix(),
                    texture=constant_texture((0.62, 0.58, 0.52))),
        SceneObject(mesh=box_mesh((0.3, 0.26, 0.3)),
                    model=model_matrix((0.62, 0.13, -0.38)),
                    texture=constant_texture((0.25, 0.4, 0.6))),
        SceneObject(mesh=box_mesh((0.24, 0.34, 0.24)),
                    model=model_matrix((-0.55, 0.17, 0.42)),
                    texture=constant_texture((0.55, 0.5, 0.2))),
    )
    target = sphere_mesh(rings=12, segments=16, radius=0.3)
    return Scenario(
        name="tabletop",
        camera=CameraSpec(eye=(1.25, 1.0, 1.35), target=(0.0, 0.45, 0.0),
                          up=(0.0, 1.0, 0.0), fov=math.radians(50.0),
                          near=0.2, far=12.0, width=64, height=64),
        lighting=Lighting(ambient=0.55, diffuse=0.4, reflectance=1.0,
                          direction=(0.3, 0.85, 0.42)),
        target_mesh=target,
        clean_colors=np.tile((0.78, 0.42, 0.33), (target.num_vertices, 1)),
        poses=poses,
        background=background,
        texture_size=(64, 64),
        instruction_id=0,
    )


def micro_scenario(t_len: int = 3, image_size: int = 16) -> Scenario:
    """Tiny scene for gradient checks: 4-vertex quad target over a backdrop."""
    pose_docs = [{"translation": [0.015 * t, -0.01 * t, 0.0],
                  "rotation_deg": [0.0, 4.0 * t, 0.0], "scale": 1.0}
                 for t in range(t_len)]
    poses = [model_matrix(d["translation"], np.deg2rad(d["rotation_deg"]), d["scale"])
             for d in pose_docs]
    backdrop = SceneObject(mesh=quad_mesh(6.0), model=model_matrix((0.0, 0.0, -1.5)),
                           texture=constant_texture((0.35, 0.38, 0.42)))
    target = quad_mesh(1.1)
    return Scenario(
        name="micro",
        camera=CameraSpec(eye=(0.0, 0.0, 2.2), target=(0.0, 0.0, 0.0),
                          up=(0.0, 1.0, 0.0), fov=math.radians(55.0),
                          near=0.2, far=8.0, width=image_size, height=image_size),
        lighting=Lighting(ambient=0.6, diffuse=0.3, reflectance=0.95,
                          direction=(0.2, 0.3, 0.9)),
        target_mesh=target,
        clean_colors=np.tile((0.55, 0.5, 0.45), (target.num_vertices, 1)),
        poses=poses,
        background=(backdrop,),
        texture_size=(8, 8),
        instruction_id=0,
    )


def write_fixture(directory, name: str = "tabletop", t_len: int | None = None) -> str:
    """Write a fixture scenario with its assets; returns the scenario path."""
    if name == "tabletop":
        scenario = tabletop_scenario(t_len or 40)
        pose_docs = _tabletop_pose_docs(t_len or 40)
        background_docs = [
            {"pose": {"translation": [0, 0, 0]}, "color": [0.62, 0.58, 0.52]},
            {"pose": {"translation": [0.62, 0.13, -0.38]}, "color": [0.25, 0.4, 0.6]},
            {"pose": {"translation": [-0.55, 0.17, 0.42]}, "color": [0.55, 0.5, 0.2]},
        ]
    elif name == "micro":
        scenario = micro_scenario(t_len or 3)
        pose_docs = [{"translation": [0.015 * t, -0.01 * t, 0.0],
                      "rotation_deg": [0.0, 4.0 * t, 0.0], "scale": 1.0}
                     for t in range(t_len or 3)]
        background_docs = [{"pose": {"translation": [0.0, 0.0, -1.5]},
                            "color": [0.35, 0.38, 0.42]}]
    else:
        raise ValueError(f"unknown fixture {name!r}")
    return save_scenario(scenario, directory, pose_docs, background_docs)
