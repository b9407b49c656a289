"""Scenario files: the scripted stand-in for a simulator episode.

A scenario is a JSON document declaring the camera, lighting, target mesh
with clean vertex colors and per-timestep poses, and the static
background objects. Paths are resolved relative to the scenario file.
Schema (angles in degrees in the file, radians in memory):

    {
      "name": "tabletop",
      "image_size": [H, W],
      "texture_size": [Ht, Wt],
      "instruction_id": 0,
      "camera": {"eye": [x,y,z], "target": [x,y,z], "up": [x,y,z],
                 "fov_deg": 50.0, "near": 0.1, "far": 20.0},
      "lighting": {"ambient": a, "diffuse": d, "reflectance": r,
                   "direction": [x,y,z]},
      "target": {"mesh": "target.obj",
                 "colors": {"uniform": [r,g,b]} | {"file": "colors.vcol"},
                 "poses": [{"translation": [x,y,z],
                            "rotation_deg": [rx,ry,rz], "scale": s}, ...]},
      "background": [{"mesh": "prop.obj", "pose": {...}, "color": [r,g,b]}]
    }

At least 3 poses are required (the trajectory weighting needs T >= 3).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .compositing import SceneFrame, SceneObject
from .geometry import CameraSpec, model_matrix
from .mesh import Mesh, load_mesh, load_vertex_colors, save_mesh_obj, save_vertex_colors
from .render import Lighting

__all__ = ["Scenario", "ScenarioError", "load_scenario", "save_scenario"]

MIN_TRAJECTORY = 3


class ScenarioError(ValueError):
    """Schema violation, reported with the offending JSON path."""


@dataclass
class Scenario:
    name: str
    camera: CameraSpec
    lighting: Lighting
    target_mesh: Mesh
    clean_colors: np.ndarray
    poses: list[np.ndarray]            # T object-to-world matrices
    background: tuple[SceneObject, ...]
    texture_size: tuple[int, int]
    instruction_id: int = 0

    def __post_init__(self):
        if len(self.poses) < MIN_TRAJECTORY:
            raise ScenarioError(f"target.poses: need at least {MIN_TRAJECTORY} "
                                f"timesteps, got {len(self.poses)}")

    @property
    def num_timesteps(self) -> int:
        return len(self.poses)

    @property
    def image_size(self) -> tuple[int, int]:
        return (self.camera.height, self.camera.width)

    def frames(self) -> list[SceneFrame]:
        """Materialize the per-timestep scene frames."""
        return [
            SceneFrame(
                t=t,
                target_mesh=self.target_mesh,
                target_model=pose,
                target_clean_colors=self.clean_colors,
                camera=self.camera,
                lighting=self.lighting,
                background=self.background,
                texture_size=self.texture_size,
            )
            for t, pose in enumerate(self.poses)
        ]


def _need(doc: dict, key: str, path: str):
    if key not in doc:
        raise ScenarioError(f"{path}.{key}: missing")
    return doc[key]


def _vec(value, n: int, path: str) -> np.ndarray:
    try:
        arr = np.asarray(value, float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}: not numeric") from exc
    if arr.shape != (n,):
        raise ScenarioError(f"{path}: expected {n} numbers")
    return arr


def _pose_matrix(doc: dict, path: str) -> np.ndarray:
    translation = _vec(doc.get("translation", (0, 0, 0)), 3, f"{path}.translation")
    rot_deg = _vec(doc.get("rotation_deg", (0, 0, 0)), 3, f"{path}.rotation_deg")
    scale = float(doc.get("scale", 1.0))
    if scale <= 0:
        raise ScenarioError(f"{path}.scale: must be positive")
    return model_matrix(translation, np.deg2rad(rot_deg), scale)


def _constant_texture(color, size=(8, 8)) -> np.ndarray:
    tex = np.empty((*size, 3))
    tex[:] = np.clip(np.asarray(color, float), 0.0, 1.0)
    return tex


def load_scenario(path) -> Scenario:
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)

    image_size = [int(v) for v in _vec(_need(doc, "image_size", "$"), 2, "$.image_size")]
    texture_size = [int(v) for v in _vec(_need(doc, "texture_size", "$"), 2, "$.texture_size")]

    cam = _need(doc, "camera", "$")
    fov_deg = float(_need(cam, "fov_deg", "$.camera"))
    try:
        camera = CameraSpec(
            eye=tuple(_vec(_need(cam, "eye", "$.camera"), 3, "$.camera.eye")),
            target=tuple(_vec(_need(cam, "target", "$.camera"), 3, "$.camera.target")),
            up=tuple(_vec(cam.get("up", (0, 1, 0)), 3, "$.camera.up")),
            fov=math.radians(fov_deg),
            near=float(_need(cam, "near", "$.camera")),
            far=float(_need(cam, "far", "$.camera")),
            width=image_size[1],
            height=image_size[0],
        )
    except ValueError as exc:
        raise ScenarioError(f"$.camera: {exc}") from exc

    lit = _need(doc, "lighting", "$")
    try:
        lighting = Lighting(
            ambient=float(_need(lit, "ambient", "$.lighting")),
            diffuse=float(_need(lit, "diffuse", "$.lighting")),
            reflectance=float(_need(lit, "reflectance", "$.lighting")),
            direction=tuple(_vec(_need(lit, "direction", "$.lighting"), 3,
                                 "$.lighting.direction")),
        )
    except ValueError as exc:
        raise ScenarioError(f"$.lighting: {exc}") from exc

    tgt = _need(doc, "target", "$")
    mesh_path = os.path.join(base, _need(tgt, "mesh", "$.target"))
    target_mesh = load_mesh(mesh_path)
    colors_doc = _need(tgt, "colors", "$.target")
    if "uniform" in colors_doc:
        rgb = _vec(colors_doc["uniform"], 3, "$.target.colors.uniform")
        clean_colors = np.tile(rgb, (target_mesh.num_vertices, 1))
    elif "file" in colors_doc:
        clean_colors = load_vertex_colors(os.path.join(base, colors_doc["file"]))
        if clean_colors.shape[0] != target_mesh.num_vertices:
            raise ScenarioError("$.target.colors.file: vertex count does not match mesh")
    else:
        raise ScenarioError("$.target.colors: expected 'uniform' or 'file'")

    poses_doc = _need(tgt, "poses", "$.target")
    if not isinstance(poses_doc, list):
        raise ScenarioError("$.target.poses: expected a list")
    poses = [_pose_matrix(p, f"$.target.poses[{i}]") for i, p in enumerate(poses_doc)]

    background = []
    for i, obj in enumerate(doc.get("background", [])):
        bpath = f"$.background[{i}]"
        mesh = load_mesh(os.path.join(base, _need(obj, "mesh", bpath)))
        pose = _pose_matrix(obj.get("pose", {}), f"{bpath}.pose")
        color = _vec(_need(obj, "color", bpath), 3, f"{bpath}.color")
        background.append(SceneObject(mesh=mesh, model=pose,
                                      texture=_constant_texture(color)))

    return Scenario(
        name=str(doc.get("name", os.path.basename(path))),
        camera=camera,
        lighting=lighting,
        target_mesh=target_mesh,
        clean_colors=clean_colors,
        poses=poses,
        background=background and tuple(background) or (),
        texture_size=tuple(texture_size),
        instruction_id=int(doc.get("instruction_id", 0)),
    )


def save_scenario(scenario: Scenario, directory, pose_docs, background_docs) -> str:
    """Write a scenario plus its mesh/color assets into a directory.

    ``pose_docs`` and ``background_docs`` are the JSON-ready fragments for
    the poses and background objects (the matrices themselves are not
    serialized). Returns the scenario file path.
    """
    os.makedirs(directory, exist_ok=True)
    save_mesh_obj(scenario.target_mesh, os.path.join(directory, "target.obj"))
    save_vertex_colors(scenario.clean_colors, os.path.join(directory, "target_colors.vcol"))
    doc = {
        "name": scenario.name,
        "image_size": list(scenario.image_size),
        "texture_size": list(scenario.texture_size),
        "instruction_id": scenario.instruction_id,
        "camera": {
            "eye": list(scenario.camera.eye),
            "target": list(scenario.camera.target),
            "up": list(scenario.camera.up),
            "fov_deg": math.degrees(scenario.camera.fov),
            "near": scenario.camera.near,
            "far": scenario.camera.far,
        },
        "lighting": {
            "ambient": scenario.lighting.ambient,
            "diffuse": scenario.lighting.diffuse,
            "reflectance": scenario.lighting.reflectance,
            "direction": list(scenario.lighting.direction),
        },
        "target": {
            "mesh": "target.obj",
            "colors": {"file": "target_colors.vcol"},
            "poses": pose_docs,
        },
        "background": [],
    }
    for i, (obj, frag) in enumerate(zip(scenario.background, background_docs)):
        mesh_name = f"background_{i}.obj"
        save_mesh_obj(obj.mesh, os.path.join(directory, mesh_name))
        doc["background"].append({"mesh": mesh_name, **frag})
    out_path = os.path.join(directory, "scenario.json")
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    return out_path
