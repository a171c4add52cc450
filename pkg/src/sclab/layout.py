"""Scene layouts: a watertight background plus placed object meshes."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from sclab.geometry.bvh import MeshBVH, signed_distance
from sclab.geometry.io import read_mesh, write_mesh
from sclab.geometry.types import TriangleMesh

BACKGROUND_ID = -1


@dataclass(frozen=True)
class ObjectPlacement:
    """Pose and per-axis scale of a library mesh: ``x -> R (scale * x) + t``."""

    mesh_ref: str
    rotation: tuple = (1.0, 0.0, 0.0, 0.0)  # w, x, y, z
    translation: tuple = (0.0, 0.0, 0.0)
    scale: tuple = (1.0, 1.0, 1.0)
    id: str = ""
    category: str = "object"

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError("rotation quaternion must be unit length")
        s = np.asarray(self.scale, dtype=np.float64).reshape(3)
        if np.any(s <= 0):
            raise ValueError("scale components must be positive")
        object.__setattr__(self, "rotation", tuple(float(x) for x in q))
        object.__setattr__(self, "translation", tuple(float(x) for x in np.reshape(self.translation, 3)))
        object.__setattr__(self, "scale", tuple(float(x) for x in s))
        if not self.id:
            object.__setattr__(self, "id", self.mesh_ref)

    @property
    def matrix(self) -> np.ndarray:
        w, x, y, z = self.rotation
        return Rotation.from_quat([x, y, z, w]).as_matrix()

    def apply(self, points) -> np.ndarray:
        return (np.asarray(points) * np.asarray(self.scale)) @ self.matrix.T + np.asarray(self.translation)

    def with_pose(self, rotation_matrix=None, translation=None, scale=None) -> "ObjectPlacement":
        kw = {}
        if rotation_matrix is not None:
            x, y, z, w = Rotation.from_matrix(rotation_matrix).as_quat()
            q = np.array([w, x, y, z])
            kw["rotation"] = tuple(q / np.linalg.norm(q))
        if translation is not None:
            kw["translation"] = tuple(np.asarray(translation, dtype=np.float64))
        if scale is not None:
            kw["scale"] = tuple(np.asarray(scale, dtype=np.float64))
        return replace(self, **kw)


def quat_from_matrix(rotation_matrix) -> tuple:
    x, y, z, w = Rotation.from_matrix(rotation_matrix).as_quat()
    q = np.array([w, x, y, z])
    return tuple(q / np.linalg.norm(q))


@dataclass
class SceneLayout:
    background: TriangleMesh
    objects: list[ObjectPlacement] = field(default_factory=list)
    library: dict[str, TriangleMesh] = field(default_factory=dict)

    def __post_init__(self):
        if not self.background.watertight:
            raise ValueError("background mesh must be watertight")
        for obj in self.objects:
            if obj.mesh_ref not in self.library:
                raise KeyError(f"missing mesh {obj.mesh_ref!r} for object {obj.id!r}")
            if not self.library[obj.mesh_ref].watertight:
                raise ValueError(f"mesh {obj.mesh_ref!r} is not watertight")

    def placed_mesh(self, i: int) -> TriangleMesh:
        obj = self.objects[i]
        return self.library[obj.mesh_ref].transformed(obj.matrix, obj.translation, obj.scale)

    @cached_property
    def placed_meshes(self) -> list[TriangleMesh]:
        return [self.placed_mesh(i) for i in range(len(self.objects))]

    @cached_property
    def background_bvh(self) -> MeshBVH:
        return MeshBVH(self.background)

    @cached_property
    def object_bvhs(self) -> list[MeshBVH]:
        return [MeshBVH(m) for m in self.placed_meshes]

    def with_objects(self, objects: list[ObjectPlacement]) -> "SceneLayout":
        return SceneLayout(self.background, list(objects), self.library)

    def scene_mesh(self) -> tuple[TriangleMesh, np.ndarray]:
        """Background and placed objects merged; second value maps triangle -> instance id."""
        meshes = [self.background] + self.placed_meshes
        owner = np.concatenate([np.full(len(m), i - 1, dtype=np.int64) for i, m in enumerate(meshes)])
        return TriangleMesh.concatenate(meshes), owner

    def object_sdf(self, points, exclude: int | None = None) -> np.ndarray:
        """(objects, points) signed distances to every placed object except ``exclude``."""
        rows = []
        for j, bvh in enumerate(self.object_bvhs):
            if j == exclude:
                continue
            rows.append(signed_distance(bvh, points))
        return np.array(rows).reshape(len(rows), -1)

    def background_sdf(self, points) -> np.ndarray:
        return signed_distance(self.background_bvh, points)

    # -- JSON -----------------------------------------------------------------
    def to_json(self, path, mesh_dir: str = "meshes") -> None:
        """Write ``layout.json`` plus the background and library meshes next to it."""
        path = Path(path)
        root = path.parent
        (root / mesh_dir).mkdir(parents=True, exist_ok=True)
        bg = f"{mesh_dir}/background.obj"
        write_mesh(root / bg, self.background)
        files = {}
        for ref, mesh in sorted(self.library.items()):
            files[ref] = f"{mesh_dir}/{ref}.obj"
            write_mesh(root / files[ref], mesh)
        doc = {
            "background": bg,
            "objects": [
                {"id": o.id, "category": o.category, "mesh": files[o.mesh_ref],
                 "rotation_wxyz": list(o.rotation), "translation_xyz": list(o.translation),
                 "scale_xyz": list(o.scale)}
                for o in self.objects
            ],
        }
        path.write_text(json.dumps(doc, indent=2) + "\n")

    @classmethod
    def from_json(cls, path) -> "SceneLayout":
        path = Path(path)
        doc = json.loads(path.read_text())
        root = path.parent
        library: dict[str, TriangleMesh] = {}
        objects = []
        for o in doc["objects"]:
            ref = Path(o["mesh"]).stem if o["mesh"] else o["id"]
            if ref not in library:
                library[ref] = read_mesh(root / o["mesh"])
            objects.append(ObjectPlacement(
                mesh_ref=ref,
                rotation=tuple(o.get("rotation_wxyz", (1, 0, 0, 0))),
                translation=tuple(o.get("translation_xyz", (0, 0, 0))),
                scale=tuple(o.get("scale_xyz", (1, 1, 1))),
                id=str(o["id"]),
                category=o.get("category", "object"),
            ))
        return cls(read_mesh(root / doc["background"]), objects, library)
