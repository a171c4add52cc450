"""Render depth / instance / normal views of a layout and fuse them into a labeled scan.

Camera convention: pixel (u, v) looks along ``((u - cx)/fx, (v - cy)/fy, 1)``
in the camera frame (x right, y down, z forward). Depth maps store z-depth
sampled through pixel centers.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sclab.geometry.bvh import MeshBVH
from sclab.geometry.io import write_point_cloud
from sclab.geometry.sampling import grid_subsample_indices
from sclab.geometry.types import OrientedPointCloud
from sclab.layout import SceneLayout

MISS_ID = -2
DEFAULT_RESOLUTION = 0.02
DEFAULT_VIEWS = 10


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_from_camera: np.ndarray

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        m = np.asarray(self.world_from_camera, dtype=np.float64).reshape(4, 4)
        r = m[:3, :3]
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-9 or np.linalg.det(r) < 0:
            raise ValueError("camera rotation must be orthonormal and right-handed")
        self.world_from_camera = m
        self.width = int(self.width)
        self.height = int(self.height)

    @property
    def rotation(self) -> np.ndarray:
        return self.world_from_camera[:3, :3]

    @property
    def position(self) -> np.ndarray:
        return self.world_from_camera[:3, 3]

    def pixel_dirs(self) -> np.ndarray:
        """Un-normalized camera-frame directions (z = 1), row-major (H*W, 3)."""
        v, u = np.mgrid[0:self.height, 0:self.width]
        x = (u.reshape(-1) + 0.5 - self.cx) / self.fx
        y = (v.reshape(-1) + 0.5 - self.cy) / self.fy
        return np.c_[x, y, np.ones_like(x)]

    def to_json(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy, "width": self.width,
                "height": self.height, "world_from_camera": [float(x) for x in self.world_from_camera.reshape(-1)]}

    @classmethod
    def from_json(cls, d: dict) -> "Camera":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]), int(d["width"]),
                   int(d["height"]), np.asarray(d["world_from_camera"], dtype=np.float64))


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """world_from_camera for a camera at ``position`` looking at ``target``."""
    p = np.asarray(position, dtype=np.float64)
    f = np.asarray(target, dtype=np.float64) - p
    f /= np.linalg.norm(f)
    r = np.cross(f, np.asarray(up, dtype=np.float64))
    r /= np.linalg.norm(r)
    d = np.cross(f, r)  # image y axis points down
    m = np.eye(4)
    m[:3, 0], m[:3, 1], m[:3, 2], m[:3, 3] = r, d, f, p
    return m


def orbit_cameras(center, radius: float, height: float, n: int = DEFAULT_VIEWS, width: int = 96,
                  height_px: int = 72, fov_deg: float = 70.0, target_height: float | None = None,
                  phase: float = 0.0) -> list[Camera]:
    """``n`` cameras on a horizontal ring looking at ``center``."""
    c = np.asarray(center, dtype=np.float64)
    fx = 0.5 * width / np.tan(np.radians(fov_deg) / 2)
    tgt = c.copy()
    if target_height is not None:
        tgt[2] = target_height
    cams = []
    for k in range(n):
        a = phase + 2 * np.pi * k / n
        pos = c + np.array([radius * np.cos(a), radius * np.sin(a), 0.0])
        pos[2] = height
        cams.append(Camera(fx, fx, width / 2, height_px / 2, width, height_px, look_at(pos, tgt)))
    return cams


def load_cameras(path) -> list[Camera]:
    doc = json.loads(Path(path).read_text())
    items = doc["cameras"] if isinstance(doc, dict) else doc
    return [Camera.from_json(c) for c in items]


def save_cameras(path, cameras: list[Camera]) -> None:
    Path(path).write_text(json.dumps({"cameras": [c.to_json() for c in cameras]}, indent=2) + "\n")


@dataclass
class RenderedView:
    depth: np.ndarray     # (H, W) z-depth, 0 = miss
    instance: np.ndarray  # (H, W) object id, -1 background, -2 miss
    normal: np.ndarray    # (H, W, 3) world-frame, facing the camera


class SceneRenderer:
    """Ray-casting renderer over one BVH of the merged scene."""

    def __init__(self, layout: SceneLayout):
        self.mesh, self.owner = layout.scene_mesh()
        self.bvh = MeshBVH(self.mesh)

    def render(self, camera: Camera) -> RenderedView:
        h, w = camera.height, camera.width
        dirs_cam = camera.pixel_dirs()
        unit_cam = dirs_cam / np.linalg.norm(dirs_cam, axis=1, keepdims=True)
        dirs = unit_cam @ camera.rotation.T
        origins = np.broadcast_to(camera.position, dirs.shape)
        t, tri, _, _ = self.bvh.raycast(origins, dirs)
        hit = tri >= 0
        depth = np.zeros(h * w)
        depth[hit] = t[hit] * unit_cam[hit, 2]
        inst = np.full(h * w, MISS_ID, dtype=np.int64)
        inst[hit] = self.owner[tri[hit]]
        normal = np.zeros((h * w, 3))
        n = self.mesh.face_normals[tri[hit]]
        flip = np.einsum("ij,ij->i", n, dirs[hit]) > 0
        n[flip] *= -1.0
        normal[hit] = n
        return RenderedView(depth.reshape(h, w), inst.reshape(h, w), normal.reshape(h, w, 3))


def render_empty(camera: Camera) -> RenderedView:
    h, w = camera.height, camera.width
    return RenderedView(np.zeros((h, w)), np.full((h, w), MISS_ID, dtype=np.int64), np.zeros((h, w, 3)))


def render_view(layout: SceneLayout | None, camera: Camera) -> RenderedView:
    """Render one view; ``None`` stands for a scene with no geometry at all."""
    if layout is None:
        return render_empty(camera)
    return SceneRenderer(layout).render(camera)


def backproject(view: RenderedView, camera: Camera) -> OrientedPointCloud:
    """Lift every valid pixel to a world point carrying its normal and label."""
    depth = view.depth.reshape(-1)
    valid = depth > 0
    p_cam = camera.pixel_dirs()[valid] * depth[valid, None]
    pts = p_cam @ camera.rotation.T + camera.position
    normals = view.normal.reshape(-1, 3)[valid]
    labels = view.instance.reshape(-1)[valid]
    return OrientedPointCloud(pts, normals, labels)


def fuse_with_sources(views: list[RenderedView], cameras: list[Camera], resolution: float = DEFAULT_RESOLUTION,
                      ) -> tuple[OrientedPointCloud, np.ndarray, np.ndarray]:
    """Fused scan plus, per kept point, the view index and flat pixel index it came from."""
    if len(views) != len(cameras):
        raise ValueError(f"{len(views)} views but {len(cameras)} cameras")
    parts, view_ids, pix_ids = [], [], []
    for k, (v, c) in enumerate(zip(views, cameras)):
        part = backproject(v, c)
        if len(part):
            parts.append(part)
            pix = np.flatnonzero(v.depth.reshape(-1) > 0)
            pix_ids.append(pix)
            view_ids.append(np.full(len(pix), k, dtype=np.int64))
    if not parts:
        return OrientedPointCloud.empty(labeled=True), np.zeros(0, np.int64), np.zeros(0, np.int64)
    fused = OrientedPointCloud(
        np.concatenate([p.points for p in parts]),
        np.concatenate([p.normals for p in parts]),
        np.concatenate([p.labels for p in parts]),
    )
    keep = grid_subsample_indices(fused.points, resolution)
    return fused.subset(keep), np.concatenate(view_ids)[keep], np.concatenate(pix_ids)[keep]


def backproject_and_fuse(views: list[RenderedView], cameras: list[Camera],
                         resolution: float = DEFAULT_RESOLUTION) -> OrientedPointCloud:
    return fuse_with_sources(views, cameras, resolution)[0]


def synthesize_scan(layout: SceneLayout, cameras: list[Camera], resolution: float = DEFAULT_RESOLUTION,
                    ) -> tuple[OrientedPointCloud, list[RenderedView]]:
    renderer = SceneRenderer(layout)
    views = [renderer.render(c) for c in cameras]
    return backproject_and_fuse(views, cameras, resolution), views


def write_pfm(path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype="<f4")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.flipud(img).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"Pf":
            raise ValueError("not a greyscale PFM")
        w, h = (int(x) for x in fh.readline().split())
        scale = float(fh.readline())
        dt = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(), dtype=dt, count=w * h).reshape(h, w)
    return np.flipud(data).astype(np.float64)


def save_view(prefix, view: RenderedView, camera: Camera) -> dict[str, Path]:
    """Depth as PFM (meters) and 16-bit PNG (millimeters), instance PNG (id + 2), lifted PLY."""
    from PIL import Image

    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = {
        "depth_pfm": prefix.with_name(prefix.name + "_depth.pfm"),
        "depth_png": prefix.with_name(prefix.name + "_depth.png"),
        "instance_png": prefix.with_name(prefix.name + "_instance.png"),
        "points_ply": prefix.with_name(prefix.name + "_points.ply"),
    }
    write_pfm(paths["depth_pfm"], view.depth)
    mm = np.clip(np.round(view.depth * 1000.0), 0, 65535).astype(np.uint16)
    Image.fromarray(mm).save(paths["depth_png"])
    Image.fromarray((view.instance + 2).astype(np.uint16)).save(paths["instance_png"])
    write_point_cloud(paths["points_ply"], backproject(view, camera))
    return paths
