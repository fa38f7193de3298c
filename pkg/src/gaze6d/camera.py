"""Pinhole camera model: intrinsics, projection, and intrinsics standardization.

COORDINATE SYSTEM CONVENTION (OpenCV style)
    Camera frame: origin at the lens center, +x right, +y down, +z along the
    optical axis into the scene.  Metric units are millimetres.
    Image frame: origin at the top-left pixel, u right, v down, units pixels.

Square pixels and a distortion-free lens are assumed throughout, so a single
focal length in pixels fully describes the projection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, FrameMismatchError, GeometryError, InvalidIntrinsicsError

# frame tags carried by 3-D points
FRAME_CAMERA = "oCCS"
FRAME_NORMALIZED = "nCCS"
FRAME_SCREEN = "SCS"


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics with a metric pixel pitch.

    focal_px      focal length in pixels
    cx, cy        principal point in pixels
    k_mm_per_px   physical pixel pitch, millimetres per pixel
    width, height sensor size in pixels
    """

    focal_px: float
    cx: float
    cy: float
    k_mm_per_px: float
    width: int
    height: int

    def __post_init__(self):
        if self.focal_px <= 0:
            raise InvalidIntrinsicsError(f"focal_px must be positive, got {self.focal_px}")
        if self.k_mm_per_px <= 0:
            raise InvalidIntrinsicsError(f"k_mm_per_px must be positive, got {self.k_mm_per_px}")
        if self.width <= 0 or self.height <= 0:
            raise InvalidIntrinsicsError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise InvalidIntrinsicsError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )

    @property
    def principal(self) -> np.ndarray:
        return np.array([self.cx, self.cy], dtype=float)

    @property
    def focal_mm(self) -> float:
        return self.focal_px * self.k_mm_per_px

    def to_dict(self) -> dict:
        return {
            "focal_px": self.focal_px,
            "cx": self.cx,
            "cy": self.cy,
            "k_mm_per_px": self.k_mm_per_px,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(
            focal_px=float(d["focal_px"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            k_mm_per_px=float(d["k_mm_per_px"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "CameraIntrinsics":
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class BoundingBox:
    """Square face crop: center (x, y) in pixels and side length in pixels."""

    x: float
    y: float
    side: float

    def __post_init__(self):
        if self.side <= 0:
            raise InvalidIntrinsicsError(f"box side must be positive, got {self.side}")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def to_list(self) -> list:
        return [self.x, self.y, self.side]

    @classmethod
    def from_list(cls, v) -> "BoundingBox":
        return cls(float(v[0]), float(v[1]), float(v[2]))


@dataclass(frozen=True)
class Point3:
    """3-D point in millimetres, tagged with the frame it lives in."""

    xyz: np.ndarray
    frame: str = FRAME_CAMERA

    def __post_init__(self):
        object.__setattr__(self, "xyz", np.asarray(self.xyz, dtype=float).reshape(3))

    @property
    def x(self) -> float:
        return float(self.xyz[0])

    @property
    def y(self) -> float:
        return float(self.xyz[1])

    @property
    def z(self) -> float:
        return float(self.xyz[2])


def standardize(orig: CameraIntrinsics, std: CameraIntrinsics, box: BoundingBox) -> BoundingBox:
    """Re-express a face box under standardized intrinsics.

    A pure rescale about the principal point: pixel offsets from the original
    principal point scale by the focal ratio and re-anchor at the standardized
    principal point.  The box side scales by the same ratio.
    """
    s = std.focal_px / orig.focal_px
    return BoundingBox(
        x=(box.x - orig.cx) * s + std.cx,
        y=(box.y - orig.cy) * s + std.cy,
        side=box.side * s,
    )


def backproject(intr: CameraIntrinsics, pixel, depth_mm: float) -> Point3:
    """Lift a pixel to the 3-D camera-frame point at the given depth (mm)."""
    if depth_mm <= 0:
        raise GeometryError(f"depth must be positive, got {depth_mm}")
    u, v = float(pixel[0]), float(pixel[1])
    return Point3(
        np.array(
            [
                (u - intr.cx) * depth_mm / intr.focal_px,
                (v - intr.cy) * depth_mm / intr.focal_px,
                depth_mm,
            ]
        ),
        frame=FRAME_CAMERA,
    )


def project(intr: CameraIntrinsics, point: Point3) -> np.ndarray:
    """Project a camera-frame 3-D point to pixel coordinates."""
    if point.frame != FRAME_CAMERA:
        raise FrameMismatchError(f"project expects a {FRAME_CAMERA} point, got {point.frame}")
    if point.z <= 0:
        raise BehindCameraError(f"point at z={point.z} is behind the camera")
    return np.array(
        [
            intr.focal_px * point.x / point.z + intr.cx,
            intr.focal_px * point.y / point.z + intr.cy,
        ]
    )
