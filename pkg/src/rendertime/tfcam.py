"""Gaussian-lobe transfer functions, opacity LUT baking, and arcball cameras.

A transfer function is a sum of m Gaussian opacity lobes over the scalar
domain [0, 1] plus a fixed built-in color ramp. The camera orbits the volume
center on a sphere, parameterized by two rotation angles (degrees) and a
distance in units of the volume bounding-box diagonal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LUT_SIZE = 256

# 17-anchor viridis-like ramp; sampled linearly in between.
_VIRIDIS = np.array(
    [
        (0.2670, 0.0049, 0.3294),
        (0.2823, 0.0950, 0.4173),
        (0.2788, 0.1755, 0.4834),
        (0.2590, 0.2515, 0.5247),
        (0.2297, 0.3224, 0.5457),
        (0.1994, 0.3876, 0.5546),
        (0.1727, 0.4488, 0.5579),
        (0.1490, 0.5081, 0.5573),
        (0.1276, 0.5669, 0.5506),
        (0.1206, 0.6258, 0.5335),
        (0.1579, 0.6838, 0.5017),
        (0.2461, 0.7389, 0.4520),
        (0.3692, 0.7889, 0.3829),
        (0.5160, 0.8312, 0.2943),
        (0.6785, 0.8637, 0.1895),
        (0.8456, 0.8873, 0.0997),
        (0.9932, 0.9062, 0.1439),
    ],
    dtype=np.float64,
)

# Grayscale ramp kept for debugging renders.
_GRAY = np.array([(0.0, 0.0, 0.0), (1.0, 1.0, 1.0)], dtype=np.float64)

COLORMAPS = {"viridis": _VIRIDIS, "gray": _GRAY}

# Rendering-parameter sampling ranges (data collection protocol).
TF_WIDTH_RANGE = (0.005, 0.2)
DZ_CHOICES = (1.5, 2.0, 2.5, 3.0)
RY_RANGE = (-89.0, 89.0)
DZ_BOUNDS = (1.2, 4.0)


def colormap_rgb(name: str, s) -> np.ndarray:
    """Sample the named ramp at s in [0, 1]; returns (..., 3) floats."""
    table = COLORMAPS[name]
    s = np.clip(np.asarray(s, dtype=np.float64), 0.0, 1.0)
    pos = s * (len(table) - 1)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, len(table) - 1)
    f = (pos - i0)[..., None]
    return table[i0] * (1 - f) + table[i1] * f


@dataclass(frozen=True)
class TransferFunction:
    """m Gaussian opacity lobes (center, width, magnitude) plus a color ramp."""

    lobes: tuple[tuple[float, float, float], ...]
    colormap: str = "viridis"

    def __post_init__(self):
        object.__setattr__(self, "lobes", tuple(tuple(map(float, l)) for l in self.lobes))
        if len(self.lobes) < 1:
            raise ValueError("need at least one lobe")
        for c, w, h in self.lobes:
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"lobe center {c} outside [0, 1]")
            if not 0.0 < w <= 1.0:
                raise ValueError(f"lobe width {w} outside (0, 1]")
            if not 0.0 <= h <= 1.0:
                raise ValueError(f"lobe magnitude {h} outside [0, 1]")
        if self.colormap not in COLORMAPS:
            raise ValueError(f"unknown colormap {self.colormap!r}")

    @property
    def m(self) -> int:
        return len(self.lobes)

    @property
    def kappa(self) -> np.ndarray:
        """Parameter vector (c_0, w_0, h_0, ..., c_{m-1}, w_{m-1}, h_{m-1})."""
        return np.array([x for lobe in self.lobes for x in lobe], dtype=np.float64)

    @classmethod
    def from_kappa(cls, kappa, colormap: str = "viridis") -> "TransferFunction":
        kappa = np.asarray(kappa, dtype=np.float64)
        if kappa.size % 3 != 0 or kappa.size == 0:
            raise ValueError(f"kappa length must be a positive multiple of 3, got {kappa.size}")
        lobes = tuple(tuple(kappa[i : i + 3]) for i in range(0, kappa.size, 3))
        return cls(lobes, colormap)


def opacity(tf: TransferFunction, s) -> np.ndarray | float:
    """Sum of Gaussian lobes: sum_i h_i * exp(-(s - c_i)^2 / w_i)."""
    s_arr = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s_arr)
    for c, w, h in tf.lobes:
        out = out + h * np.exp(-((s_arr - c) ** 2) / w)
    if np.isscalar(s) or s_arr.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class OpacityLUT:
    """256 precomputed (r, g, b, opacity) entries over s in [0, 1]."""

    entries: np.ndarray  # (256, 4) float32

    def __post_init__(self):
        if self.entries.shape != (LUT_SIZE, 4):
            raise ValueError(f"LUT must have shape ({LUT_SIZE}, 4)")
        self.entries.setflags(write=False)

    @property
    def opacities(self) -> np.ndarray:
        return self.entries[:, 3]


def bake_lut(tf: TransferFunction) -> OpacityLUT:
    s = np.arange(LUT_SIZE, dtype=np.float64) / (LUT_SIZE - 1)
    alpha = np.clip(opacity(tf, s), 0.0, 1.0)
    rgb = colormap_rgb(tf.colormap, s)
    entries = np.concatenate([rgb, alpha[:, None]], axis=1).astype(np.float32)
    return OpacityLUT(entries)


@dataclass(frozen=True)
class CameraPose:
    """Arcball pose: azimuth R_x, elevation R_y (degrees), distance D_z
    in units of the volume bounding-box diagonal."""

    rx: float
    ry: float
    dz: float

    def __post_init__(self):
        if not 0.0 <= self.rx < 360.0:
            raise ValueError(f"rx {self.rx} outside [0, 360)")
        if not RY_RANGE[0] <= self.ry <= RY_RANGE[1]:
            raise ValueError(f"ry {self.ry} outside {RY_RANGE}")
        if not DZ_BOUNDS[0] <= self.dz <= DZ_BOUNDS[1]:
            raise ValueError(f"dz {self.dz} outside {DZ_BOUNDS}")

    def to_json(self) -> dict:
        return {"rx": self.rx, "ry": self.ry, "dz": self.dz}

    @classmethod
    def from_json(cls, obj: dict) -> "CameraPose":
        return cls(float(obj["rx"]), float(obj["ry"]), float(obj["dz"]))


def camera_basis(pose: CameraPose, dims) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Camera origin and orthonormal (forward, right, up) in voxel space.

    The volume occupies [0, W] x [0, H] x [0, D]; the camera sits on a sphere
    of radius dz * diagonal around the center and always looks at it.
    """
    w, h, d = dims
    center = np.array([w / 2.0, h / 2.0, d / 2.0])
    diag = math.sqrt(w * w + h * h + d * d)
    az = math.radians(pose.rx % 360.0)
    el = math.radians(pose.ry)
    dist = pose.dz * diag
    offset = np.array(
        [
            math.cos(el) * math.sin(az),
            math.sin(el),
            math.cos(el) * math.cos(az),
        ]
    )
    origin = center + dist * offset
    forward = center - origin
    forward = forward / np.linalg.norm(forward)
    world_up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, world_up)
    nr = np.linalg.norm(right)
    if nr < 1e-9:  # looking straight along world-up (|ry| ~ 90, excluded by bounds)
        right = np.array([1.0, 0.0, 0.0])
    else:
        right = right / nr
    up = np.cross(right, forward)
    return origin, forward, right, up


def pose_to_rays(pose: CameraPose, img, dims, fov_deg: float = 45.0):
    """Per-pixel ray origins and unit directions for a perspective camera.

    Returns (origins, dirs), each (height, width, 3). Square pixels; the
    vertical field of view is fov_deg.
    """
    width, height = img
    if width < 1 or height < 1:
        raise ValueError(f"image dims must be >= 1, got {img}")
    origin, forward, right, up = camera_basis(pose, dims)
    tanf = math.tan(math.radians(fov_deg) / 2.0)
    aspect = width / height
    xs = ((np.arange(width) + 0.5) / width * 2.0 - 1.0) * tanf * aspect
    ys = (1.0 - 2.0 * (np.arange(height) + 0.5) / height) * tanf
    u, v = np.meshgrid(xs, ys)
    dirs = forward[None, None] + u[..., None] * right[None, None] + v[..., None] * up[None, None]
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(origin, dirs.shape).copy()
    return origins, dirs


def sample_pose(rng: np.random.Generator) -> CameraPose:
    """Random arcball pose; distances come from a discrete semi-sphere set."""
    rx = float(rng.uniform(0.0, 360.0)) % 360.0
    ry = float(rng.uniform(*RY_RANGE))
    dz = float(rng.choice(DZ_CHOICES))
    return CameraPose(rx, ry, dz)


def sample_tf(rng: np.random.Generator, m: int = 3, colormap: str = "viridis") -> TransferFunction:
    lobes = tuple(
        (
            float(rng.uniform(0.0, 1.0)),
            float(rng.uniform(*TF_WIDTH_RANGE)),
            float(rng.uniform(0.0, 1.0)),
        )
        for _ in range(m)
    )
    return TransferFunction(lobes, colormap)
