"""Volume representation, normalization, downsampling, synthesis, and raw I/O.

Voxel layout is row-major with x fastest everywhere: the flat index of voxel
(x, y, z) is x + W*(y + H*z). Internally grids are held as numpy arrays of
shape (D, H, W) in C order, which realizes exactly that layout, so raw file
bytes and in-memory buffers agree.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DimsOutOfRange, MissingSidecar, SizeMismatch, TargetTooLarge, VolumeIoError

# Declared storage ranges. "u8" volumes may be held as uint8 or as floats in
# [0, 255] (e.g. after interpolation).
VALUE_RANGES = {
    "u8": (0.0, 255.0),
    "unit": (0.0, 1.0),
    "signed": (-1.0, 1.0),
}

SPARSITY_THRESHOLD = 0.05

RECIPES = ("blobs", "fault_noise", "shell")


@dataclass
class Volume:
    """A 3D scalar grid with a declared value range.

    data has shape (D, H, W); dims reports (W, H, D). Values are immutable
    after construction (the array is marked read-only).
    """

    data: np.ndarray
    value_range: str = "unit"

    def __post_init__(self):
        if self.data.ndim != 3:
            raise DimsOutOfRange(f"expected 3D grid, got shape {self.data.shape}")
        if self.value_range not in VALUE_RANGES:
            raise ValueError(f"unknown value_range {self.value_range!r}")
        lo, hi = VALUE_RANGES[self.value_range]
        dmin = float(self.data.min())
        dmax = float(self.data.max())
        if dmin < lo - 1e-6 or dmax > hi + 1e-6:
            raise ValueError(
                f"values [{dmin}, {dmax}] outside declared range {self.value_range!r}"
            )
        self.data.setflags(write=False)

    @property
    def dims(self) -> tuple[int, int, int]:
        d, h, w = self.data.shape
        return (w, h, d)

    @property
    def values(self) -> np.ndarray:
        """Flat value array, x fastest."""
        return self.data.reshape(-1)

    @classmethod
    def from_flat(cls, values, dims, value_range="unit") -> "Volume":
        w, h, d = dims
        arr = np.asarray(values)
        if arr.size != w * h * d:
            raise SizeMismatch(f"{arr.size} values for dims {dims}")
        return cls(arr.reshape(d, h, w).copy(), value_range)

    def as_unit(self) -> np.ndarray:
        """float32 copy of the grid mapped onto [0, 1]."""
        lo, hi = VALUE_RANGES[self.value_range]
        out = (self.data.astype(np.float32) - lo) / (hi - lo)
        return np.clip(out, 0.0, 1.0)


@dataclass
class VolumeMeta:
    id: str
    source: str = "synthetic"  # "synthetic" | "file"
    seed: int | None = None
    sparsity: float = 0.0
    path: str | None = None

    def to_json(self) -> dict:
        out = {"id": self.id, "source": self.source, "sparsity": self.sparsity}
        if self.seed is not None:
            out["seed"] = self.seed
        if self.path is not None:
            out["path"] = self.path
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "VolumeMeta":
        return cls(
            id=obj["id"],
            source=obj.get("source", "file"),
            seed=obj.get("seed"),
            sparsity=obj.get("sparsity", 0.0),
            path=obj.get("path"),
        )


def normalize_to_signed_unit(v: Volume) -> Volume:
    """Affinely map the declared range onto [-1, 1]."""
    lo, hi = VALUE_RANGES[v.value_range]
    data = v.data.astype(np.float32)
    out = (data - lo) * (2.0 / (hi - lo)) - 1.0
    return Volume(np.clip(out, -1.0, 1.0), "signed")


def downsample(v: Volume, target: tuple[int, int, int]) -> Volume:
    """Trilinear resampling at the cell centers of the target grid."""
    tw, th, td = target
    w, h, d = v.dims
    if tw > w or th > h or td > d:
        raise TargetTooLarge(f"target {target} exceeds source dims {v.dims}")
    if min(tw, th, td) < 2:
        raise DimsOutOfRange(f"target dims must each be >= 2, got {target}")

    # Cell-center mapping: output center (j+0.5)/n_out lands at source
    # continuous index (j+0.5)*n_in/n_out - 0.5.
    def centers(n_out, n_in):
        return (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5

    zz, yy, xx = np.meshgrid(
        centers(td, d), centers(th, h), centers(tw, w), indexing="ij"
    )
    coords = np.stack([zz, yy, xx])
    out = ndimage.map_coordinates(
        v.data.astype(np.float32), coords, order=1, mode="nearest"
    )
    return Volume(out.astype(np.float32), v.value_range)


def _fractional_grid(dims):
    w, h, d = dims
    z = (np.arange(d) + 0.5) / d
    y = (np.arange(h) + 0.5) / h
    x = (np.arange(w) + 0.5) / w
    return np.meshgrid(z, y, x, indexing="ij")


def _value_noise(rng, dims, res, octaves=4, persistence=0.5):
    """Fractal value noise in [0, 1] by trilinear upsampling of random grids."""
    w, h, d = dims
    out = np.zeros((d, h, w), np.float32)
    amp = 1.0
    total = 0.0
    for o in range(octaves):
        r = min(res * 2**o, min(dims))
        lattice = rng.random((r, r, r)).astype(np.float32)
        zz, yy, xx = _fractional_grid(dims)
        coords = np.stack([zz * r - 0.5, yy * r - 0.5, xx * r - 0.5])
        layer = ndimage.map_coordinates(lattice, coords, order=1, mode="nearest")
        out += amp * layer
        total += amp
        amp *= persistence
    return out / total


def gen_synthetic(seed: int, dims, recipe: str) -> tuple[Volume, VolumeMeta]:
    """Deterministic synthetic volume for a (seed, dims, recipe) triple.

    blobs       sum of 3..12 random 3D Gaussians
    fault_noise value-noise fractal
    shell       hollow sphere with a noise-perturbed radius
    """
    w, h, d = dims
    for n in (w, h, d):
        if not 16 <= n <= 256:
            raise DimsOutOfRange(f"dims must lie in [16, 256], got {dims}")
    if recipe not in RECIPES:
        raise ValueError(f"unknown recipe {recipe!r}; choose from {RECIPES}")

    rng = np.random.default_rng([seed, w, h, d, RECIPES.index(recipe)])
    zz, yy, xx = _fractional_grid(dims)

    if recipe == "blobs":
        k = int(rng.integers(3, 13))
        out = np.zeros((d, h, w), np.float32)
        for _ in range(k):
            cx, cy, cz = rng.uniform(0.15, 0.85, 3)
            sigma = rng.uniform(0.04, 0.18)
            amp = rng.uniform(0.4, 1.0)
            r2 = (xx - cx) ** 2 + (yy - cy) ** 2 + (zz - cz) ** 2
            out += amp * np.exp(-r2 / (2 * sigma**2)).astype(np.float32)
    elif recipe == "fault_noise":
        out = _value_noise(rng, dims, res=4)
        # sharpen to create distinct opaque/empty regions
        out = (out - out.min()) / max(out.max() - out.min(), 1e-9)
        out = out**2
    else:  # shell
        r0 = rng.uniform(0.25, 0.38)
        sigma = rng.uniform(0.02, 0.05)
        wobble = (_value_noise(rng, dims, res=4, octaves=3) - 0.5) * 0.12
        r = np.sqrt((xx - 0.5) ** 2 + (yy - 0.5) ** 2 + (zz - 0.5) ** 2)
        out = np.exp(-((r + wobble - r0) ** 2) / (2 * sigma**2)).astype(np.float32)

    out = out / max(float(out.max()), 1e-9)
    out = np.clip(out, 0.0, 1.0).astype(np.float32)
    vol = Volume(out, "unit")
    sparsity = float(np.mean(out > SPARSITY_THRESHOLD))
    meta = VolumeMeta(
        id=f"{recipe}-{seed}-{w}x{h}x{d}", source="synthetic", seed=seed, sparsity=sparsity
    )
    return vol, meta


_DTYPES = {"u8": np.dtype("<u1"), "f32": np.dtype("<f4")}


def _sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def save_raw(v: Volume, path, vol_id: str = "") -> None:
    """Write raw little-endian voxel bytes plus a JSON sidecar."""
    path = Path(path)
    if v.data.dtype == np.uint8:
        dtype = "u8"
        raw = v.data.astype("<u1")
    else:
        dtype = "f32"
        raw = v.data.astype("<f4")
    try:
        path.write_bytes(raw.tobytes())
        sidecar = {"id": vol_id, "dims": list(v.dims), "dtype": dtype}
        _sidecar_path(path).write_text(json.dumps(sidecar))
    except OSError as e:
        raise VolumeIoError(str(e)) from e


def load_raw(path, dims=None, dtype=None, value_range=None) -> Volume:
    """Load a raw volume; dims/dtype come from the sidecar when not given."""
    path = Path(path)
    if dims is None or dtype is None:
        sc = _sidecar_path(path)
        if not sc.exists():
            raise MissingSidecar(f"no sidecar for {path} and dims/dtype not given")
        meta = json.loads(sc.read_text())
        dims = dims or tuple(meta["dims"])
        dtype = dtype or meta["dtype"]
    if dtype not in _DTYPES:
        raise ValueError(f"dtype must be one of {list(_DTYPES)}, got {dtype!r}")
    w, h, d = dims
    np_dtype = _DTYPES[dtype]
    expected = w * h * d * np_dtype.itemsize
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise VolumeIoError(str(e)) from e
    if len(raw) != expected:
        raise SizeMismatch(f"{path}: {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype=np_dtype).reshape(d, h, w)
    if value_range is None:
        if dtype == "u8":
            value_range = "u8"
        else:
            value_range = "unit" if float(data.min()) >= 0.0 else "signed"
    return Volume(np.ascontiguousarray(data), value_range)


def save_manifest(metas: list[VolumeMeta], path, seed: int | None = None) -> None:
    doc = {"volumes": [m.to_json() for m in metas]}
    if seed is not None:
        doc["seed"] = seed
    Path(path).write_text(json.dumps(doc, indent=2))


def load_manifest(path) -> tuple[list[VolumeMeta], int | None]:
    doc = json.loads(Path(path).read_text())
    metas = [VolumeMeta.from_json(m) for m in doc["volumes"]]
    ids = [m.id for m in metas]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate volume ids in manifest")
    return metas, doc.get("seed")
