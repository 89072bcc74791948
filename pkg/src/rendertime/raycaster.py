"""CPU volume raycaster with dual cost metering.

Front-to-back compositing with early ray termination, block-based empty-space
skipping, central-difference diffuse shading, and optional single scattering.
Every deterministic statistic (sample counts, termination counts) is a pure
function of the inputs and is identical for any render thread count; wall
time is measured separately.

Sample positions along a ray live on the fixed grid t0 + (k + 0.5) * delta,
and empty-space skipping only advances k, so an ESS render visits a subset of
the non-ESS sample positions and compositing agrees to LUT-emptiness
tolerance.
"""
from __future__ import annotations

import io
import math
import os
import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from . import tfcam
from .errors import StepSizeOutOfRange
from .tfcam import CameraPose, OpacityLUT, TransferFunction, bake_lut, camera_basis
from .volcore import Volume

import numba
from numba import njit, prange

# Valid ray step sizes in units of voxel spacing; the step controller clamps
# to the same interval.
DELTA_MIN = 0.25
DELTA_MAX = 4.0
DELTA_REF = 1.0

ESS_EMPTY_TOL = 1e-4


@dataclass(frozen=True)
class RenderConfig:
    step_size: float = DELTA_REF
    ert_threshold: float = 0.99
    ess_enabled: bool = True
    ess_block: int = 8
    scattering: bool = False
    scatter_threshold: float = 0.25
    light_dir: tuple[float, float, float] = (0.5773503, 0.5773503, 0.5773503)
    img: tuple[int, int] = (256, 256)
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    fov_deg: float = 45.0
    ambient: float = 0.3
    diffuse: float = 0.7

    def __post_init__(self):
        if not 0.0 < self.ert_threshold <= 1.0:
            raise ValueError(f"ert_threshold {self.ert_threshold} outside (0, 1]")
        if not 0.0 < self.scatter_threshold <= 1.0:
            raise ValueError(f"scatter_threshold {self.scatter_threshold} outside (0, 1]")
        if self.step_size <= 0:
            raise StepSizeOutOfRange(f"step_size {self.step_size} must be positive")
        if self.ess_block < 1:
            raise ValueError("ess_block must be >= 1")


@dataclass
class RenderStats:
    wall_ms: float
    samples_primary: int
    samples_shadow: int
    rays_ert_terminated: int
    rays_total: int

    @property
    def samples_total(self) -> int:
        return self.samples_primary + self.samples_shadow

    def to_json(self) -> dict:
        return {
            "wall_ms": self.wall_ms,
            "samples_primary": self.samples_primary,
            "samples_shadow": self.samples_shadow,
            "rays_ert_terminated": self.rays_ert_terminated,
            "rays_total": self.rays_total,
        }


@dataclass
class Frame:
    """RGBA8 pixel buffer, shape (height, width, 4)."""

    rgba: np.ndarray

    def __post_init__(self):
        if self.rgba.ndim != 3 or self.rgba.shape[2] != 4 or self.rgba.dtype != np.uint8:
            raise ValueError("frame must be (h, w, 4) uint8")

    @property
    def size(self) -> tuple[int, int]:
        return (self.rgba.shape[1], self.rgba.shape[0])

    def to_png_bytes(self) -> bytes:
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(self.rgba, mode="RGBA").save(buf, format="PNG")
        return buf.getvalue()

    def save_png(self, path) -> None:
        from PIL import Image

        Image.fromarray(self.rgba, mode="RGBA").save(str(path), format="PNG")


def resolve_threads(requested: int | None = None) -> int:
    """Thread count for the render pool, honoring RENDERTIME_THREADS."""
    cap = os.environ.get("RENDERTIME_THREADS")
    n = requested if requested is not None else (int(cap) if cap else numba.config.NUMBA_NUM_THREADS)
    return max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))


def _unit_grid(v: Volume) -> np.ndarray:
    cached = getattr(v, "_unit_cache", None)
    if cached is None:
        cached = v.as_unit()
        cached.setflags(write=False)
        v._unit_cache = cached
    return cached


def precompute_ess_grid(v: Volume, lut: OpacityLUT, block: int) -> np.ndarray:
    """Per-block maximum LUT opacity over the block's voxels, extended by one
    voxel on each side (the interpolation footprint). Ceiling semantics: the
    last block along an axis may cover fewer voxels."""
    unit = _unit_grid(v)
    idx = np.clip((unit * 255.0 + 0.5).astype(np.int32), 0, 255)
    opac = lut.opacities[idx]
    opac = ndimage.maximum_filter(opac, size=3, mode="nearest")
    d, h, w = opac.shape
    nbz, nby, nbx = (-(-d // block), -(-h // block), -(-w // block))
    padded = np.zeros((nbz * block, nby * block, nbx * block), np.float32)
    padded[:d, :h, :w] = opac
    return (
        padded.reshape(nbz, block, nby, block, nbx, block)
        .max(axis=(1, 3, 5))
        .astype(np.float32)
    )


def _ess_grid_cached(v: Volume, lut: OpacityLUT, block: int) -> np.ndarray:
    cache = getattr(v, "_ess_cache", None)
    if cache is None:
        cache = {}
        v._ess_cache = cache
    key = (hash(lut.entries.tobytes()), block)
    if key not in cache:
        if len(cache) > 8:
            cache.clear()
        cache[key] = precompute_ess_grid(v, lut, block)
    return cache[key]


@njit(inline="always")
def _fetch(vol, W, H, D, x, y, z):
    # trilinear fetch at voxel-space position; cell centers sit at i + 0.5
    xi = x - 0.5
    yi = y - 0.5
    zi = z - 0.5
    if xi < 0.0:
        xi = 0.0
    if yi < 0.0:
        yi = 0.0
    if zi < 0.0:
        zi = 0.0
    if xi > W - 1.0:
        xi = W - 1.0
    if yi > H - 1.0:
        yi = H - 1.0
    if zi > D - 1.0:
        zi = D - 1.0
    x0 = int(xi)
    y0 = int(yi)
    z0 = int(zi)
    x1 = min(x0 + 1, W - 1)
    y1 = min(y0 + 1, H - 1)
    z1 = min(z0 + 1, D - 1)
    fx = xi - x0
    fy = yi - y0
    fz = zi - z0
    c00 = vol[z0, y0, x0] * (1.0 - fx) + vol[z0, y0, x1] * fx
    c10 = vol[z0, y1, x0] * (1.0 - fx) + vol[z0, y1, x1] * fx
    c01 = vol[z1, y0, x0] * (1.0 - fx) + vol[z1, y0, x1] * fx
    c11 = vol[z1, y1, x0] * (1.0 - fx) + vol[z1, y1, x1] * fx
    return (c00 * (1.0 - fy) + c10 * fy) * (1.0 - fz) + (c01 * (1.0 - fy) + c11 * fy) * fz


@njit(inline="always")
def _aabb(ox, oy, oz, dx, dy, dz, W, H, D):
    t0 = 0.0
    t1 = 1.0e30
    for axis in range(3):
        if axis == 0:
            o, dd, ext = ox, dx, float(W)
        elif axis == 1:
            o, dd, ext = oy, dy, float(H)
        else:
            o, dd, ext = oz, dz, float(D)
        if abs(dd) < 1e-12:
            if o < 0.0 or o > ext:
                return 1.0, -1.0
        else:
            ta = (0.0 - o) / dd
            tb = (ext - o) / dd
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    return t0, t1


@njit(parallel=True, fastmath=True, cache=True)
def _march(
    vol,
    lut,
    ess,
    bsize,
    use_ess,
    origin,
    fwd,
    right,
    up,
    tanf,
    aspect,
    iw,
    ih,
    delta,
    ert,
    scattering,
    scatter_thr,
    light,
    amb,
    dif,
    bg,
    frame,
    prim,
    shad,
    ertc,
):
    D, H, W = vol.shape
    nbz, nby, nbx = ess.shape
    for py in prange(ih):
        row_prim = 0
        row_shad = 0
        row_ert = 0
        for px in range(iw):
            u = ((px + 0.5) / iw * 2.0 - 1.0) * tanf * aspect
            v = (1.0 - 2.0 * (py + 0.5) / ih) * tanf
            dx = fwd[0] + u * right[0] + v * up[0]
            dy = fwd[1] + u * right[1] + v * up[1]
            dz = fwd[2] + u * right[2] + v * up[2]
            inv = 1.0 / math.sqrt(dx * dx + dy * dy + dz * dz)
            dx *= inv
            dy *= inv
            dz *= inv
            ox, oy, oz = origin[0], origin[1], origin[2]
            t0, t1 = _aabb(ox, oy, oz, dx, dy, dz, W, H, D)
            A = 0.0
            cr = 0.0
            cg = 0.0
            cb = 0.0
            if t1 > t0:
                if t0 < 0.0:
                    t0 = 0.0
                k = 0
                while True:
                    t = t0 + (k + 0.5) * delta
                    if t >= t1:
                        break
                    x = ox + t * dx
                    y = oy + t * dy
                    z = oz + t * dz
                    if use_ess:
                        bx = int(x / bsize)
                        by = int(y / bsize)
                        bz = int(z / bsize)
                        if bx < 0:
                            bx = 0
                        if by < 0:
                            by = 0
                        if bz < 0:
                            bz = 0
                        if bx >= nbx:
                            bx = nbx - 1
                        if by >= nby:
                            by = nby - 1
                        if bz >= nbz:
                            bz = nbz - 1
                        if ess[bz, by, bx] <= ESS_EMPTY_TOL:
                            # advance to the first sample past this block
                            t_exit = 1.0e30
                            if dx > 1e-12:
                                tx = ((bx + 1) * bsize - ox) / dx
                                if tx < t_exit:
                                    t_exit = tx
                            elif dx < -1e-12:
                                tx = (bx * bsize - ox) / dx
                                if tx < t_exit:
                                    t_exit = tx
                            if dy > 1e-12:
                                ty = ((by + 1) * bsize - oy) / dy
                                if ty < t_exit:
                                    t_exit = ty
                            elif dy < -1e-12:
                                ty = (by * bsize - oy) / dy
                                if ty < t_exit:
                                    t_exit = ty
                            if dz > 1e-12:
                                tz = ((bz + 1) * bsize - oz) / dz
                                if tz < t_exit:
                                    t_exit = tz
                            elif dz < -1e-12:
                                tz = (bz * bsize - oz) / dz
                                if tz < t_exit:
                                    t_exit = tz
                            k_next = int(math.ceil((t_exit + 1e-7 - t0) / delta - 0.5))
                            if k_next <= k:
                                k_next = k + 1
                            k = k_next
                            continue
                    s = _fetch(vol, W, H, D, x, y, z)
                    row_prim += 1
                    li = int(s * 255.0 + 0.5)
                    if li < 0:
                        li = 0
                    if li > 255:
                        li = 255
                    a = lut[li, 3]
                    if a > 0.0:
                        ac = 1.0 - (1.0 - a) ** delta
                        if ac > 1e-6:
                            # central-difference gradient, one-voxel step
                            gx = (
                                _fetch(vol, W, H, D, x + 1.0, y, z)
                                - _fetch(vol, W, H, D, x - 1.0, y, z)
                            ) * 0.5
                            gy = (
                                _fetch(vol, W, H, D, x, y + 1.0, z)
                                - _fetch(vol, W, H, D, x, y - 1.0, z)
                            ) * 0.5
                            gz = (
                                _fetch(vol, W, H, D, x, y, z + 1.0)
                                - _fetch(vol, W, H, D, x, y, z - 1.0)
                            ) * 0.5
                            gn = math.sqrt(gx * gx + gy * gy + gz * gz)
                            if gn > 1e-6:
                                ndl = -(gx * light[0] + gy * light[1] + gz * light[2]) / gn
                                if ndl < 0.0:
                                    ndl = 0.0
                                shade = amb + dif * ndl
                            else:
                                shade = amb + dif
                            atten = 1.0
                            if scattering:
                                sh_step = 2.0 * delta
                                st0, st1 = _aabb(x, y, z, light[0], light[1], light[2], W, H, D)
                                if st1 > st0:
                                    ash = 0.0
                                    j = 0
                                    while True:
                                        st = (j + 0.5) * sh_step
                                        if st >= st1 or ash >= scatter_thr:
                                            break
                                        ss = _fetch(
                                            vol,
                                            W,
                                            H,
                                            D,
                                            x + st * light[0],
                                            y + st * light[1],
                                            z + st * light[2],
                                        )
                                        row_shad += 1
                                        sli = int(ss * 255.0 + 0.5)
                                        if sli < 0:
                                            sli = 0
                                        if sli > 255:
                                            sli = 255
                                        sa = lut[sli, 3]
                                        if sa > 0.0:
                                            ash += (1.0 - ash) * (1.0 - (1.0 - sa) ** sh_step)
                                        j += 1
                                    atten = 1.0 - ash / scatter_thr
                                    if atten < 0.0:
                                        atten = 0.0
                            wgt = (1.0 - A) * ac
                            mod = shade * atten
                            cr += wgt * lut[li, 0] * mod
                            cg += wgt * lut[li, 1] * mod
                            cb += wgt * lut[li, 2] * mod
                            A += wgt
                            if A >= ert:
                                row_ert += 1
                                break
                    k += 1
            rem = 1.0 - A
            cr += rem * bg[0]
            cg += rem * bg[1]
            cb += rem * bg[2]
            frame[py, px, 0] = min(max(int(cr * 255.0 + 0.5), 0), 255)
            frame[py, px, 1] = min(max(int(cg * 255.0 + 0.5), 0), 255)
            frame[py, px, 2] = min(max(int(cb * 255.0 + 0.5), 0), 255)
            frame[py, px, 3] = 255
        prim[py] = row_prim
        shad[py] = row_shad
        ertc[py] = row_ert


def render(
    v: Volume,
    tf: TransferFunction,
    pose: CameraPose,
    cfg: RenderConfig,
    threads: int | None = None,
) -> tuple[Frame, RenderStats]:
    if not DELTA_MIN <= cfg.step_size <= DELTA_MAX:
        raise StepSizeOutOfRange(
            f"step_size {cfg.step_size} outside [{DELTA_MIN}, {DELTA_MAX}]"
        )
    start = time.perf_counter()
    unit = _unit_grid(v)
    lut = bake_lut(tf)
    ess = _ess_grid_cached(v, lut, cfg.ess_block)
    origin, fwd, right, up = camera_basis(pose, v.dims)
    iw, ih = cfg.img
    frame = np.empty((ih, iw, 4), np.uint8)
    prim = np.zeros(ih, np.int64)
    shad = np.zeros(ih, np.int64)
    ertc = np.zeros(ih, np.int64)
    numba.set_num_threads(resolve_threads(threads))
    _march(
        unit,
        np.asarray(lut.entries),
        ess,
        cfg.ess_block,
        cfg.ess_enabled,
        origin.astype(np.float64),
        fwd.astype(np.float64),
        right.astype(np.float64),
        up.astype(np.float64),
        math.tan(math.radians(cfg.fov_deg) / 2.0),
        iw / ih,
        iw,
        ih,
        float(cfg.step_size),
        float(cfg.ert_threshold),
        cfg.scattering,
        float(cfg.scatter_threshold),
        np.asarray(cfg.light_dir, np.float64),
        float(cfg.ambient),
        float(cfg.diffuse),
        np.asarray(cfg.background, np.float64),
        frame,
        prim,
        shad,
        ertc,
    )
    wall_ms = (time.perf_counter() - start) * 1000.0
    stats = RenderStats(
        wall_ms=wall_ms,
        samples_primary=int(prim.sum()),
        samples_shadow=int(shad.sum()),
        rays_ert_terminated=int(ertc.sum()),
        rays_total=iw * ih,
    )
    return Frame(frame), stats


def measure(
    v: Volume,
    tf: TransferFunction,
    pose: CameraPose,
    cfg: RenderConfig,
    repeats: int = 5,
    volume_id: str = "",
    time_hook=None,
):
    """Render `repeats` times; the reported wall time is the median.

    Deterministic cost fields are taken from a single run (they are identical
    across runs). `time_hook(i)` substitutes the wall time of repeat i, for
    tests that need controlled timings.
    """
    from .harness import TimingSample

    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if time_hook is not None:
        _, stats = render(v, tf, pose, cfg)
        walls = [float(time_hook(i)) for i in range(repeats)]
    else:
        walls = []
        stats = None
        for _ in range(repeats):
            _, stats = render(v, tf, pose, cfg)
            walls.append(stats.wall_ms)
    return TimingSample(
        volume_id=volume_id,
        pose=pose,
        kappa=tf.kappa.tolist(),
        img=cfg.img,
        delta=cfg.step_size,
        wall_ms=float(statistics.median(walls)),
        cost=stats.samples_total,
        repeats=repeats,
    )


def calibrate_synthetic_time(
    v: Volume, tf: TransferFunction, cfg: RenderConfig, probes: int = 6, seed: int = 0
) -> tuple[float, float]:
    """Fit wall_ms ~ a * samples_total + b over a small probe sweep.

    The fitted pair makes a machine-calibrated, noise-free training target
    available: t = a * cost + b.
    """
    rng = np.random.default_rng(seed)
    xs = []
    ys = []
    for _ in range(probes):
        pose = tfcam.sample_pose(rng)
        # warm run to avoid counting compilation or cache effects
        render(v, tf, pose, cfg)
        _, stats = render(v, tf, pose, cfg)
        xs.append(stats.samples_total)
        ys.append(stats.wall_ms)
    a, b = np.polyfit(np.asarray(xs, float), np.asarray(ys, float), 1)
    return float(a), float(max(b, 0.0))
