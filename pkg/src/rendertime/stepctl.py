"""Ray-step-size steering against a frame budget.

G maps step size to rendering time normalized by the time at the reference
step; it is measured over a (volume, pose) grid, median-aggregated, forced
non-increasing, and inverted through a linear-interpolation lookup to pick
the step size that should hit the target time for a predicted frame cost.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import raycaster, tfcam
from .errors import DegenerateSweep
from .raycaster import DELTA_MAX, DELTA_MIN, DELTA_REF, RenderConfig
from .tfcam import CameraPose, TransferFunction

G_POSE_COUNT = 3
DEFAULT_SWEEP = tuple(float(x) for x in np.geomspace(DELTA_MIN, DELTA_MAX, 9))


@dataclass
class GTable:
    deltas: np.ndarray
    tnorm: np.ndarray
    delta_ref: float = DELTA_REF

    def __post_init__(self):
        self.deltas = np.asarray(self.deltas, dtype=np.float64)
        self.tnorm = np.asarray(self.tnorm, dtype=np.float64)
        if self.deltas.shape != self.tnorm.shape or self.deltas.size < 2:
            raise DegenerateSweep("table needs matching delta/tnorm arrays, length >= 2")
        if np.any(np.diff(self.deltas) <= 0):
            raise DegenerateSweep("deltas must be strictly ascending")
        if np.any(self.tnorm <= 0):
            raise DegenerateSweep("tnorm must be strictly positive")
        if np.any(np.diff(self.tnorm) > 1e-12):
            raise DegenerateSweep("tnorm must be non-increasing")
        ref_val = g_eval(self, self.delta_ref)
        if abs(ref_val - 1.0) > 1e-6:
            raise DegenerateSweep(f"G(delta_ref) = {ref_val}, expected 1")

    def to_json(self) -> dict:
        return {
            "deltas": self.deltas.tolist(),
            "tnorm": self.tnorm.tolist(),
            "delta_ref": self.delta_ref,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GTable":
        return cls(np.array(obj["deltas"]), np.array(obj["tnorm"]), float(obj["delta_ref"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path) -> "GTable":
        return cls.from_json(json.loads(Path(path).read_text()))


def isotonic_non_increasing(y: np.ndarray) -> np.ndarray:
    """Projection onto non-increasing sequences (pool adjacent violators)."""
    from scipy.optimize import isotonic_regression

    return isotonic_regression(np.asarray(y, dtype=np.float64), increasing=False).x


def build_g(
    volumes,
    renderer_cfg: RenderConfig,
    tf: TransferFunction,
    deltas=DEFAULT_SWEEP,
    delta_ref: float = DELTA_REF,
    pose_count: int = G_POSE_COUNT,
    seed: int = 0,
    use_cost: bool = True,
) -> GTable:
    """Measure t(delta) curves over volumes x poses, normalize each by its
    value at delta_ref, take the per-delta median, and project non-increasing.
    """
    deltas = np.asarray(sorted(set(float(d) for d in deltas)), dtype=np.float64)
    if deltas.size < 8:
        raise DegenerateSweep(f"sweep needs >= 8 points, got {deltas.size}")
    ref_idx = int(np.argmin(np.abs(deltas - delta_ref)))
    if abs(deltas[ref_idx] - delta_ref) > 1e-9:
        raise DegenerateSweep(f"sweep must contain delta_ref={delta_ref}")
    if deltas[0] < DELTA_MIN or deltas[-1] > DELTA_MAX:
        raise DegenerateSweep(f"sweep outside [{DELTA_MIN}, {DELTA_MAX}]")

    rng = np.random.default_rng(seed)
    poses = [tfcam.sample_pose(rng) for _ in range(pose_count)]
    curves = []
    for vol in volumes:
        for pose in poses:
            ts = []
            for d in deltas:
                cfg = RenderConfig(
                    step_size=float(d),
                    ert_threshold=renderer_cfg.ert_threshold,
                    ess_enabled=renderer_cfg.ess_enabled,
                    ess_block=renderer_cfg.ess_block,
                    scattering=renderer_cfg.scattering,
                    scatter_threshold=renderer_cfg.scatter_threshold,
                    light_dir=renderer_cfg.light_dir,
                    img=renderer_cfg.img,
                    background=renderer_cfg.background,
                    fov_deg=renderer_cfg.fov_deg,
                )
                _, stats = raycaster.render(vol, tf, pose, cfg)
                ts.append(stats.samples_total if use_cost else stats.wall_ms)
            ts = np.asarray(ts, dtype=np.float64)
            if ts[ref_idx] <= 0:
                continue  # degenerate view (volume fully outside or transparent)
            curves.append(ts / ts[ref_idx])
    if not curves:
        raise DegenerateSweep("no usable curves measured")
    med = np.median(np.stack(curves), axis=0)
    med = isotonic_non_increasing(med)
    med = np.maximum(med, 1e-9)
    med = med / med[ref_idx]  # renormalize so G(delta_ref) = 1 exactly
    return GTable(deltas, med, delta_ref)


def g_eval(g: GTable, delta: float) -> float:
    """Piecewise-linear G(delta), clamped to the table domain."""
    return float(np.interp(delta, g.deltas, g.tnorm))


def g_inverse(g: GTable, ratio: float) -> float:
    """Piecewise-linear inverse; clamps below the table to delta_max and
    above it to delta_min (tnorm is non-increasing in delta)."""
    return float(np.interp(ratio, g.tnorm[::-1], g.deltas[::-1]))


@dataclass
class ControllerConfig:
    t_target: float = 25.0
    delta_min: float = DELTA_MIN
    delta_max: float = DELTA_MAX
    delta_ref: float = DELTA_REF
    n_frames: int = 200
    enabled: bool = True

    def __post_init__(self):
        if not self.delta_min < self.delta_ref < self.delta_max:
            raise ValueError("need delta_min < delta_ref < delta_max")
        if self.t_target <= 0:
            raise ValueError("t_target must be positive")


@dataclass
class PosePath:
    """Keyframed time -> pose function with linear interpolation.

    Keyframes are (time, rx, ry, dz); rx may run beyond 360 to describe
    multi-turn orbits and is wrapped when the pose is materialized.
    """

    keyframes: list[tuple[float, float, float, float]]

    def __post_init__(self):
        if len(self.keyframes) < 2:
            raise ValueError("path needs at least 2 keyframes")
        times = [k[0] for k in self.keyframes]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("keyframe times must be strictly increasing")

    @property
    def duration(self) -> float:
        return self.keyframes[-1][0]

    def pose_at(self, t: float) -> CameraPose:
        ks = self.keyframes
        t = min(max(t, ks[0][0]), ks[-1][0])
        times = np.array([k[0] for k in ks])
        i = int(np.searchsorted(times, t, side="right")) - 1
        i = min(max(i, 0), len(ks) - 2)
        t0, *p0 = ks[i]
        t1, *p1 = ks[i + 1]
        f = (t - t0) / (t1 - t0)
        rx, ry, dz = (a + f * (b - a) for a, b in zip(p0, p1))
        return CameraPose(rx % 360.0, min(max(ry, -89.0), 89.0), min(max(dz, 1.2), 4.0))

    def to_json(self) -> dict:
        return {"keyframes": [list(k) for k in self.keyframes]}

    @classmethod
    def from_json(cls, obj: dict) -> "PosePath":
        return cls([tuple(float(x) for x in k) for k in obj["keyframes"]])


def steer_delta(g: GTable, cfg: ControllerConfig, t_pred: float) -> float:
    """One step of the controller: delta for the predicted frame cost."""
    if t_pred <= 0:
        return cfg.delta_min
    delta = (cfg.delta_ref / g.delta_ref) * g_inverse(g, cfg.t_target / t_pred)
    return min(max(delta, cfg.delta_min), cfg.delta_max)


def control_loop(
    predict_fn,
    g: GTable,
    cfg: ControllerConfig,
    path: PosePath,
    render_fn,
    log_path=None,
) -> list[dict]:
    """Benchmark-mode loop over a fixed frame count along a scripted path.

    predict_fn(pose) -> predicted cost at delta_ref; render_fn(pose, delta)
    -> (t_actual, wall_ms). With the controller disabled every frame renders
    at delta_ref.
    """
    rows = []
    log_f = open(log_path, "w") if log_path else None
    try:
        for i in range(cfg.n_frames):
            t = path.duration * i / max(cfg.n_frames - 1, 1)
            pose = path.pose_at(t)
            t_pred = float(predict_fn(pose))
            delta = steer_delta(g, cfg, t_pred) if cfg.enabled else cfg.delta_ref
            t_actual, wall_ms = render_fn(pose, delta)
            row = {
                "frame": i,
                "t_pred": t_pred,
                "delta_adapt": delta,
                "t_actual": float(t_actual),
                "wall_ms": float(wall_ms),
            }
            rows.append(row)
            if log_f:
                log_f.write(json.dumps(row) + "\n")
    finally:
        if log_f:
            log_f.close()
    return rows
