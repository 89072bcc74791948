"""Dataset construction: sample rendering parameters, collect timings, persist.

Datasets are JSONL, one timing sample per line, with a sibling
"<path>.meta.json" describing how the rows were collected. Rows are
self-describing: re-rendering a row's (volume, pose, kappa, img, delta)
reproduces its cost exactly.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import raycaster, tfcam
from .errors import EmptyResult, RenderFailure
from .tfcam import CameraPose, TransferFunction
from .volcore import Volume, VolumeMeta, load_raw

log = logging.getLogger(__name__)

DEFAULT_RESOLUTIONS = ((256, 256), (512, 512))
SAMPLES_PER_VOLUME_TRAIN = 100
SAMPLES_PER_VOLUME_EVAL = 10
TARGETS = ("wall", "cost", "synthetic")


@dataclass
class TimingSample:
    volume_id: str
    pose: CameraPose
    kappa: list[float]
    img: tuple[int, int]
    delta: float
    wall_ms: float
    cost: int
    repeats: int

    def target(self, field_name: str) -> float:
        return float(self.wall_ms if field_name == "wall" else self.cost)

    def to_json(self) -> dict:
        return {
            "volume_id": self.volume_id,
            "pose": self.pose.to_json(),
            "kappa": list(self.kappa),
            "img": list(self.img),
            "delta": self.delta,
            "wall_ms": self.wall_ms,
            "cost": self.cost,
            "repeats": self.repeats,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TimingSample":
        return cls(
            volume_id=obj["volume_id"],
            pose=CameraPose.from_json(obj["pose"]),
            kappa=[float(x) for x in obj["kappa"]],
            img=tuple(obj["img"]),
            delta=float(obj["delta"]),
            wall_ms=float(obj["wall_ms"]),
            cost=int(obj["cost"]),
            repeats=int(obj["repeats"]),
        )


@dataclass
class DatasetManifest:
    """Volumes plus a stable volume-level 80/10/10 split."""

    volumes: list[VolumeMeta]
    split: dict[str, str]
    seed: int = 0
    samples_per_volume_train: int = SAMPLES_PER_VOLUME_TRAIN
    samples_per_volume_eval: int = SAMPLES_PER_VOLUME_EVAL

    @classmethod
    def from_volumes(cls, volumes: list[VolumeMeta], seed: int = 0, **kw) -> "DatasetManifest":
        from .volumenet import split_ids

        split = split_ids([m.id for m in volumes], seed)
        return cls(volumes=volumes, split=split, seed=seed, **kw)

    def to_json(self) -> dict:
        return {
            "volumes": [m.to_json() for m in self.volumes],
            "split": self.split,
            "seed": self.seed,
            "samples_per_volume_train": self.samples_per_volume_train,
            "samples_per_volume_eval": self.samples_per_volume_eval,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetManifest":
        return cls(
            volumes=[VolumeMeta.from_json(m) for m in obj["volumes"]],
            split=dict(obj["split"]),
            seed=obj.get("seed", 0),
            samples_per_volume_train=obj.get("samples_per_volume_train", SAMPLES_PER_VOLUME_TRAIN),
            samples_per_volume_eval=obj.get("samples_per_volume_eval", SAMPLES_PER_VOLUME_EVAL),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_json(json.loads(Path(path).read_text()))


def draw_sample_params(rng: np.random.Generator, m_lobes: int, resolutions):
    pose = tfcam.sample_pose(rng)
    tf = tfcam.sample_tf(rng, m_lobes)
    img = tuple(resolutions[int(rng.integers(0, len(resolutions)))])
    return pose, tf, img


def collect(
    manifest: DatasetManifest,
    volumes: dict[str, Volume],
    out_path,
    target: str = "cost",
    base_cfg: raycaster.RenderConfig | None = None,
    repeats: int = 5,
    resolutions=DEFAULT_RESOLUTIONS,
    m_lobes: int = 3,
    samples_per_volume: int | None = None,
    seed: int | None = None,
    synthetic_fit: tuple[float, float] | None = None,
) -> int:
    """Render every volume under random parameters and append JSONL rows.

    The parameter sequence is deterministic per (seed, volume index). Failed
    renders are logged and skipped; the run continues. Returns the row count.
    """
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}")
    base_cfg = base_cfg or raycaster.RenderConfig()
    seed = manifest.seed if seed is None else seed
    n_samples = samples_per_volume or manifest.samples_per_volume_train
    if target == "synthetic" and synthetic_fit is None:
        first = volumes[manifest.volumes[0].id]
        synthetic_fit = raycaster.calibrate_synthetic_time(
            first, tfcam.sample_tf(np.random.default_rng(seed), m_lobes), base_cfg
        )
    rows = 0
    out_path = Path(out_path)
    with open(out_path, "w") as f:
        for v_index, meta in enumerate(manifest.volumes):
            vol = volumes[meta.id]
            rng = np.random.default_rng([seed, v_index])
            for s_index in range(n_samples):
                pose, tf, img = draw_sample_params(rng, m_lobes, resolutions)
                cfg = raycaster.RenderConfig(
                    step_size=base_cfg.step_size,
                    ert_threshold=base_cfg.ert_threshold,
                    ess_enabled=base_cfg.ess_enabled,
                    ess_block=base_cfg.ess_block,
                    scattering=base_cfg.scattering,
                    scatter_threshold=base_cfg.scatter_threshold,
                    light_dir=base_cfg.light_dir,
                    img=img,
                    background=base_cfg.background,
                    fov_deg=base_cfg.fov_deg,
                )
                try:
                    sample = raycaster.measure(
                        vol, tf, pose, cfg, repeats=repeats, volume_id=meta.id
                    )
                except RenderFailure as e:
                    log.warning("render failed for %s sample %d: %s", meta.id, s_index, e)
                    continue
                if target == "synthetic":
                    a, b = synthetic_fit
                    sample.wall_ms = a * sample.cost + b
                f.write(json.dumps(sample.to_json()) + "\n")
                rows += 1
    meta_doc = {
        "target": target,
        "seed": seed,
        "repeats": repeats,
        "delta_ref": base_cfg.step_size,
        "m_lobes": m_lobes,
        "resolutions": [list(r) for r in resolutions],
        "samples_per_volume": n_samples,
        "scattering": base_cfg.scattering,
    }
    if synthetic_fit is not None:
        meta_doc["synthetic_fit"] = list(synthetic_fit)
    Path(str(out_path) + ".meta.json").write_text(json.dumps(meta_doc, indent=2))
    return rows


def load_dataset(path) -> list[TimingSample]:
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append(TimingSample.from_json(json.loads(line)))
    return rows


def save_dataset(rows: list[TimingSample], path) -> None:
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row.to_json()) + "\n")


def subsample(rows: list[TimingSample], gamma: float, seed: int = 0) -> list[TimingSample]:
    """Per-volume stratified uniform subset without replacement."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    if gamma * len(rows) < 1:
        raise EmptyResult(f"gamma {gamma} leaves no rows out of {len(rows)}")
    if gamma == 1.0:
        return list(rows)
    by_volume: dict[str, list[int]] = {}
    for i, row in enumerate(rows):
        by_volume.setdefault(row.volume_id, []).append(i)
    rng = np.random.default_rng(seed)
    keep: list[int] = []
    for vid in sorted(by_volume):
        indices = by_volume[vid]
        k = max(1, int(round(gamma * len(indices))))
        keep.extend(rng.choice(indices, size=k, replace=False))
    return [rows[i] for i in sorted(keep)]


def load_volumes_for(manifest: DatasetManifest, root=None) -> dict[str, Volume]:
    """Resolve manifest volumes from disk; synthetic volumes whose file is
    missing are regenerated from their (seed, dims, recipe)."""
    from .volcore import gen_synthetic

    out = {}
    for meta in manifest.volumes:
        path = None
        if meta.path:
            path = Path(meta.path)
            if root is not None and not path.is_absolute():
                path = Path(root) / path
        if path is not None and path.exists():
            out[meta.id] = load_raw(path)
        elif meta.source == "synthetic" and meta.seed is not None:
            recipe = meta.id.split("-")[0]
            dims_part = meta.id.rsplit("-", 1)[-1]
            w, h, d = (int(x) for x in dims_part.split("x"))
            vol, _ = gen_synthetic(meta.seed, (w, h, d), recipe)
            out[meta.id] = vol
        else:
            raise EmptyResult(f"cannot resolve volume {meta.id}: no file and not synthetic")
    return out
