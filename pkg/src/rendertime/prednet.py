"""Stage-2 rendering-time regressor and the combined model bundle.

An MLP with SELU activations maps (feature vector, camera pose, transfer
function parameters, image resolution) to a predicted rendering time. Inputs
are normalized onto roughly [0, 1]; targets are z-scored with a scaler fitted
on the training split only.
"""
from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field

import numpy as np

from . import nnkit
from .errors import DimMismatch, MissingScaler, TooFewSamples
from .harness import TimingSample
from .nnkit import Adam, Linear, OptimConfig, SELU, Sequential, clip_gradients, cosine_lr, early_stop, mse, mse_grad
from .tfcam import CameraPose, TransferFunction
from .volcore import Volume
from .volumenet import FeatureVector, VolumeNet, VolumeNetArch, encode, prepare_input

_PRED_RE = re.compile(r"^(\d+)C(\d+)$")

INPUT_GROUPS = ("feature", "pose", "tf", "resolution")

# input normalization constants
POSE_SCALE = (360.0, 178.0, 4.0)
WIDTH_GAIN = 5.0
RES_SCALE = 1024.0


@dataclass(frozen=True)
class PredNetArch:
    feature_dim: int = 4
    m_lobes: int = 3
    n_c256: int = 4
    width: int = 256
    tail: tuple[int, ...] = (128, 64, 32)

    @property
    def input_dim(self) -> int:
        return self.feature_dim + 3 + 3 * self.m_lobes + 2

    @property
    def descriptor(self) -> str:
        return f"{self.n_c256}C{self.width}"

    @classmethod
    def parse(cls, s: str, feature_dim: int, m_lobes: int = 3) -> "PredNetArch":
        m = _PRED_RE.match(s.strip())
        if not m:
            raise ValueError(f"bad PredNet descriptor {s!r}, expected e.g. '4C256'")
        return cls(feature_dim=feature_dim, m_lobes=m_lobes, n_c256=int(m.group(1)), width=int(m.group(2)))


@dataclass
class TargetScaler:
    mean: float
    std: float

    def __post_init__(self):
        if self.std <= 0:
            raise ValueError("target scaler std must be positive")

    @classmethod
    def fit(cls, values: np.ndarray) -> "TargetScaler":
        std = float(np.std(values))
        return cls(float(np.mean(values)), max(std, 1e-9))

    def transform(self, values):
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, z):
        return self.mean + self.std * np.asarray(z, dtype=np.float64)


@dataclass
class FeatureScaler:
    """Per-dimension standardization of encoder features, fitted on the
    training volumes. Raw encoder outputs are unbounded and would otherwise
    swamp the unit-range pose/tf/resolution inputs."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float32)
        self.std = np.asarray(self.std, dtype=np.float32)
        if np.any(self.std <= 0):
            raise ValueError("feature scaler std must be positive")

    @classmethod
    def fit(cls, feature_rows: np.ndarray) -> "FeatureScaler":
        return cls(feature_rows.mean(axis=0), np.maximum(feature_rows.std(axis=0), 1e-6))

    @classmethod
    def identity(cls, dim: int) -> "FeatureScaler":
        return cls(np.zeros(dim, np.float32), np.ones(dim, np.float32))

    def transform(self, features: np.ndarray) -> np.ndarray:
        return ((features - self.mean) / self.std).astype(np.float32)


def group_slices(arch: PredNetArch) -> dict[str, slice]:
    f = arch.feature_dim
    k = 3 * arch.m_lobes
    return {
        "feature": slice(0, f),
        "pose": slice(f, f + 3),
        "tf": slice(f + 3, f + 3 + k),
        "resolution": slice(f + 3 + k, f + 3 + k + 2),
    }


def build_inputs(
    arch: PredNetArch,
    features: np.ndarray,
    poses: np.ndarray,
    kappas: np.ndarray,
    imgs: np.ndarray,
    drop=(),
) -> np.ndarray:
    """Assemble and normalize the (N, input_dim) matrix.

    poses are raw (rx, ry, dz) degrees/diagonals; kappas raw 3m vectors; imgs
    raw (w, h) pixels. Groups named in `drop` are zeroed.
    """
    n = len(features)
    if features.shape != (n, arch.feature_dim):
        raise DimMismatch(f"features {features.shape} vs F={arch.feature_dim}")
    if kappas.shape != (n, 3 * arch.m_lobes):
        raise DimMismatch(f"kappa {kappas.shape} vs 3m={3 * arch.m_lobes}")
    x = np.empty((n, arch.input_dim), dtype=np.float32)
    sl = group_slices(arch)
    x[:, sl["feature"]] = features
    x[:, sl["pose"]] = np.stack(
        [
            poses[:, 0] / POSE_SCALE[0],
            (poses[:, 1] + 89.0) / POSE_SCALE[1],
            poses[:, 2] / POSE_SCALE[2],
        ],
        axis=1,
    )
    kn = kappas.reshape(n, arch.m_lobes, 3).copy()
    kn[:, :, 1] *= WIDTH_GAIN
    x[:, sl["tf"]] = kn.reshape(n, -1)
    x[:, sl["resolution"]] = imgs / RES_SCALE
    for g in drop:
        if g not in sl:
            raise ValueError(f"unknown input group {g!r}; choose from {INPUT_GROUPS}")
        x[:, sl[g]] = 0.0
    return x


class PredNet:
    def __init__(self, arch: PredNetArch, seed: int = 0):
        self.arch = arch
        rng = np.random.default_rng(seed)
        layers = [Linear(arch.input_dim, arch.width, rng=rng, name="fc_in"), SELU()]
        for i in range(arch.n_c256):
            layers += [Linear(arch.width, arch.width, rng=rng, name=f"fc_c{i}"), SELU()]
        prev = arch.width
        for i, width in enumerate(arch.tail):
            layers += [Linear(prev, width, rng=rng, name=f"fc_tail{i}"), SELU()]
            prev = width
        layers += [Linear(prev, 1, rng=rng, name="fc_out")]
        self.net = Sequential(layers)

    def forward(self, x, train=False):
        return self.net.forward(x, train)

    def backward(self, grad):
        return self.net.backward(grad)

    def params(self):
        return self.net.params()

    def state(self) -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self.params()}

    def load_state(self, params: dict[str, np.ndarray]) -> None:
        for p in self.params():
            if p.name not in params:
                raise KeyError(f"checkpoint missing parameter {p.name}")
            p.data = params[p.name].astype(p.data.dtype).reshape(p.data.shape).copy()


def predict(
    net: PredNet,
    scaler: TargetScaler | None,
    feature: FeatureVector | np.ndarray,
    pose: CameraPose,
    tf: TransferFunction,
    img,
    drop=(),
    feature_scaler: FeatureScaler | None = None,
) -> float:
    """Predicted rendering time (same units as the training target), >= 0."""
    if scaler is None:
        raise MissingScaler("no target scaler; train or load a bundle first")
    values = feature.values if isinstance(feature, FeatureVector) else np.asarray(feature)
    if values.shape != (net.arch.feature_dim,):
        raise DimMismatch(f"feature length {values.shape} vs F={net.arch.feature_dim}")
    kappa = tf.kappa
    if kappa.size != 3 * net.arch.m_lobes:
        raise DimMismatch(f"kappa length {kappa.size} vs 3m={3 * net.arch.m_lobes}")
    if feature_scaler is not None:
        values = feature_scaler.transform(values)
    x = build_inputs(
        net.arch,
        values[None].astype(np.float32),
        np.array([[pose.rx, pose.ry, pose.dz]], dtype=np.float32),
        kappa[None].astype(np.float32),
        np.array([img], dtype=np.float32),
        drop=drop,
    )
    z = net.forward(x, train=False)
    return max(0.0, float(scaler.inverse(z[0, 0])))


def rows_to_arrays(rows: list[TimingSample], features: dict[str, np.ndarray], arch: PredNetArch):
    feats = np.stack([features[r.volume_id] for r in rows]).astype(np.float32)
    poses = np.array([[r.pose.rx, r.pose.ry, r.pose.dz] for r in rows], dtype=np.float32)
    kappas = np.array([r.kappa for r in rows], dtype=np.float32)
    imgs = np.array([list(r.img) for r in rows], dtype=np.float32)
    return feats, poses, kappas, imgs


@dataclass
class PredNetTrainResult:
    net: PredNet
    scaler: TargetScaler
    history: list[dict]
    rmse: dict[str, float]
    drop: tuple[str, ...] = ()
    feature_scaler: FeatureScaler | None = None


def train_prednet(
    rows: list[TimingSample],
    features: dict[str, np.ndarray],
    arch: PredNetArch,
    optim: OptimConfig,
    split: dict[str, str],
    target_field: str = "cost",
    seed: int = 0,
    drop=(),
    log_path=None,
    feature_noise: float = 0.0,
) -> PredNetTrainResult:
    """Fit the regressor on precomputed features (stage separation).

    Rows are assigned to train/val/eval by their volume's split; the target
    scaler is fitted on the training rows only. feature_noise adds Gaussian
    jitter (in standardized feature units) to the feature block of each
    training batch; with few distinct volumes this stops the network from
    treating the feature vector as a volume-identity key.
    """
    if len(rows) < 100:
        raise TooFewSamples(f"need >= 100 samples, got {len(rows)}")
    drop = tuple(drop)
    groups = {"train": [], "val": [], "eval": []}
    for r in rows:
        groups.setdefault(split.get(r.volume_id, "train"), []).append(r)
    if not groups["train"]:
        raise TooFewSamples("split produced no training rows")
    if not groups["val"]:
        groups["val"] = groups["train"]

    train_vol_ids = sorted({r.volume_id for r in groups["train"]})
    feature_scaler = FeatureScaler.fit(np.stack([features[v] for v in train_vol_ids]))

    def matrix(subset):
        feats, poses, kappas, imgs = rows_to_arrays(subset, features, arch)
        x = build_inputs(arch, feature_scaler.transform(feats), poses, kappas, imgs, drop=drop)
        y = np.array([r.target(target_field) for r in subset], dtype=np.float64)
        return x, y

    x_train, y_train = matrix(groups["train"])
    scaler = TargetScaler.fit(y_train)
    z_train = scaler.transform(y_train).astype(np.float32)[:, None]
    x_val, y_val = matrix(groups["val"])
    z_val = scaler.transform(y_val).astype(np.float32)[:, None]

    net = PredNet(arch, seed)
    opt = Adam(net.params(), optim)
    rng = np.random.default_rng(seed)
    history = []
    best_val = float("inf")
    best_state = None
    log_f = open(log_path, "w") if log_path else None
    try:
        for epoch in range(optim.max_epochs):
            lr = cosine_lr(epoch, optim.lr_max, optim.lr_min, optim.max_epochs)
            order = rng.permutation(len(x_train))
            losses, weights = [], []
            for start in range(0, len(order), optim.batch_size):
                sel = order[start : start + optim.batch_size]
                opt.zero_grad()
                out = net.forward(x_train[sel], train=True)
                losses.append(mse(out, z_train[sel]))
                weights.append(len(sel))
                net.backward(mse_grad(out, z_train[sel]))
                clip_gradients(net.params(), optim.clip_norm)
                opt.step(lr)
            train_loss = float(np.average(losses, weights=weights))
            val_loss = mse(net.forward(x_val, train=False), z_val)
            history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "lr": lr})
            if log_f:
                log_f.write(json.dumps(history[-1]) + "\n")
            if val_loss < best_val:
                best_val = val_loss
                best_state = {k: v.copy() for k, v in net.state().items()}
            if early_stop([h["val_loss"] for h in history], optim.patience):
                break
    finally:
        if log_f:
            log_f.close()
    if best_state is not None:
        net.load_state(best_state)

    rmse = {}
    for name, subset in groups.items():
        if subset and not (name == "val" and groups["val"] is groups["train"]):
            x, y = matrix(subset)
            pred = np.maximum(scaler.inverse(net.forward(x, train=False)[:, 0]), 0.0)
            rmse[name] = float(np.sqrt(np.mean((pred - y) ** 2)))
    return PredNetTrainResult(net, scaler, history, rmse, drop, feature_scaler)


def predict_rows(
    net: PredNet,
    scaler: TargetScaler,
    rows: list[TimingSample],
    features: dict[str, np.ndarray],
    drop=(),
    feature_scaler: FeatureScaler | None = None,
) -> np.ndarray:
    feats, poses, kappas, imgs = rows_to_arrays(rows, features, net.arch)
    if feature_scaler is not None:
        feats = feature_scaler.transform(feats)
    x = build_inputs(net.arch, feats, poses, kappas, imgs, drop=drop)
    return np.maximum(scaler.inverse(net.forward(x, train=False)[:, 0]), 0.0)


@dataclass
class ModelBundle:
    """Trained VolumeNet encoder + PredNet + scalers, one file on disk."""

    volumenet: VolumeNet
    prednet: PredNet
    scaler: TargetScaler
    feature_scaler: FeatureScaler | None = None
    target_field: str = "cost"
    delta_ref: float = 1.0
    colormap: str = "viridis"
    drop: tuple[str, ...] = ()

    def __post_init__(self):
        self._feature_cache: dict[str, np.ndarray] = {}
        if self.feature_scaler is None:
            self.feature_scaler = FeatureScaler.identity(self.volumenet.arch.feature_dim)

    @property
    def descriptor(self) -> str:
        return f"{self.volumenet.arch.descriptor}->{self.prednet.arch.descriptor}"

    @property
    def m_lobes(self) -> int:
        return self.prednet.arch.m_lobes

    def feature_for(self, volume: Volume, volume_id: str) -> np.ndarray:
        if volume_id not in self._feature_cache:
            arch = self.volumenet.arch
            r = arch.input_res
            v = volume
            if v.dims != (r, r, r):
                from .volcore import downsample, normalize_to_signed_unit

                v = downsample(normalize_to_signed_unit(v), (r, r, r))
            self._feature_cache[volume_id] = encode(self.volumenet, v, volume_id).values
        return self._feature_cache[volume_id]

    def predict(self, volume: Volume, volume_id: str, pose: CameraPose, tf: TransferFunction, img) -> float:
        feature = self.feature_for(volume, volume_id)
        return predict(
            self.prednet, self.scaler, feature, pose, tf, img,
            drop=self.drop, feature_scaler=self.feature_scaler,
        )

    def save(self, path) -> None:
        header = {
            "kind": "bundle",
            "descriptor": self.descriptor,
            "volumenet": self.volumenet.arch.descriptor,
            "prednet": self.prednet.arch.descriptor,
            "m_lobes": self.m_lobes,
            "scaler": {"mean": self.scaler.mean, "std": self.scaler.std},
            "target_field": self.target_field,
            "delta_ref": self.delta_ref,
            "colormap": self.colormap,
            "drop": list(self.drop),
        }
        params = {f"vol.{k}": v for k, v in self.volumenet.state().items()}
        params.update({f"pred.{k}": v for k, v in self.prednet.state().items()})
        params["scaler.feature_mean"] = self.feature_scaler.mean
        params["scaler.feature_std"] = self.feature_scaler.std
        nnkit.save_checkpoint(path, header, params)

    @classmethod
    def load(cls, path) -> "ModelBundle":
        header, params = nnkit.load_checkpoint(path)
        if header.get("kind") != "bundle":
            raise ValueError(f"{path} is not a model bundle")
        varch = VolumeNetArch.parse(header["volumenet"])
        vnet = VolumeNet(varch)
        vnet.load_state({k[4:]: v for k, v in params.items() if k.startswith("vol.")})
        parch = PredNetArch.parse(header["prednet"], varch.feature_dim, header.get("m_lobes", 3))
        pnet = PredNet(parch)
        pnet.load_state({k[5:]: v for k, v in params.items() if k.startswith("pred.")})
        scaler = TargetScaler(header["scaler"]["mean"], header["scaler"]["std"])
        feature_scaler = None
        if "scaler.feature_mean" in params:
            feature_scaler = FeatureScaler(
                params["scaler.feature_mean"], params["scaler.feature_std"]
            )
        return cls(
            volumenet=vnet,
            prednet=pnet,
            scaler=scaler,
            feature_scaler=feature_scaler,
            target_field=header.get("target_field", "cost"),
            delta_ref=header.get("delta_ref", 1.0),
            colormap=header.get("colormap", "viridis"),
            drop=tuple(header.get("drop", ())),
        )


def parse_bundle_descriptor(s: str) -> tuple[VolumeNetArch, str]:
    """Split a combined descriptor like '32^3F4->4C256' into its two parts."""
    parts = re.split(r"\s*(?:->|→)\s*", s.strip())
    if len(parts) != 2:
        raise ValueError(f"bad bundle descriptor {s!r}, expected '<res>^3F<F>-><n>C<width>'")
    return VolumeNetArch.parse(parts[0]), parts[1]
