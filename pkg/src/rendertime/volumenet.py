"""Stage-1 volume autoencoder.

The encoder compresses a cube volume into a short feature vector through a
stack of stride-2 conv blocks (conv + batchnorm + SELU) and a final linear
projection; the decoder mirrors it with transposed convolutions and exists
only to train the encoder. Architectures are named by descriptor strings such
as "32^3F4" (input resolution, feature length).
"""
from __future__ import annotations

import json
import math
import re
import time
from dataclasses import dataclass, field

import numpy as np

from . import nnkit
from .errors import EmptyDataset, WrongDim, WrongResolution
from .nnkit import (
    Adam,
    BatchNorm3d,
    Conv3d,
    Linear,
    OptimConfig,
    SELU,
    Sequential,
    Tanh,
    TConv3d,
    clip_gradients,
    cosine_lr,
    early_stop,
    mse,
    mse_grad,
)
from .volcore import Volume, downsample, normalize_to_signed_unit

_DESCRIPTOR_RE = re.compile(r"^(\d+)(?:\^3|³)F(\d+)$")

CHANNEL_CAP = 256


@dataclass(frozen=True)
class VolumeNetArch:
    input_res: int = 32
    feature_dim: int = 4

    def __post_init__(self):
        if self.input_res not in (32, 64, 128):
            raise ValueError(f"input_res must be 32, 64 or 128, got {self.input_res}")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")

    @property
    def n_blocks(self) -> int:
        # halve until the spatial extent is 2
        return int(math.log2(self.input_res)) - 1

    @property
    def channels(self) -> tuple[int, ...]:
        ramp = []
        c = 16
        for _ in range(self.n_blocks):
            ramp.append(min(c, CHANNEL_CAP))
            c *= 2
        return tuple(ramp)

    @property
    def bottleneck(self) -> int:
        return self.channels[-1] * 8  # 2^3 spatial positions remain

    @property
    def descriptor(self) -> str:
        return f"{self.input_res}^3F{self.feature_dim}"

    @classmethod
    def parse(cls, s: str) -> "VolumeNetArch":
        m = _DESCRIPTOR_RE.match(s.strip())
        if not m:
            raise ValueError(f"bad VolumeNet descriptor {s!r}, expected e.g. '32^3F4'")
        return cls(int(m.group(1)), int(m.group(2)))


@dataclass
class FeatureVector:
    values: np.ndarray
    volume_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature vector contains non-finite values")


class VolumeNet:
    """Encoder/decoder pair; see VolumeNetArch for the layer plan."""

    def __init__(self, arch: VolumeNetArch, seed: int = 0):
        self.arch = arch
        rng = np.random.default_rng(seed)
        chans = arch.channels
        enc = []
        prev = 1
        for i, c in enumerate(chans):
            enc += [
                Conv3d(prev, c, 4, stride=2, pad=1, rng=rng, name=f"enc{i}.conv"),
                BatchNorm3d(c, name=f"enc{i}.bn"),
                SELU(),
            ]
            prev = c
        self.encoder = Sequential(enc)
        self.fc_enc = Linear(arch.bottleneck, arch.feature_dim, rng=rng, name="fc_enc")
        self.fc_dec = Linear(arch.feature_dim, arch.bottleneck, rng=rng, name="fc_dec")
        dec = []
        rev = list(chans[::-1])
        for i in range(len(rev) - 1):
            dec += [
                TConv3d(rev[i], rev[i + 1], 4, stride=2, pad=1, rng=rng, name=f"dec{i}.tconv"),
                BatchNorm3d(rev[i + 1], name=f"dec{i}.bn"),
                SELU(),
            ]
        dec += [
            TConv3d(rev[-1], 1, 4, stride=2, pad=1, rng=rng, name=f"dec{len(rev)-1}.tconv"),
            Tanh(),
        ]
        self.decoder = Sequential(dec)

    # -- forward/backward ---------------------------------------------------

    def encode_batch(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        h = self.encoder.forward(x, train)
        h = h.reshape(h.shape[0], -1)
        return self.fc_enc.forward(h, train)

    def decode_batch(self, z: np.ndarray, train: bool = False) -> np.ndarray:
        c_last = self.arch.channels[-1]
        h = self.fc_dec.forward(z, train)
        h = h.reshape(h.shape[0], c_last, 2, 2, 2)
        return self.decoder.forward(h, train)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._enc_shape = None
        h = self.encoder.forward(x, train)
        self._enc_shape = h.shape
        z = self.fc_enc.forward(h.reshape(h.shape[0], -1), train)
        return self.decode_batch(z, train)

    def backward(self, grad: np.ndarray) -> None:
        g = self.decoder.backward(grad)
        g = self.fc_dec.backward(g.reshape(g.shape[0], -1))
        g = self.fc_enc.backward(g)
        self.encoder.backward(g.reshape(self._enc_shape))

    def params(self):
        return (
            self.encoder.params()
            + self.fc_enc.params()
            + self.fc_dec.params()
            + self.decoder.params()
        )

    def encoder_params(self):
        return self.encoder.params() + self.fc_enc.params()

    # -- checkpoint ----------------------------------------------------------

    def state(self) -> dict[str, np.ndarray]:
        out = {p.name: p.data for p in self.params()}
        for layer in self.encoder.layers + self.decoder.layers:
            if isinstance(layer, BatchNorm3d):
                prefix = layer.gamma.name.rsplit(".", 1)[0]
                out[f"{prefix}.running_mean"] = layer.running_mean
                out[f"{prefix}.running_var"] = layer.running_var
        return out

    def load_state(self, params: dict[str, np.ndarray]) -> None:
        mine = {p.name: p for p in self.params()}
        for name, param in mine.items():
            if name not in params:
                raise KeyError(f"checkpoint missing parameter {name}")
            param.data = params[name].astype(param.data.dtype).reshape(param.data.shape).copy()
        for layer in self.encoder.layers + self.decoder.layers:
            if isinstance(layer, BatchNorm3d):
                prefix = layer.gamma.name.rsplit(".", 1)[0]
                layer.running_mean = params[f"{prefix}.running_mean"].copy()
                layer.running_var = params[f"{prefix}.running_var"].copy()


def prepare_input(v: Volume, arch: VolumeNetArch) -> np.ndarray:
    """Normalize to [-1, 1] and downsample to the architecture resolution."""
    sv = v if v.value_range == "signed" else normalize_to_signed_unit(v)
    r = arch.input_res
    if sv.dims != (r, r, r):
        sv = downsample(sv, (r, r, r))
    return sv.data.astype(np.float32)[None, None]


def encode(net: VolumeNet, v: Volume, volume_id: str = "") -> FeatureVector:
    """Deterministic feature vector for a prepared volume (eval-mode stats)."""
    r = net.arch.input_res
    if v.dims != (r, r, r):
        raise WrongResolution(f"expected {r}^3 input, got dims {v.dims}")
    sv = v if v.value_range == "signed" else normalize_to_signed_unit(v)
    x = sv.data.astype(np.float32)[None, None]
    z = net.encode_batch(x, train=False)
    return FeatureVector(z[0], volume_id)


def decode(net: VolumeNet, x: FeatureVector) -> Volume:
    if x.values.shape != (net.arch.feature_dim,):
        raise WrongDim(
            f"feature length {x.values.shape} does not match F={net.arch.feature_dim}"
        )
    out = net.decode_batch(x.values[None].astype(np.float32), train=False)
    return Volume(np.clip(out[0, 0], -1.0, 1.0).astype(np.float32), "signed")


def psnr_db(a: np.ndarray, b: np.ndarray, peak: float = 2.0) -> float:
    err = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if err == 0.0:
        return float("inf")
    return 10.0 * math.log10(peak * peak / err)


def split_ids(ids: list[str], seed: int) -> dict[str, str]:
    """80/10/10 volume-level split, deterministic in (sorted ids, seed)."""
    ids = sorted(ids)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    n = len(ids)
    n_eval = math.floor(0.1 * n)
    n_val = math.floor(0.1 * n)
    out = {}
    for rank, idx in enumerate(perm):
        if rank < n_eval:
            out[ids[idx]] = "eval"
        elif rank < n_eval + n_val:
            out[ids[idx]] = "val"
        else:
            out[ids[idx]] = "train"
    return out


@dataclass
class VolumeNetTrainResult:
    net: VolumeNet
    history: list[dict]
    psnr: dict[str, float]
    split: dict[str, str]


def train_volumenet(
    volumes: list[tuple[str, Volume]],
    arch: VolumeNetArch,
    optim: OptimConfig,
    seed: int = 0,
    split: dict[str, str] | None = None,
    log_path=None,
    stop_train_loss: float | None = None,
) -> VolumeNetTrainResult:
    """Minimize the mean squared voxel error of reconstructions.

    Adam with cosine-annealed learning rate, global-norm clipping, and early
    stopping on the validation loss; the best-validation weights are kept.
    """
    if len(volumes) < 2:
        raise EmptyDataset("need at least 2 volumes to train")
    ids = [vid for vid, _ in volumes]
    if split is None:
        split = split_ids(ids, seed)
    x_all = np.concatenate([prepare_input(v, arch) for _, v in volumes], axis=0)
    idx = {s: [i for i, vid in enumerate(ids) if split.get(vid) == s] for s in ("train", "val", "eval")}
    if not idx["train"]:
        raise EmptyDataset("split produced no training volumes")
    x_train = x_all[idx["train"]]
    x_val = x_all[idx["val"]] if idx["val"] else x_train

    net = VolumeNet(arch, seed)
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
            bs = max(2, min(optim.batch_size, len(x_train)))
            losses = []
            weights = []
            for start in range(0, len(order), bs):
                batch = x_train[order[start : start + bs]]
                if batch.shape[0] < 2:
                    continue  # batchnorm needs >= 2; remainder folds into next epoch's shuffle
                opt.zero_grad()
                recon = net.forward(batch, train=True)
                losses.append(mse(recon, batch))
                weights.append(batch.shape[0])
                net.backward(mse_grad(recon, batch))
                clip_gradients(net.params(), optim.clip_norm)
                opt.step(lr)
            train_loss = float(np.average(losses, weights=weights))
            val_recon = net.forward(x_val, train=False)
            val_loss = mse(val_recon, x_val)
            history.append(
                {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "lr": lr}
            )
            if log_f:
                log_f.write(json.dumps(history[-1]) + "\n")
            if val_loss < best_val:
                best_val = val_loss
                best_state = {k: v.copy() for k, v in net.state().items()}
            if stop_train_loss is not None and train_loss <= stop_train_loss:
                break
            if early_stop([h["val_loss"] for h in history], optim.patience):
                break
    finally:
        if log_f:
            log_f.close()
    if best_state is not None:
        net.load_state(best_state)

    psnr = {}
    for name in ("train", "val", "eval"):
        if idx[name]:
            xs = x_all[idx[name]]
            recon = net.forward(xs, train=False)
            psnr[name] = float(np.mean([psnr_db(xs[i], recon[i]) for i in range(len(xs))]))
    return VolumeNetTrainResult(net, history, psnr, split)


def save_volumenet(path, net: VolumeNet, extra_header: dict | None = None) -> None:
    header = {"kind": "volumenet", "descriptor": net.arch.descriptor}
    header.update(extra_header or {})
    nnkit.save_checkpoint(path, header, net.state())


def load_volumenet(path) -> VolumeNet:
    header, params = nnkit.load_checkpoint(path)
    if header.get("kind") != "volumenet":
        raise ValueError(f"{path} is not a volumenet checkpoint")
    net = VolumeNet(VolumeNetArch.parse(header["descriptor"]))
    net.load_state(params)
    return net
