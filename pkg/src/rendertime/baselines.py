"""Comparison predictors: sampled-mean, online three-frame average, low-res proxy."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyTasks, UnfittedModel


def bruder_mean(gt_times, fraction: float = 0.15, seed: int = 0) -> np.ndarray:
    """Constant prediction: render a random 15% of the tasks and predict their
    arithmetic mean for every task in the set."""
    gt = np.asarray(gt_times, dtype=np.float64)
    if gt.size == 0:
        raise EmptyTasks("no tasks to sample")
    k = math.ceil(fraction * gt.size)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(gt.size, size=min(k, gt.size), replace=False)
    return np.full(gt.size, float(gt[chosen].mean()))


def online_learn(history, window: int = 3) -> float:
    """Next-frame prediction: mean of the last `window` frame times."""
    if len(history) < 1:
        raise EmptyTasks("need at least one past frame")
    recent = list(history)[-window:]
    return float(np.mean(recent))


@dataclass
class LowResProxy:
    """Linear map from low-resolution render time to full-resolution time."""

    a: float | None = None
    b: float | None = None

    def fit(self, low_times, high_times) -> "LowResProxy":
        low = np.asarray(low_times, dtype=np.float64)
        high = np.asarray(high_times, dtype=np.float64)
        if low.size < 2:
            raise EmptyTasks("need at least 2 paired timings to fit")
        self.a, self.b = (float(c) for c in np.polyfit(low, high, 1))
        return self

    def predict(self, low_time) -> float:
        if self.a is None:
            raise UnfittedModel("fit the proxy before predicting")
        return self.a * float(low_time) + self.b


def lowres_proxy_predict(
    v, pose, tf, cfg, proxy: LowResProxy, low_res: int = 64, use_cost: bool = True
) -> float:
    """Render the volume downsampled to low_res^3 and map its measured time.

    Consumes an actual low-resolution render, so it is far cheaper than a
    full-resolution render but not free. With use_cost the deterministic
    sample count feeds the linear map instead of wall time; the proxy must
    have been fitted in the same unit.
    """
    from . import raycaster
    from .volcore import downsample

    if proxy.a is None:
        raise UnfittedModel("fit the proxy before predicting")
    w, h, d = v.dims
    lv = downsample(v, (min(low_res, w), min(low_res, h), min(low_res, d)))
    sample = raycaster.measure(lv, tf, pose, cfg, repeats=1)
    t_low = float(sample.cost) if use_cost else sample.wall_ms
    return proxy.predict(t_low)
