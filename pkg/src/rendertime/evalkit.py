"""Metrics, model comparison by mean relative deviation, ablations, error export."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import IncompleteTable, LengthMismatch


def _paired(pred, truth):
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape or p.size < 1:
        raise LengthMismatch(f"pred {p.shape} vs truth {t.shape}")
    return p, t


def rmse(pred, truth) -> float:
    p, t = _paired(pred, truth)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def std_err(pred, truth) -> float:
    """Population standard deviation of the prediction errors."""
    p, t = _paired(pred, truth)
    return float(np.std(p - t))


def psnr(a, b, peak: float = 2.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical inputs."""
    av = np.asarray(a.data if hasattr(a, "data") else a, dtype=np.float64)
    bv = np.asarray(b.data if hasattr(b, "data") else b, dtype=np.float64)
    if av.shape != bv.shape:
        raise LengthMismatch(f"shapes differ: {av.shape} vs {bv.shape}")
    err = float(np.mean((av - bv) ** 2))
    if err == 0.0:
        return float("inf")
    return 10.0 * math.log10(peak * peak / err)


def mrd(table, model_names=None) -> list[dict]:
    """Rank models by mean relative deviation from the per-scenario best RMSE.

    table: (n_models, n_scenarios) RMSE values. Returns dicts sorted ascending
    by MRD; ties keep the input model order.
    """
    arr = np.asarray(table, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0 or not np.all(np.isfinite(arr)):
        raise IncompleteTable(f"need a complete finite 2D table, got shape {arr.shape}")
    names = model_names or [f"model{i}" for i in range(arr.shape[0])]
    if len(names) != arr.shape[0]:
        raise IncompleteTable("model_names length does not match table rows")
    best = arr.min(axis=0)
    rd = (arr - best) / best
    mrd_vals = rd.mean(axis=1)
    order = sorted(range(len(names)), key=lambda i: (mrd_vals[i], i))
    return [
        {"model": names[i], "mrd": float(mrd_vals[i]), "rd": rd[i].tolist()}
        for i in order
    ]


def error_distribution(pred, truth, bins: int = 32) -> dict:
    """Histogram of squared prediction errors over log-spaced bins."""
    p, t = _paired(pred, truth)
    sq = (p - t) ** 2
    n = sq.size
    positive = sq[sq > 0]
    if positive.size == 0:
        return {"edges": [0.0, 0.0], "counts": [int(n)], "zeros": int(n), "n": int(n)}
    lo = float(positive.min())
    hi = float(positive.max())
    if lo == hi:
        edges = np.array([lo * 0.999, hi * 1.001])
    else:
        edges = np.logspace(math.log10(lo), math.log10(hi), bins + 1)
        edges[0] *= 0.999
        edges[-1] *= 1.001
    counts, edges = np.histogram(positive, bins=edges)
    return {
        "edges": edges.tolist(),
        "counts": counts.tolist(),
        "zeros": int(n - positive.size),
        "n": int(n),
    }


def run_ablation(
    rows,
    features,
    arch,
    optim,
    split,
    target_field: str = "cost",
    seed: int = 0,
    drop_sets=((), ("feature",), ("pose",), ("tf",), ("resolution",)),
) -> dict[str, float]:
    """Held-out RMSE per drop configuration; each is retrained with the named
    input groups zeroed. Key "" is the unablated model."""
    from .prednet import train_prednet

    out = {}
    for drop in drop_sets:
        result = train_prednet(
            rows, features, arch, optim, split,
            target_field=target_field, seed=seed, drop=tuple(drop),
        )
        key = "+".join(drop)
        out[key] = result.rmse.get("eval", result.rmse.get("train"))
    return out


def export_report(path, report: dict) -> None:
    with open(path, "w") as f:
        json.dump(report, f, indent=2)


def export_csv(path, rows: list[dict], columns: list[str]) -> None:
    import csv

    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k) for k in columns})


def export_svg_lines(path, series: dict[str, list[float]], width: int = 640,
                     height: int = 240, hline: float | None = None) -> None:
    """Tiny dependency-free SVG line chart for exported report data."""
    colors = ["#2b7bba", "#e07b39", "#3fa45b", "#9b59b6", "#c0392b"]
    all_vals = [v for vs in series.values() for v in vs if math.isfinite(v)]
    if hline is not None:
        all_vals.append(hline)
    if not all_vals:
        raise ValueError("nothing to plot")
    lo, hi = min(all_vals), max(all_vals)
    pad = (hi - lo) * 0.08 or 1.0
    lo, hi = lo - pad, hi + pad
    n = max(len(vs) for vs in series.values())

    def sx(i):
        return 40 + i * (width - 50) / max(n - 1, 1)

    def sy(v):
        return height - 20 - (v - lo) * (height - 40) / (hi - lo)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="10">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="4" y="12" fill="#555">{hi - pad:.3g}</text>',
        f'<text x="4" y="{height - 8}" fill="#555">{lo + pad:.3g}</text>',
    ]
    if hline is not None:
        parts.append(
            f'<line x1="40" y1="{sy(hline):.1f}" x2="{width - 10}" y2="{sy(hline):.1f}" '
            f'stroke="#999" stroke-dasharray="4,4"/>'
        )
    for idx, (name, vs) in enumerate(series.items()):
        color = colors[idx % len(colors)]
        pts = " ".join(f"{sx(i):.1f},{sy(v):.1f}" for i, v in enumerate(vs) if math.isfinite(v))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{44 + idx * 110}" y="24" fill="{color}">{name}</text>')
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts))
