"""Command-line entry point: one executable, subcommands for every workflow.

Exit codes: 0 success, 1 runtime failure, 2 usage error. A JSON config file
may supply defaults for any flag (--config); explicit flags win.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .errors import RendertimeError


def _apply_config(ctx: click.Context) -> None:
    """Fill params still at their defaults from the --config JSON document."""
    path = ctx.params.get("config")
    if not path:
        return
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise click.UsageError(f"cannot read config {path}: {e}")
    section = doc.get(ctx.command.name, doc)
    for key, value in section.items():
        param = key.replace("-", "_")
        if param in ctx.params and ctx.get_parameter_source(param) == click.core.ParameterSource.DEFAULT:
            ctx.params[param] = value


def _parse_dims(s: str) -> tuple[int, int, int]:
    parts = [int(x) for x in str(s).lower().replace("x", ",").split(",") if x]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise click.UsageError(f"bad dims {s!r}; use e.g. 64 or 64x64x64")
    return tuple(parts)


def _parse_res_set(s: str) -> tuple[tuple[int, int], ...]:
    out = []
    for token in str(s).split(","):
        token = token.strip().lower()
        if not token:
            continue
        if "x" in token:
            w, h = (int(v) for v in token.split("x"))
        else:
            w = h = int(token)
        out.append((w, h))
    if not out:
        raise click.UsageError(f"bad resolution set {s!r}")
    return tuple(out)


config_option = click.option("--config", type=click.Path(exists=True), default=None,
                             help="JSON file with default flag values.")


@click.group()
def main():
    """Rendering-time prediction toolkit."""


@main.command("gen-volumes")
@click.option("--count", default=8, show_default=True)
@click.option("--dims", default="64", show_default=True, help="Voxel dims, e.g. 64 or 64x64x64.")
@click.option("--recipe", default="mixed", show_default=True,
              type=click.Choice(["blobs", "fault_noise", "shell", "mixed"]))
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@config_option
@click.pass_context
def gen_volumes(ctx, count, dims, recipe, seed, out, config):
    """Generate synthetic volumes plus a manifest."""
    _apply_config(ctx)
    count, dims, recipe, seed, out = (ctx.params[k] for k in ("count", "dims", "recipe", "seed", "out"))
    from . import volcore

    dims = _parse_dims(dims)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    recipes = ["blobs", "fault_noise", "shell"] if recipe == "mixed" else [recipe]
    metas = []
    for i in range(count):
        r = recipes[i % len(recipes)]
        vol, meta = volcore.gen_synthetic(seed + i, dims, r)
        path = out_dir / f"{meta.id}.raw"
        volcore.save_raw(vol, path, vol_id=meta.id)
        meta.path = path.name
        metas.append(meta)
    volcore.save_manifest(metas, out_dir / "manifest.json", seed=seed)
    click.echo(f"wrote {count} volumes + manifest to {out_dir}")


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--samples-per-volume", default=100, show_default=True)
@click.option("--repeats", default=5, show_default=True)
@click.option("--target", default="cost", show_default=True, type=click.Choice(["wall", "cost", "synthetic"]))
@click.option("--resolutions", default="256x256,512x512", show_default=True)
@click.option("--m-lobes", default=3, show_default=True)
@click.option("--scattering", is_flag=True, default=False)
@click.option("--delta", default=1.0, show_default=True)
@click.option("--seed", default=None, type=int, help="Defaults to the manifest seed.")
@click.option("--out", required=True, type=click.Path())
@config_option
@click.pass_context
def collect(ctx, manifest, samples_per_volume, repeats, target, resolutions, m_lobes,
            scattering, delta, seed, out, config):
    """Render volumes under random parameters and write a JSONL dataset."""
    _apply_config(ctx)
    p = ctx.params
    from . import harness, raycaster, volcore

    metas, mseed = volcore.load_manifest(p["manifest"])
    root = Path(p["manifest"]).parent
    for m in metas:
        if m.path and not Path(m.path).is_absolute():
            m.path = str((root / m.path).resolve())
    dm = harness.DatasetManifest.from_volumes(
        metas, seed=p["seed"] if p["seed"] is not None else (mseed or 0),
        samples_per_volume_train=p["samples_per_volume"],
    )
    volumes = harness.load_volumes_for(dm)
    cfg = raycaster.RenderConfig(step_size=p["delta"], scattering=p["scattering"])
    rows = harness.collect(
        dm, volumes, p["out"], target=p["target"], base_cfg=cfg, repeats=p["repeats"],
        resolutions=_parse_res_set(p["resolutions"]), m_lobes=p["m_lobes"],
        samples_per_volume=p["samples_per_volume"],
    )
    dm.save(str(p["out"]) + ".manifest.json")
    click.echo(f"wrote {rows} samples to {p['out']}")


@main.command()
@click.option("--stage", required=True, type=click.Choice(["volumenet", "prednet"]))
@click.option("--arch", default="32^3F4->4C256", show_default=True)
@click.option("--data", required=True, type=click.Path(exists=True),
              help="volumenet: volume manifest JSON; prednet: dataset JSONL.")
@click.option("--volumenet-ckpt", "volumenet_ckpt", type=click.Path(exists=True), default=None,
              help="Required for --stage prednet.")
@click.option("--epochs", default=200, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--patience", default=20, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--target", default="cost", show_default=True, type=click.Choice(["wall", "cost"]))
@click.option("--log", "log_path", type=click.Path(), default=None, help="Training log JSONL.")
@click.option("--out", required=True, type=click.Path())
@config_option
@click.pass_context
def train(ctx, stage, arch, data, volumenet_ckpt, epochs, batch_size, patience, seed,
          target, log_path, out, config):
    """Train a stage; prednet training writes a combined model bundle."""
    _apply_config(ctx)
    p = ctx.params
    from . import harness, prednet, volcore, volumenet
    from .nnkit import OptimConfig

    try:
        varch, pdesc = prednet.parse_bundle_descriptor(p["arch"])
    except ValueError as e:
        raise click.UsageError(str(e))

    if p["stage"] == "volumenet":
        metas, mseed = volcore.load_manifest(p["data"])
        dm = harness.DatasetManifest.from_volumes(metas, seed=mseed or 0)
        volumes = harness.load_volumes_for(dm, root=Path(p["data"]).parent)
        optim = OptimConfig(lr_max=1e-3, lr_min=1e-5, batch_size=p["batch_size"],
                            max_epochs=p["epochs"], patience=p["patience"])
        result = volumenet.train_volumenet(
            [(m.id, volumes[m.id]) for m in dm.volumes], varch, optim,
            seed=p["seed"], split=dm.split, log_path=p["log_path"],
        )
        volumenet.save_volumenet(p["out"], result.net, {"psnr": result.psnr})
        click.echo(f"volumenet saved to {p['out']}; psnr={result.psnr}")
    else:
        if not p["volumenet_ckpt"]:
            raise click.UsageError("--stage prednet requires --volumenet-ckpt")
        vnet = volumenet.load_volumenet(p["volumenet_ckpt"])
        rows = harness.load_dataset(p["data"])
        dm_path = Path(str(p["data"]) + ".manifest.json")
        if dm_path.exists():
            dm = harness.DatasetManifest.load(dm_path)
            split = dm.split
            volumes = harness.load_volumes_for(dm, root=dm_path.parent)
        else:
            raise click.UsageError(f"dataset manifest {dm_path} not found")
        meta_doc = json.loads(Path(str(p["data"]) + ".meta.json").read_text())
        feats = {
            vid: volumenet.encode(vnet, _prepared(vol, vnet.arch), vid).values
            for vid, vol in volumes.items()
        }
        parch = prednet.PredNetArch.parse(pdesc, vnet.arch.feature_dim, meta_doc.get("m_lobes", 3))
        optim = OptimConfig(lr_max=1e-4, lr_min=1e-6, batch_size=p["batch_size"],
                            max_epochs=p["epochs"], patience=p["patience"])
        result = prednet.train_prednet(
            rows, feats, parch, optim, split, target_field=p["target"],
            seed=p["seed"], log_path=p["log_path"],
        )
        bundle = prednet.ModelBundle(
            volumenet=vnet, prednet=result.net, scaler=result.scaler,
            feature_scaler=result.feature_scaler,
            target_field=p["target"], delta_ref=meta_doc.get("delta_ref", 1.0),
        )
        bundle.save(p["out"])
        click.echo(f"bundle saved to {p['out']}; rmse={result.rmse}")


def _prepared(vol, arch):
    from .volcore import downsample, normalize_to_signed_unit

    r = arch.input_res
    v = normalize_to_signed_unit(vol)
    if v.dims != (r, r, r):
        v = downsample(v, (r, r, r))
    return v


@main.command()
@click.option("--bundle", required=True, type=click.Path(exists=True))
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--volume-id", required=True)
@click.option("--pose", required=True, help='JSON, e.g. {"rx":30,"ry":10,"dz":2.0}')
@click.option("--kappa", required=True, help="JSON array of 3m floats.")
@click.option("--img", default="256x256", show_default=True)
@config_option
@click.pass_context
def predict(ctx, bundle, manifest, volume_id, pose, kappa, img, config):
    """Predict the rendering time of one configuration."""
    _apply_config(ctx)
    p = ctx.params
    from . import harness, prednet, tfcam, volcore

    b = prednet.ModelBundle.load(p["bundle"])
    metas, mseed = volcore.load_manifest(p["manifest"])
    dm = harness.DatasetManifest.from_volumes(metas, seed=mseed or 0)
    volumes = harness.load_volumes_for(dm, root=Path(p["manifest"]).parent)
    if p["volume_id"] not in volumes:
        raise click.UsageError(f"unknown volume id {p['volume_id']!r}")
    pose_obj = tfcam.CameraPose.from_json(json.loads(p["pose"]))
    tf = tfcam.TransferFunction.from_kappa(json.loads(p["kappa"]), b.colormap)
    w, h = _parse_res_set(p["img"])[0]
    t = b.predict(volumes[p["volume_id"]], p["volume_id"], pose_obj, tf, (w, h))
    click.echo(json.dumps({"predicted": t, "unit": b.target_field}))


@main.command("eval")
@click.option("--bundle", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--split", default="eval", show_default=True,
              type=click.Choice(["train", "val", "eval", "all"]))
@click.option("--out", type=click.Path(), default=None)
@config_option
@click.pass_context
def eval_cmd(ctx, bundle, data, split, out, config):
    """RMSE / error STD of a bundle on a dataset split."""
    _apply_config(ctx)
    p = ctx.params
    from . import evalkit, harness, prednet

    b = prednet.ModelBundle.load(p["bundle"])
    rows = harness.load_dataset(p["data"])
    dm = harness.DatasetManifest.load(str(p["data"]) + ".manifest.json")
    volumes = harness.load_volumes_for(dm, root=Path(p["data"]).parent)
    if p["split"] != "all":
        rows = [r for r in rows if dm.split.get(r.volume_id) == p["split"]]
    if not rows:
        raise click.UsageError(f"no rows in split {p['split']!r}")
    feats = {vid: b.feature_for(vol, vid) for vid, vol in volumes.items()}
    pred = prednet.predict_rows(b.prednet, b.scaler, rows, feats, drop=b.drop,
                                feature_scaler=b.feature_scaler)
    truth = np.array([r.target(b.target_field) for r in rows])
    report = {
        "split": p["split"],
        "n": len(rows),
        "rmse": evalkit.rmse(pred, truth),
        "std_err": evalkit.std_err(pred, truth),
        "mean_target": float(truth.mean()),
        "error_distribution": evalkit.error_distribution(pred, truth),
    }
    click.echo(json.dumps({k: report[k] for k in ("split", "n", "rmse", "std_err", "mean_target")}))
    if p["out"]:
        evalkit.export_report(p["out"], report)


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--volumenet-ckpt", "volumenet_ckpt", required=True, type=click.Path(exists=True))
@click.option("--arch", default="4C256", show_default=True, help="PredNet descriptor.")
@click.option("--epochs", default=120, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--target", default="cost", show_default=True, type=click.Choice(["wall", "cost"]))
@click.option("--out", type=click.Path(), default=None)
@config_option
@click.pass_context
def ablate(ctx, data, volumenet_ckpt, arch, epochs, seed, target, out, config):
    """Retrain with each input group zeroed; report held-out RMSE per config."""
    _apply_config(ctx)
    p = ctx.params
    from . import evalkit, harness, prednet, volumenet
    from .nnkit import OptimConfig

    vnet = volumenet.load_volumenet(p["volumenet_ckpt"])
    rows = harness.load_dataset(p["data"])
    dm = harness.DatasetManifest.load(str(p["data"]) + ".manifest.json")
    volumes = harness.load_volumes_for(dm, root=Path(p["data"]).parent)
    meta_doc = json.loads(Path(str(p["data"]) + ".meta.json").read_text())
    feats = {
        vid: volumenet.encode(vnet, _prepared(vol, vnet.arch), vid).values
        for vid, vol in volumes.items()
    }
    parch = prednet.PredNetArch.parse(p["arch"], vnet.arch.feature_dim, meta_doc.get("m_lobes", 3))
    optim = OptimConfig(lr_max=1e-4, lr_min=1e-6, max_epochs=p["epochs"], patience=p["epochs"])
    table = evalkit.run_ablation(rows, feats, parch, optim, dm.split,
                                 target_field=p["target"], seed=p["seed"])
    click.echo(json.dumps(table, indent=2))
    if p["out"]:
        evalkit.export_report(p["out"], table)


@main.command()
@click.option("--tasks", required=True, type=click.Path(exists=True), help="Task manifest JSON.")
@click.option("--nodes", default="4,8,16,32", show_default=True)
@click.option("--estimator", default="all", show_default=True,
              type=click.Choice(["gt", "model", "uniform", "all"]))
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
@config_option
@click.pass_context
def schedule(ctx, tasks, nodes, estimator, seed, out, config):
    """LPT scheduling report over node counts."""
    _apply_config(ctx)
    p = ctx.params
    from . import lpt

    ts = lpt.TaskSet.load(p["tasks"])
    node_counts = [int(x) for x in str(p["nodes"]).split(",") if x]
    if p["estimator"] == "all":
        report = lpt.compare_estimators(ts, node_counts, seed=p["seed"])
        click.echo(json.dumps(
            [
                {
                    "n_nodes": e["n_nodes"],
                    **{est: round(e["estimators"][est]["max_load"], 4) for est in lpt.ESTIMATORS},
                }
                for e in report["results"]
            ],
            indent=2,
        ))
    else:
        report = {"results": []}
        for n in node_counts:
            a = lpt.lpt_schedule(ts, p["estimator"], n, seed=p["seed"])
            report["results"].append(
                {"n_nodes": n, "makespan": a.makespan, "loads": a.loads.tolist()}
            )
            click.echo(f"|N|={n} makespan={a.makespan:.1f}")
    if p["out"]:
        Path(p["out"]).write_text(json.dumps(report, indent=2))


@main.command("g-build")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--volume-ids", default=None, help="Comma-separated subset; default all.")
@click.option("--kappa", default='[[0.6,0.05,0.9]]', show_default=True,
              help="JSON lobe list for the probe transfer function.")
@click.option("--points", default=9, show_default=True)
@click.option("--img", default="256x256", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@config_option
@click.pass_context
def g_build(ctx, manifest, volume_ids, kappa, points, img, seed, out, config):
    """Measure and store the step-size/time curve G."""
    _apply_config(ctx)
    p = ctx.params
    from . import harness, raycaster, stepctl, tfcam, volcore

    metas, mseed = volcore.load_manifest(p["manifest"])
    dm = harness.DatasetManifest.from_volumes(metas, seed=mseed or 0)
    volumes = harness.load_volumes_for(dm, root=Path(p["manifest"]).parent)
    if p["volume_ids"]:
        ids = [s.strip() for s in p["volume_ids"].split(",")]
    else:
        ids = [m.id for m in dm.volumes]
    lobes = json.loads(p["kappa"])
    tf = tfcam.TransferFunction(tuple(tuple(l) for l in lobes))
    w, h = _parse_res_set(p["img"])[0]
    cfg = raycaster.RenderConfig(img=(w, h))
    sweep = np.geomspace(raycaster.DELTA_MIN, raycaster.DELTA_MAX, p["points"])
    sweep = sorted(set(float(x) for x in sweep) | {raycaster.DELTA_REF})
    g = stepctl.build_g([volumes[i] for i in ids], cfg, tf, deltas=sweep, seed=p["seed"])
    g.save(p["out"])
    click.echo(f"G table with {len(g.deltas)} points saved to {p['out']}")


@main.command("control-bench")
@click.option("--bundle", required=True, type=click.Path(exists=True))
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--volume-id", required=True)
@click.option("--gtable", required=True, type=click.Path(exists=True))
@click.option("--kappa", default='[[0.6,0.05,0.9]]', show_default=True)
@click.option("--img", default="256x256", show_default=True)
@click.option("--target", default=None, type=float,
              help="Target cost/time; default = median cost along path at delta_ref.")
@click.option("--frames", default=200, show_default=True)
@click.option("--fixed", is_flag=True, default=False, help="Disable the controller (fixed delta_ref).")
@click.option("--svg", type=click.Path(), default=None, help="Optional SVG chart of the run.")
@click.option("--out", required=True, type=click.Path())
@config_option
@click.pass_context
def control_bench(ctx, bundle, manifest, volume_id, gtable, kappa, img, target, frames,
                  fixed, svg, out, config):
    """Closed-loop step-size control along a scripted orbit; JSONL log."""
    _apply_config(ctx)
    p = ctx.params
    from . import harness, prednet, raycaster, stepctl, tfcam, volcore

    b = prednet.ModelBundle.load(p["bundle"])
    metas, mseed = volcore.load_manifest(p["manifest"])
    dm = harness.DatasetManifest.from_volumes(metas, seed=mseed or 0)
    volumes = harness.load_volumes_for(dm, root=Path(p["manifest"]).parent)
    if p["volume_id"] not in volumes:
        raise click.UsageError(f"unknown volume id {p['volume_id']!r}")
    vol = volumes[p["volume_id"]]
    tf = tfcam.TransferFunction(tuple(tuple(l) for l in json.loads(p["kappa"])))
    w, h = _parse_res_set(p["img"])[0]
    g = stepctl.GTable.load(p["gtable"])
    path = stepctl.PosePath(
        [(0.0, 0.0, -30.0, 2.5), (5.0, 360.0, 30.0, 1.5), (10.0, 720.0, -20.0, 3.0)]
    )

    def predict_fn(pose):
        return b.predict(vol, p["volume_id"], pose, tf, (w, h))

    def render_fn(pose, delta):
        cfg = raycaster.RenderConfig(step_size=delta, img=(w, h))
        _, stats = raycaster.render(vol, tf, pose, cfg)
        t = stats.samples_total if b.target_field == "cost" else stats.wall_ms
        return float(t), stats.wall_ms

    t_target = p["target"]
    if t_target is None:
        probes = [predict_fn(path.pose_at(path.duration * i / 7)) for i in range(8)]
        t_target = float(np.median(probes))
    cfg = stepctl.ControllerConfig(
        t_target=t_target, delta_ref=b.delta_ref, n_frames=p["frames"], enabled=not p["fixed"]
    )
    rows = stepctl.control_loop(predict_fn, g, cfg, path, render_fn, log_path=p["out"])
    err = [abs(r["t_actual"] / t_target - 1.0) for r in rows]
    click.echo(
        f"target={t_target:.0f} frames={len(rows)} within20pct="
        f"{sum(e <= 0.2 for e in err) / len(err):.1%}"
    )
    if p["svg"]:
        from . import evalkit

        evalkit.export_svg_lines(
            p["svg"],
            {
                "actual": [r["t_actual"] for r in rows],
                "predicted": [r["t_pred"] for r in rows],
            },
            hline=t_target,
        )


@main.command()
@click.option("--bundle", required=True, type=click.Path(exists=True))
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--gtable", type=click.Path(exists=True), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--ui", "ui_dir", type=click.Path(exists=True), default=None,
              help="Static UI directory to serve at /.")
@config_option
@click.pass_context
def serve(ctx, bundle, manifest, gtable, host, port, ui_dir, config):
    """Run the HTTP service backing the interactive UI."""
    _apply_config(ctx)
    p = ctx.params
    import uvicorn

    from .service import build_state, create_app

    state = build_state(p["bundle"], p["manifest"], p["gtable"])
    app = create_app(state, ui_dir=p["ui_dir"])
    uvicorn.run(app, host=p["host"], port=p["port"], log_level="warning")


def entry() -> int:
    try:
        main(standalone_mode=False)
        return 0
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.UsageError as e:
        e.show()
        return 2
    except click.ClickException as e:
        e.show()
        return 1
    except click.exceptions.Abort:
        return 130
    except RendertimeError as e:
        click.echo(f"error: {e}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(entry())
