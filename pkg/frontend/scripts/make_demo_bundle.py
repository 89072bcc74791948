#!/usr/bin/env python3
"""Build a small untrained demo bundle for UI / e2e runs.

Usage: make_demo_bundle.py OUT_DIR

Writes OUT_DIR/volumes/{*.raw,manifest.json}, OUT_DIR/model.rtb (randomly
initialized networks: serving works; predictions are meaningless), and
OUT_DIR/g.json measured from a quick step sweep.
"""
import sys
from pathlib import Path

import numpy as np

from rendertime import raycaster, stepctl, tfcam, volcore, volumenet
from rendertime.prednet import ModelBundle, PredNet, PredNetArch, TargetScaler


def main() -> int:
    out = Path(sys.argv[1])
    vol_dir = out / "volumes"
    vol_dir.mkdir(parents=True, exist_ok=True)

    metas = []
    vols = {}
    for i, recipe in enumerate(["shell", "blobs"]):
        vol, meta = volcore.gen_synthetic(60 + i, (64, 64, 64), recipe)
        path = vol_dir / f"{meta.id}.raw"
        volcore.save_raw(vol, path, vol_id=meta.id)
        meta.path = path.name
        metas.append(meta)
        vols[meta.id] = vol
    volcore.save_manifest(metas, vol_dir / "manifest.json", seed=60)

    varch = volumenet.VolumeNetArch(32, 4)
    bundle = ModelBundle(
        volumenet=volumenet.VolumeNet(varch, seed=0),
        prednet=PredNet(PredNetArch(feature_dim=4), seed=1),
        scaler=TargetScaler(20.0, 5.0),
        target_field="cost",
    )
    bundle.save(out / "model.rtb")

    tf = tfcam.TransferFunction(((0.6, 0.05, 0.9),))
    cfg = raycaster.RenderConfig(img=(128, 128))
    g = stepctl.build_g([vols[metas[0].id]], cfg, tf, seed=0)
    g.save(out / "g.json")
    print(f"demo bundle in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
