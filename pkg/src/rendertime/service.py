"""HTTP service backing the interactive UI.

Stateless render/predict endpoints over a model bundle and a volume set
loaded at startup. Feature vectors are computed once per volume at load time;
requests only touch the compact features, the regressor, and the renderer.
"""
from __future__ import annotations

import base64
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from . import raycaster, stepctl
from .harness import DatasetManifest
from .prednet import ModelBundle
from .stepctl import ControllerConfig, GTable
from .tfcam import CameraPose, TransferFunction
from .volcore import Volume, VolumeMeta, load_manifest


@dataclass
class ServeState:
    volumes: dict[str, Volume]
    metas: list[VolumeMeta]
    bundle: ModelBundle | None = None
    gtable: GTable | None = None

    def __post_init__(self):
        if self.bundle is not None:
            for vid, vol in self.volumes.items():
                self.bundle.feature_for(vol, vid)  # warm the feature cache


def build_state(bundle_path, manifest_path, gtable_path=None) -> ServeState:
    from .harness import load_volumes_for

    metas, mseed = load_manifest(manifest_path)
    dm = DatasetManifest.from_volumes(metas, seed=mseed or 0)
    volumes = load_volumes_for(dm, root=Path(manifest_path).parent)
    bundle = ModelBundle.load(bundle_path) if bundle_path else None
    gtable = GTable.load(gtable_path) if gtable_path else None
    return ServeState(volumes=volumes, metas=metas, bundle=bundle, gtable=gtable)


class PoseBody(BaseModel):
    rx: float = Field(ge=0.0, lt=360.0)
    ry: float = Field(ge=-89.0, le=89.0)
    dz: float = Field(ge=1.2, le=4.0)


class ControllerBody(BaseModel):
    enabled: bool = False
    target_ms: float = Field(default=25.0, gt=0.0)


class RenderBody(BaseModel):
    volume_id: str
    pose: PoseBody
    kappa: list[float]
    img: tuple[int, int] = (256, 256)
    delta: float | None = None
    controller: ControllerBody | None = None


class PredictBody(BaseModel):
    volume_id: str
    pose: PoseBody
    kappa: list[float]
    img: tuple[int, int] = (256, 256)


class OpacityBody(BaseModel):
    kappa: list[float]
    samples: int = Field(default=64, ge=2, le=1024)


def _unprocessable(field_name: str, msg: str):
    return HTTPException(
        status_code=422, detail=[{"loc": ["body", field_name], "msg": msg, "type": "value_error"}]
    )


def create_app(state: ServeState, ui_dir=None) -> FastAPI:
    app = FastAPI(title="rendertime service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    def get_volume(volume_id: str) -> Volume:
        if volume_id not in state.volumes:
            raise HTTPException(status_code=404, detail=f"unknown volume {volume_id!r}")
        return state.volumes[volume_id]

    def parse_tf(kappa: list[float]) -> TransferFunction:
        m = state.bundle.m_lobes if state.bundle else 3
        if len(kappa) != 3 * m:
            raise _unprocessable("kappa", f"kappa must have length {3 * m}, got {len(kappa)}")
        try:
            return TransferFunction.from_kappa(
                kappa, state.bundle.colormap if state.bundle else "viridis"
            )
        except ValueError as e:
            raise _unprocessable("kappa", str(e))

    def require_bundle() -> ModelBundle:
        if state.bundle is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return state.bundle

    @app.get("/api/health")
    def health():
        return {"status": "ok"}

    @app.get("/api/volumes")
    def volumes():
        return [
            {
                "id": m.id,
                "dims": list(state.volumes[m.id].dims),
                "source": m.source,
                "sparsity": m.sparsity,
            }
            for m in state.metas
        ]

    @app.get("/api/model")
    def model():
        bundle = require_bundle()
        out = {
            "descriptor": bundle.descriptor,
            "delta_ref": bundle.delta_ref,
            "target_field": bundle.target_field,
            "m_lobes": bundle.m_lobes,
            "g": None,
        }
        if state.gtable is not None:
            out["g"] = state.gtable.to_json()
        return out

    @app.post("/api/predict")
    def predict(body: PredictBody):
        bundle = require_bundle()
        vol = get_volume(body.volume_id)
        tf = parse_tf(body.kappa)
        pose = CameraPose(body.pose.rx, body.pose.ry, body.pose.dz)
        t = bundle.predict(vol, body.volume_id, pose, tf, tuple(body.img))
        return {"predicted_ms": t}

    @app.post("/api/render")
    def render(body: RenderBody):
        vol = get_volume(body.volume_id)
        tf = parse_tf(body.kappa)
        pose = CameraPose(body.pose.rx, body.pose.ry, body.pose.dz)
        delta_ref = state.bundle.delta_ref if state.bundle else raycaster.DELTA_REF
        predicted = None
        if state.bundle is not None:
            predicted = state.bundle.predict(vol, body.volume_id, pose, tf, tuple(body.img))
        if body.controller and body.controller.enabled:
            bundle = require_bundle()
            if state.gtable is None:
                raise HTTPException(status_code=503, detail="G table not loaded")
            cfg = ControllerConfig(t_target=body.controller.target_ms, delta_ref=delta_ref)
            delta = stepctl.steer_delta(state.gtable, cfg, predicted)
        else:
            delta = body.delta if body.delta is not None else delta_ref
            if not raycaster.DELTA_MIN <= delta <= raycaster.DELTA_MAX:
                raise _unprocessable(
                    "delta",
                    f"delta must lie in [{raycaster.DELTA_MIN}, {raycaster.DELTA_MAX}]",
                )
        cfg_r = raycaster.RenderConfig(step_size=delta, img=tuple(body.img))
        frame, stats = raycaster.render(vol, tf, pose, cfg_r)
        return {
            "frame_png_b64": base64.b64encode(frame.to_png_bytes()).decode("ascii"),
            "stats": stats.to_json(),
            "predicted_ms": predicted,
            "delta_used": delta,
        }

    @app.post("/api/opacity")
    def opacity_curve(body: OpacityBody):
        from .tfcam import opacity

        tf = parse_tf(body.kappa)
        s = np.linspace(0.0, 1.0, body.samples)
        return {"s": s.tolist(), "opacity": np.asarray(opacity(tf, s)).tolist()}

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
