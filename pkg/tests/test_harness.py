import json

import numpy as np
import pytest

from rendertime import harness, raycaster, volcore
from rendertime.errors import EmptyResult
from rendertime.harness import DatasetManifest, TimingSample, collect, load_dataset, subsample
from rendertime.tfcam import CameraPose


@pytest.fixture(scope="module")
def two_volume_setup():
    metas, volumes = [], {}
    for i, recipe in enumerate(["blobs", "shell"]):
        vol, meta = volcore.gen_synthetic(50 + i, (32, 32, 32), recipe)
        metas.append(meta)
        volumes[meta.id] = vol
    manifest = DatasetManifest.from_volumes(metas, seed=7)
    return manifest, volumes


class TestCollect:
    def test_row_count_and_schema(self, two_volume_setup, tmp_path):
        manifest, volumes = two_volume_setup
        out = tmp_path / "data.jsonl"
        n = collect(
            manifest, volumes, out, target="cost",
            base_cfg=raycaster.RenderConfig(img=(32, 32)),
            repeats=1, resolutions=((32, 32), (64, 64)), samples_per_volume=10,
        )
        assert n == 20
        rows = load_dataset(out)
        assert len(rows) == 20
        for row in rows:
            assert row.cost > 0 and row.wall_ms > 0
            assert row.delta == 1.0
            assert len(row.kappa) == 9
        meta = json.loads((tmp_path / "data.jsonl.meta.json").read_text())
        assert meta["target"] == "cost"

    def test_deterministic_cost_fields(self, two_volume_setup, tmp_path):
        manifest, volumes = two_volume_setup
        outs = []
        for name in ("a.jsonl", "b.jsonl"):
            out = tmp_path / name
            collect(
                manifest, volumes, out, target="cost",
                base_cfg=raycaster.RenderConfig(img=(32, 32)),
                repeats=1, resolutions=((32, 32),), samples_per_volume=5,
            )
            rows = load_dataset(out)
            outs.append([(r.volume_id, r.pose, tuple(r.kappa), r.img, r.cost) for r in rows])
        assert outs[0] == outs[1]

    def test_both_resolutions_occur(self, two_volume_setup, tmp_path):
        manifest, volumes = two_volume_setup
        out = tmp_path / "res.jsonl"
        collect(
            manifest, volumes, out, target="cost",
            base_cfg=raycaster.RenderConfig(img=(32, 32)),
            repeats=1, resolutions=((32, 32), (64, 64)), samples_per_volume=20,
        )
        seen = {r.img for r in load_dataset(out)}
        assert seen == {(32, 32), (64, 64)}

    def test_rows_reproduce_cost(self, two_volume_setup, tmp_path):
        from rendertime.tfcam import TransferFunction

        manifest, volumes = two_volume_setup
        out = tmp_path / "repro.jsonl"
        collect(
            manifest, volumes, out, target="cost",
            base_cfg=raycaster.RenderConfig(img=(32, 32)),
            repeats=1, resolutions=((32, 32),), samples_per_volume=3,
        )
        for row in load_dataset(out):
            cfg = raycaster.RenderConfig(step_size=row.delta, img=row.img)
            tf = TransferFunction.from_kappa(row.kappa)
            _, stats = raycaster.render(volumes[row.volume_id], tf, row.pose, cfg)
            assert stats.samples_total == row.cost


def _fake_rows(n_per_volume, volume_ids):
    rows = []
    for vid in volume_ids:
        for i in range(n_per_volume):
            rows.append(
                TimingSample(
                    volume_id=vid,
                    pose=CameraPose(float(i % 360), 0.0, 2.0),
                    kappa=[0.5, 0.1, 0.5] * 3,
                    img=(64, 64),
                    delta=1.0,
                    wall_ms=1.0 + i,
                    cost=100 + i,
                    repeats=1,
                )
            )
    return rows


class TestSubsample:
    def test_identity_at_gamma_one(self):
        rows = _fake_rows(10, ["a", "b"])
        assert subsample(rows, 1.0, seed=0) == rows

    def test_stratified_halving(self):
        rows = _fake_rows(100, ["a", "b"])
        sub = subsample(rows, 0.5, seed=0)
        assert len(sub) == 100
        per = {}
        for r in sub:
            per[r.volume_id] = per.get(r.volume_id, 0) + 1
        assert per == {"a": 50, "b": 50}

    def test_five_seeds_five_subsets(self):
        rows = _fake_rows(50, ["a", "b"])
        seen = set()
        for seed in range(5):
            sub = subsample(rows, 0.4, seed=seed)
            seen.add(tuple((r.volume_id, r.cost) for r in sub))
        assert len(seen) == 5

    def test_empty_result_guard(self):
        rows = _fake_rows(2, ["a"])
        with pytest.raises(EmptyResult):
            subsample(rows, 0.1, seed=0)


class TestManifest:
    def test_split_stable_under_reserialization(self, two_volume_setup, tmp_path):
        manifest, _ = two_volume_setup
        path = tmp_path / "m.json"
        manifest.save(path)
        again = DatasetManifest.load(path)
        assert again.split == manifest.split
        again.save(tmp_path / "m2.json")
        assert DatasetManifest.load(tmp_path / "m2.json").split == manifest.split

    def test_split_disjoint_and_complete(self):
        metas = [volcore.gen_synthetic(i, (16, 16, 16), "blobs")[1] for i in range(20)]
        manifest = DatasetManifest.from_volumes(metas, seed=3)
        counts = {"train": 0, "val": 0, "eval": 0}
        for v in manifest.split.values():
            counts[v] += 1
        assert counts["train"] == 16 and counts["val"] == 2 and counts["eval"] == 2

    def test_row_json_round_trip(self):
        row = _fake_rows(1, ["x"])[0]
        back = TimingSample.from_json(json.loads(json.dumps(row.to_json())))
        assert back == row


class TestSyntheticTarget:
    def test_synthetic_time_is_affine_in_cost(self, two_volume_setup, tmp_path):
        manifest, volumes = two_volume_setup
        out = tmp_path / "syn.jsonl"
        fit = (0.001, 2.0)
        collect(
            manifest, volumes, out, target="synthetic",
            base_cfg=raycaster.RenderConfig(img=(32, 32)),
            repeats=1, resolutions=((32, 32),), samples_per_volume=4,
            synthetic_fit=fit,
        )
        for row in load_dataset(out):
            assert row.wall_ms == pytest.approx(fit[0] * row.cost + fit[1])

    def test_calibration_returns_positive_slope(self, two_volume_setup):
        from rendertime.tfcam import TransferFunction

        _, volumes = two_volume_setup
        vol = next(iter(volumes.values()))
        tf = TransferFunction(((0.5, 0.05, 0.9),))
        a, b = raycaster.calibrate_synthetic_time(vol, tf, raycaster.RenderConfig(img=(32, 32)), probes=4)
        assert a > 0
        assert b >= 0
