import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from rendertime.cli import main


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def volume_dir(tmp_path_factory, runner):
    out = tmp_path_factory.mktemp("vols")
    result = runner.invoke(
        main,
        ["gen-volumes", "--count", "3", "--dims", "32", "--recipe", "mixed",
         "--seed", "9", "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture(scope="module")
def dataset_path(tmp_path_factory, runner, volume_dir):
    out = tmp_path_factory.mktemp("data") / "ds.jsonl"
    result = runner.invoke(
        main,
        ["collect", "--manifest", str(volume_dir / "manifest.json"),
         "--samples-per-volume", "40", "--repeats", "1", "--target", "cost",
         "--resolutions", "64x64,128x128", "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    return out


class TestGenVolumes:
    def test_writes_volumes_and_manifest(self, volume_dir):
        manifest = json.loads((volume_dir / "manifest.json").read_text())
        assert len(manifest["volumes"]) == 3
        raws = list(volume_dir.glob("*.raw"))
        assert len(raws) == 3
        for raw in raws:
            assert (volume_dir / (raw.name + ".meta.json")).exists()

    def test_reproducible(self, runner, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            r = runner.invoke(main, ["gen-volumes", "--count", "2", "--dims", "16",
                                     "--seed", "4", "--out", str(out)])
            assert r.exit_code == 0
        fa = sorted(a.glob("*.raw"))
        fb = sorted(b.glob("*.raw"))
        assert [f.name for f in fa] == [f.name for f in fb]
        for x, y in zip(fa, fb):
            assert x.read_bytes() == y.read_bytes()

    def test_invalid_dims_usage_error(self, runner, tmp_path):
        r = runner.invoke(main, ["gen-volumes", "--dims", "7x7", "--out", str(tmp_path)])
        assert r.exit_code == 2

    def test_out_of_range_dims_runtime_error(self, runner, tmp_path):
        r = runner.invoke(main, ["gen-volumes", "--dims", "8", "--out", str(tmp_path / "x")],
                          standalone_mode=False, catch_exceptions=True)
        assert r.exception is not None

    def test_help_lists_flags(self, runner):
        r = runner.invoke(main, ["gen-volumes", "--help"])
        assert r.exit_code == 0
        for flag in ("--count", "--dims", "--recipe", "--seed", "--out"):
            assert flag in r.output

    def test_unknown_flag_rejected(self, runner, tmp_path):
        r = runner.invoke(main, ["gen-volumes", "--frobnicate", "1", "--out", str(tmp_path)])
        assert r.exit_code == 2


class TestCollect:
    def test_rows_written(self, dataset_path):
        lines = dataset_path.read_text().splitlines()
        assert len(lines) == 120
        row = json.loads(lines[0])
        assert {"volume_id", "pose", "kappa", "img", "delta", "wall_ms", "cost", "repeats"} <= set(row)
        assert (Path(str(dataset_path) + ".manifest.json")).exists()
        assert (Path(str(dataset_path) + ".meta.json")).exists()

    def test_deterministic_given_seed(self, runner, volume_dir, tmp_path):
        outs = []
        for name in ("x.jsonl", "y.jsonl"):
            out = tmp_path / name
            r = runner.invoke(
                main,
                ["collect", "--manifest", str(volume_dir / "manifest.json"),
                 "--samples-per-volume", "5", "--repeats", "1", "--target", "cost",
                 "--resolutions", "32x32", "--seed", "11", "--out", str(out)],
            )
            assert r.exit_code == 0, r.output
            rows = [json.loads(l) for l in out.read_text().splitlines()]
            outs.append([(r_["volume_id"], r_["cost"], r_["kappa"]) for r_ in rows])
        assert outs[0] == outs[1]


class TestTrainAndDownstream:
    @pytest.fixture(scope="class")
    def volumenet_ckpt(self, runner, volume_dir, tmp_path_factory):
        out = tmp_path_factory.mktemp("models") / "vn.ckpt"
        r = runner.invoke(
            main,
            ["train", "--stage", "volumenet", "--arch", "32^3F4->2C256",
             "--data", str(volume_dir / "manifest.json"), "--epochs", "4",
             "--batch-size", "2", "--out", str(out)],
        )
        assert r.exit_code == 0, r.output
        return out

    @pytest.fixture(scope="class")
    def bundle_path(self, runner, volume_dir, dataset_path, volumenet_ckpt, tmp_path_factory):
        out = tmp_path_factory.mktemp("models") / "model.rtb"
        log = str(out) + ".log.jsonl"
        r = runner.invoke(
            main,
            ["train", "--stage", "prednet", "--arch", "32^3F4->2C256",
             "--data", str(dataset_path), "--volumenet-ckpt", str(volumenet_ckpt),
             "--epochs", "8", "--log", log, "--out", str(out)],
        )
        assert r.exit_code == 0, r.output
        lines = [json.loads(l) for l in Path(log).read_text().splitlines()]
        assert {"epoch", "train_loss", "val_loss", "lr"} <= set(lines[0])
        return out

    def test_bad_descriptor_exit_2(self, runner, volume_dir, tmp_path):
        r = runner.invoke(
            main,
            ["train", "--stage", "volumenet", "--arch", "bogus",
             "--data", str(volume_dir / "manifest.json"), "--out", str(tmp_path / "x")],
        )
        assert r.exit_code == 2

    def test_predict_runs(self, runner, volume_dir, bundle_path):
        manifest = json.loads((volume_dir / "manifest.json").read_text())
        vid = manifest["volumes"][0]["id"]
        r = runner.invoke(
            main,
            ["predict", "--bundle", str(bundle_path), "--manifest",
             str(volume_dir / "manifest.json"), "--volume-id", vid,
             "--pose", '{"rx": 30, "ry": 0, "dz": 2.0}',
             "--kappa", json.dumps([0.5, 0.1, 0.8] * 3), "--img", "64x64"],
        )
        assert r.exit_code == 0, r.output
        out = json.loads(r.output)
        assert out["predicted"] >= 0.0

    def test_eval_runs(self, runner, dataset_path, bundle_path, tmp_path):
        report = tmp_path / "report.json"
        r = runner.invoke(
            main,
            ["eval", "--bundle", str(bundle_path), "--data", str(dataset_path),
             "--split", "all", "--out", str(report)],
        )
        assert r.exit_code == 0, r.output
        doc = json.loads(r.output.splitlines()[-1])
        assert doc["rmse"] >= 0.0
        assert report.exists()


class TestSchedule:
    def test_single_node_makespan(self, runner, tmp_path):
        tasks = {
            "tasks": [{"task_id": f"t{i}"} for i in range(4)],
            "est_time": [1.0, 2.0, 3.0, 4.0],
            "gt_time": [1.0, 2.0, 3.0, 4.0],
        }
        path = tmp_path / "tasks.json"
        path.write_text(json.dumps(tasks))
        r = runner.invoke(main, ["schedule", "--tasks", str(path), "--nodes", "1",
                                 "--estimator", "gt"])
        assert r.exit_code == 0, r.output
        assert "makespan=10.0" in r.output

    def test_compare_all(self, runner, tmp_path):
        rng = np.random.default_rng(0)
        gt = rng.uniform(1, 10, 24).tolist()
        tasks = {
            "tasks": [{"task_id": f"t{i}"} for i in range(24)],
            "est_time": gt,
            "gt_time": gt,
        }
        path = tmp_path / "tasks.json"
        path.write_text(json.dumps(tasks))
        out = tmp_path / "report.json"
        r = runner.invoke(main, ["schedule", "--tasks", str(path), "--nodes", "2,4",
                                 "--out", str(out)])
        assert r.exit_code == 0, r.output
        report = json.loads(out.read_text())
        assert len(report["results"]) == 2


class TestGBuild:
    def test_g_build_writes_table(self, runner, volume_dir, tmp_path):
        out = tmp_path / "g.json"
        manifest = json.loads((volume_dir / "manifest.json").read_text())
        vid = manifest["volumes"][0]["id"]
        r = runner.invoke(
            main,
            ["g-build", "--manifest", str(volume_dir / "manifest.json"),
             "--volume-ids", vid, "--img", "48x48", "--out", str(out)],
        )
        assert r.exit_code == 0, r.output
        doc = json.loads(out.read_text())
        tnorm = np.array(doc["tnorm"])
        assert np.all(np.diff(tnorm) <= 1e-12)
        assert doc["delta_ref"] == 1.0


class TestConfigFile:
    def test_config_supplies_defaults_flags_win(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"gen-volumes": {"count": 2, "dims": "16", "seed": 5}}))
        out = tmp_path / "v"
        r = runner.invoke(main, ["gen-volumes", "--config", str(cfg), "--count", "1",
                                 "--out", str(out)])
        assert r.exit_code == 0, r.output
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["volumes"]) == 1  # explicit flag wins
        assert manifest["seed"] == 5  # config supplied the default
