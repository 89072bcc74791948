import numpy as np
import pytest

from rendertime import prednet, volcore, volumenet
from rendertime.errors import DimMismatch, MissingScaler, TooFewSamples
from rendertime.harness import TimingSample
from rendertime.nnkit import OptimConfig
from rendertime.prednet import (
    ModelBundle,
    PredNet,
    PredNetArch,
    TargetScaler,
    build_inputs,
    group_slices,
    parse_bundle_descriptor,
    predict,
    predict_rows,
    train_prednet,
)
from rendertime.tfcam import CameraPose, TransferFunction


def synthetic_rows(n, volume_ids, seed=0, cost_fn=None):
    """Rows with a known smooth cost law, no renderer involved."""
    rng = np.random.default_rng(seed)
    if cost_fn is None:
        cost_fn = lambda rx, ry, dz, k, w: (w / 256.0) ** 2 * 5e4 / dz + 100.0 * sum(k[2::3])
    rows = []
    for i in range(n):
        vid = volume_ids[i % len(volume_ids)]
        rx, ry = rng.uniform(0, 360), rng.uniform(-89, 89)
        dz = float(rng.choice([1.5, 2.0, 2.5, 3.0]))
        kappa = [float(x) for x in rng.uniform(0.1, 0.9, 9)]
        w = int(rng.choice([128, 256]))
        rows.append(
            TimingSample(
                volume_id=vid,
                pose=CameraPose(rx, ry, dz),
                kappa=kappa,
                img=(w, w),
                delta=1.0,
                wall_ms=1.0,
                cost=int(cost_fn(rx, ry, dz, kappa, w)),
                repeats=1,
            )
        )
    return rows


@pytest.fixture
def unit_features():
    return {"a": np.array([0.1, 0.2, -0.3, 0.4], np.float32),
            "b": np.array([-0.5, 0.1, 0.9, -0.2], np.float32)}


class TestArch:
    def test_input_dim(self):
        arch = PredNetArch(feature_dim=4, m_lobes=3, n_c256=4)
        assert arch.input_dim == 4 + 3 + 9 + 2

    def test_descriptor_round_trip(self):
        arch = PredNetArch.parse("12C256", feature_dim=2)
        assert arch.n_c256 == 12 and arch.width == 256
        assert arch.descriptor == "12C256"

    def test_bundle_descriptor(self):
        varch, pdesc = parse_bundle_descriptor("128^3F2->12C256")
        assert varch.input_res == 128 and varch.feature_dim == 2
        assert pdesc == "12C256"
        varch2, _ = parse_bundle_descriptor("32^3F4 → 4C256")
        assert varch2.input_res == 32

    def test_layer_stack(self):
        arch = PredNetArch(feature_dim=4, n_c256=2)
        net = PredNet(arch, seed=0)
        from rendertime.nnkit import Linear

        linears = [l for l in net.net.layers if isinstance(l, Linear)]
        dims = [(l.w.data.shape[1], l.w.data.shape[0]) for l in linears]
        assert dims == [(18, 256), (256, 256), (256, 256), (256, 128), (128, 64), (64, 32), (32, 1)]


class TestInputs:
    def test_normalization_values(self, unit_features):
        arch = PredNetArch(feature_dim=4)
        x = build_inputs(
            arch,
            unit_features["a"][None],
            np.array([[180.0, 0.0, 2.0]]),
            np.array([[0.5, 0.1, 1.0] * 3]),
            np.array([[512.0, 256.0]]),
        )
        sl = group_slices(arch)
        assert np.allclose(x[0, sl["feature"]], unit_features["a"])
        assert np.allclose(x[0, sl["pose"]], [0.5, 0.5, 0.5])
        assert np.allclose(x[0, sl["tf"]], [0.5, 0.5, 1.0] * 3)
        assert np.allclose(x[0, sl["resolution"]], [0.5, 0.25])

    def test_drop_zeroes_group(self, unit_features):
        arch = PredNetArch(feature_dim=4)
        x = build_inputs(
            arch,
            unit_features["a"][None],
            np.array([[180.0, 0.0, 2.0]]),
            np.array([[0.5, 0.1, 1.0] * 3]),
            np.array([[512.0, 256.0]]),
            drop=("pose", "resolution"),
        )
        sl = group_slices(arch)
        assert np.all(x[0, sl["pose"]] == 0.0)
        assert np.all(x[0, sl["resolution"]] == 0.0)
        assert np.any(x[0, sl["feature"]] != 0.0)

    def test_dim_mismatch(self, unit_features):
        arch = PredNetArch(feature_dim=3)
        with pytest.raises(DimMismatch):
            build_inputs(arch, unit_features["a"][None], np.zeros((1, 3)),
                         np.zeros((1, 9)), np.zeros((1, 2)))


class TestScaler:
    def test_fit_and_round_trip(self):
        values = np.array([10.0, 20.0, 30.0])
        sc = TargetScaler.fit(values)
        assert sc.mean == pytest.approx(20.0)
        z = sc.transform(values)
        assert np.allclose(sc.inverse(z), values)

    def test_positive_std_required(self):
        with pytest.raises(ValueError):
            TargetScaler(1.0, 0.0)


class TestPredict:
    def test_deterministic(self, unit_features):
        arch = PredNetArch(feature_dim=4)
        net = PredNet(arch, seed=0)
        sc = TargetScaler(100.0, 10.0)
        pose = CameraPose(10.0, 5.0, 2.0)
        tf = TransferFunction.from_kappa([0.5, 0.1, 0.8] * 3)
        a = predict(net, sc, unit_features["a"], pose, tf, (256, 256))
        b = predict(net, sc, unit_features["a"], pose, tf, (256, 256))
        assert a == b

    def test_missing_scaler(self, unit_features):
        net = PredNet(PredNetArch(feature_dim=4), seed=0)
        with pytest.raises(MissingScaler):
            predict(net, None, unit_features["a"], CameraPose(0, 0, 2.0),
                    TransferFunction.from_kappa([0.5, 0.1, 0.8] * 3), (256, 256))

    def test_clamped_at_zero(self, unit_features):
        net = PredNet(PredNetArch(feature_dim=4), seed=0)
        sc = TargetScaler(-1e6, 1.0)  # forces negative raw predictions
        out = predict(net, sc, unit_features["a"], CameraPose(0, 0, 2.0),
                      TransferFunction.from_kappa([0.5, 0.1, 0.8] * 3), (256, 256))
        assert out == 0.0

    def test_kappa_length_checked(self, unit_features):
        net = PredNet(PredNetArch(feature_dim=4, m_lobes=3), seed=0)
        sc = TargetScaler(0.0, 1.0)
        with pytest.raises(DimMismatch):
            predict(net, sc, unit_features["a"], CameraPose(0, 0, 2.0),
                    TransferFunction.from_kappa([0.5, 0.1, 0.8]), (256, 256))


class TestTraining:
    def test_too_few_samples(self, unit_features):
        rows = synthetic_rows(50, ["a", "b"])
        with pytest.raises(TooFewSamples):
            train_prednet(rows, unit_features, PredNetArch(feature_dim=4),
                          OptimConfig(max_epochs=1), {"a": "train", "b": "train"})

    def test_overfit_single_volume_within_5pct(self, unit_features):
        rows = synthetic_rows(128, ["a"], seed=1)
        optim = OptimConfig(lr_max=3e-3, lr_min=1e-5, batch_size=16,
                            max_epochs=220, patience=400)
        result = train_prednet(rows, unit_features, PredNetArch(feature_dim=4, n_c256=1),
                               optim, {"a": "train"}, seed=0)
        preds = predict_rows(result.net, result.scaler, rows[:16], unit_features,
                             feature_scaler=result.feature_scaler)
        targets = np.array([r.cost for r in rows[:16]], dtype=float)
        rel = np.abs(preds - targets) / targets
        assert np.median(rel) < 0.05

    def test_stage_separation_never_touches_volumenet(self, unit_features):
        vnet = volumenet.VolumeNet(volumenet.VolumeNetArch(32, 4), seed=0)
        before = {p.name: p.data.copy() for p in vnet.params()}
        rows = synthetic_rows(128, ["a", "b"])
        train_prednet(rows, unit_features, PredNetArch(feature_dim=4, n_c256=0),
                      OptimConfig(max_epochs=3, patience=10),
                      {"a": "train", "b": "train"}, seed=0)
        for p in vnet.params():
            assert np.array_equal(p.data, before[p.name])

    def test_scaler_fit_on_train_split_only(self, unit_features):
        rows_a = synthetic_rows(100, ["a"], seed=2)
        rows_b = synthetic_rows(100, ["b"], seed=3,
                                cost_fn=lambda rx, ry, dz, k, w: 1e6)  # wild eval costs
        result = train_prednet(rows_a + rows_b, unit_features,
                               PredNetArch(feature_dim=4, n_c256=0),
                               OptimConfig(max_epochs=2, patience=10),
                               {"a": "train", "b": "eval"}, seed=0)
        train_costs = [r.cost for r in rows_a]
        assert result.scaler.mean == pytest.approx(np.mean(train_costs))


class TestBundle:
    def test_save_load_identical_predictions(self, tmp_path):
        vols = [volcore.gen_synthetic(400 + i, (32, 32, 32), "blobs") for i in range(2)]
        vnet = volumenet.VolumeNet(volumenet.VolumeNetArch(32, 4), seed=0)
        pnet = PredNet(PredNetArch(feature_dim=4), seed=1)
        bundle = ModelBundle(volumenet=vnet, prednet=pnet, scaler=TargetScaler(50.0, 5.0))
        pose = CameraPose(45.0, 10.0, 2.0)
        tf = TransferFunction.from_kappa([0.5, 0.1, 0.8] * 3)
        vol, meta = vols[0]
        before = bundle.predict(vol, meta.id, pose, tf, (128, 128))
        path = tmp_path / "model.rtb"
        bundle.save(path)
        loaded = ModelBundle.load(path)
        after = loaded.predict(vol, meta.id, pose, tf, (128, 128))
        assert before == after
        assert loaded.descriptor == bundle.descriptor == "32^3F4->4C256"

    def test_feature_cache_consistency(self):
        vol, meta = volcore.gen_synthetic(500, (32, 32, 32), "shell")
        vnet = volumenet.VolumeNet(volumenet.VolumeNetArch(32, 4), seed=0)
        bundle = ModelBundle(volumenet=vnet, prednet=PredNet(PredNetArch(feature_dim=4)),
                             scaler=TargetScaler(1.0, 1.0))
        a = bundle.feature_for(vol, meta.id)
        b = bundle.feature_for(vol, meta.id)
        assert a is b
