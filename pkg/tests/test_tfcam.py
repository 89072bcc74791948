import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rendertime import tfcam
from rendertime.tfcam import CameraPose, TransferFunction, bake_lut, opacity, pose_to_rays, sample_pose, sample_tf


class TestTransferFunction:
    def test_single_lobe_peak(self):
        tf = TransferFunction(((0.3, 0.05, 0.7),))
        assert opacity(tf, 0.3) == pytest.approx(0.7)

    def test_eq4_scalar_evaluation(self):
        tf = TransferFunction(((0.5, 0.1, 1.0),))
        # exp(-0.01/0.1) = exp(-0.1)
        assert opacity(tf, 0.6) == pytest.approx(math.exp(-0.1), abs=1e-12)

    def test_zero_magnitude_everywhere_zero(self):
        tf = TransferFunction(((0.2, 0.1, 0.0), (0.8, 0.05, 0.0)))
        s = np.linspace(0, 1, 101)
        assert np.all(opacity(tf, s) == 0.0)

    def test_lobe_permutation_invariance(self):
        lobes = ((0.2, 0.05, 0.5), (0.7, 0.1, 0.9), (0.4, 0.02, 0.3))
        s = np.linspace(0, 1, 57)
        a = opacity(TransferFunction(lobes), s)
        b = opacity(TransferFunction(lobes[::-1]), s)
        assert np.allclose(a, b, atol=1e-12)

    def test_kappa_round_trip(self):
        tf = TransferFunction(((0.2, 0.05, 0.5), (0.7, 0.1, 0.9)))
        back = TransferFunction.from_kappa(tf.kappa, tf.colormap)
        assert back == tf
        assert list(tf.kappa) == [0.2, 0.05, 0.5, 0.7, 0.1, 0.9]

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            TransferFunction(())
        with pytest.raises(ValueError):
            TransferFunction(((1.2, 0.1, 0.5),))
        with pytest.raises(ValueError):
            TransferFunction(((0.5, 0.0, 0.5),))
        with pytest.raises(ValueError):
            TransferFunction(((0.5, 0.1, 1.5),))


class TestLut:
    def test_endpoints_match_analytic(self):
        tf = TransferFunction(((0.1, 0.02, 0.8), (0.9, 0.05, 0.6)))
        lut = bake_lut(tf)
        assert lut.entries[0, 3] == pytest.approx(min(opacity(tf, 0.0), 1.0), abs=1e-6)
        assert lut.entries[255, 3] == pytest.approx(min(opacity(tf, 1.0), 1.0), abs=1e-6)

    def test_clamped_to_one(self):
        tf = TransferFunction(((0.5, 0.2, 1.0), (0.5, 0.2, 0.8)))  # sums to 1.8 at 0.5
        lut = bake_lut(tf)
        assert lut.entries[:, 3].max() == 1.0
        assert lut.entries[127, 3] == pytest.approx(1.0)

    def test_nearest_lookup_lipschitz_bound(self):
        lobes = ((0.3, 0.02, 0.9), (0.7, 0.05, 0.5))
        tf = TransferFunction(lobes)
        lut = bake_lut(tf)
        # max |O'| per lobe is h*sqrt(2/w)*exp(-1/2)
        lipschitz = sum(h * math.sqrt(2.0 / w) * math.exp(-0.5) for _, w, h in lobes)
        rng = np.random.default_rng(0)
        s = rng.random(10000)
        nearest = lut.entries[np.clip((s * 255 + 0.5).astype(int), 0, 255), 3]
        analytic = np.clip(opacity(tf, s), 0.0, 1.0)
        assert np.abs(nearest - analytic).max() <= lipschitz / 255.0


class TestCameraPose:
    def test_bounds_enforced(self):
        with pytest.raises(ValueError):
            CameraPose(360.0, 0.0, 2.0)
        with pytest.raises(ValueError):
            CameraPose(0.0, 90.0, 2.0)
        with pytest.raises(ValueError):
            CameraPose(0.0, 0.0, 1.0)

    def test_center_pixel_hits_volume_center(self):
        dims = (32, 48, 40)
        pose = CameraPose(0.0, 0.0, 2.0)
        origins, dirs = pose_to_rays(pose, (9, 9), dims)
        o, d = origins[4, 4], dirs[4, 4]
        center = np.array([16.0, 24.0, 20.0])
        t = np.dot(center - o, d)
        assert np.linalg.norm(o + t * d - center) < 1e-5

    def test_rx_180_point_reflection(self):
        dims = (32, 32, 32)
        o0, _ = pose_to_rays(CameraPose(0.0, 0.0, 2.0), (3, 3), dims)
        o180, _ = pose_to_rays(CameraPose(180.0, 0.0, 2.0), (3, 3), dims)
        center = np.array([16.0, 16.0, 16.0])
        reflected = 2 * center - o0[0, 0]
        assert o180[0, 0][1] == pytest.approx(o0[0, 0][1], abs=1e-9)  # y preserved
        # x and z reflect through the center
        assert o180[0, 0][0] == pytest.approx(reflected[0], abs=1e-6)
        assert o180[0, 0][2] == pytest.approx(reflected[2], abs=1e-6)

    def test_directions_unit_norm(self):
        _, dirs = pose_to_rays(CameraPose(123.0, -45.0, 3.1), (17, 11), (64, 64, 64))
        norms = np.linalg.norm(dirs, axis=-1)
        assert np.abs(norms - 1.0).max() <= 1e-6

    def test_full_turn_identity(self):
        dims = (32, 32, 32)
        pose_a = CameraPose(37.5, 12.0, 2.0)
        o_a, d_a = pose_to_rays(pose_a, (5, 5), dims)
        # rx + 360 is outside the stored domain; camera_basis wraps angles
        basis_a = tfcam.camera_basis(pose_a, dims)
        basis_b = tfcam.camera_basis(CameraPose((37.5 + 360.0) % 360.0, 12.0, 2.0), dims)
        for x, y in zip(basis_a, basis_b):
            assert np.abs(np.asarray(x) - np.asarray(y)).max() <= 1e-6


class TestSampling:
    def test_bounds_hold_over_many_samples(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            p = sample_pose(rng)
            assert 0.0 <= p.rx < 360.0
            assert -89.0 <= p.ry <= 89.0
            assert p.dz in tfcam.DZ_CHOICES
        for _ in range(200):
            tf = sample_tf(rng, 3)
            for c, w, h in tf.lobes:
                assert 0.0 <= c <= 1.0
                assert tfcam.TF_WIDTH_RANGE[0] <= w <= tfcam.TF_WIDTH_RANGE[1]
                assert 0.0 <= h <= 1.0

    def test_fixed_seed_reproducible(self):
        a = [sample_pose(np.random.default_rng(42)) for _ in range(5)]
        b = [sample_pose(np.random.default_rng(42)) for _ in range(5)]
        assert a == b

    def test_dz_hits_exactly_four_values(self):
        rng = np.random.default_rng(1)
        seen = {sample_pose(rng).dz for _ in range(500)}
        assert seen == set(tfcam.DZ_CHOICES)


@settings(max_examples=25, deadline=None)
@given(
    c=st.floats(0, 1),
    w=st.floats(0.005, 1.0),
    h=st.floats(0, 1),
    s=st.floats(0, 1),
)
def test_opacity_nonnegative_and_bounded_by_height_sum(c, w, h, s):
    tf = TransferFunction(((c, w, h),))
    val = opacity(tf, s)
    assert 0.0 <= val <= h + 1e-12
