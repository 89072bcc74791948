import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rendertime import evalkit
from rendertime.errors import IncompleteTable, LengthMismatch
from rendertime.evalkit import error_distribution, mrd, psnr, rmse, std_err
from rendertime.volcore import Volume


class TestRmseStd:
    def test_perfect_prediction(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_hand_computed(self):
        # errors [3, -4]: sqrt((9+16)/2) = sqrt(12.5)
        assert rmse([3.0, -4.0], [0.0, 0.0]) == pytest.approx(math.sqrt(12.5))

    def test_constant_offset(self):
        truth = np.array([1.0, 5.0, 9.0])
        assert rmse(truth + 2.5, truth) == pytest.approx(2.5)
        assert std_err(truth + 2.5, truth) == pytest.approx(0.0)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            rmse([1.0], [1.0, 2.0])

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40))
    def test_bias_variance_identity(self, errors):
        errors = np.asarray(errors)
        truth = np.zeros_like(errors)
        r = rmse(errors, truth)
        mean_err = float(np.mean(errors))
        s = std_err(errors, truth)
        assert r * r == pytest.approx(mean_err**2 + s**2, abs=1e-9 * max(1.0, r * r))


class TestPsnr:
    def test_identical_volumes_inf(self):
        v = Volume(np.zeros((4, 4, 4), np.float32), "unit")
        assert psnr(v, v) == float("inf")

    def test_mse_equal_peak_squared_zero_db(self):
        a = np.zeros((4, 4, 4))
        b = np.full((4, 4, 4), 2.0)
        assert psnr(a, b, peak=2.0) == pytest.approx(0.0)

    def test_uniform_error_forty_db(self):
        a = np.zeros((8, 8, 8))
        b = np.full((8, 8, 8), 0.02)
        assert psnr(a, b, peak=2.0) == pytest.approx(40.0)


class TestMrd:
    def test_single_model_zero(self):
        out = mrd([[1.0, 2.0, 3.0]], ["only"])
        assert out[0]["mrd"] == 0.0

    def test_always_best_model(self):
        out = mrd([[1.0, 1.0], [2.0, 3.0]], ["best", "worse"])
        assert out[0]["model"] == "best"
        assert out[0]["mrd"] == 0.0
        assert out[1]["mrd"] > 0.0

    def test_symmetric_tie_broken_by_order(self):
        out = mrd([[1.0, 2.0], [2.0, 1.0]], ["a", "b"])
        assert out[0]["mrd"] == pytest.approx(0.5)
        assert out[1]["mrd"] == pytest.approx(0.5)
        assert out[0]["model"] == "a"

    def test_column_scale_invariance(self):
        table = np.array([[1.0, 4.0], [2.0, 3.0], [1.5, 6.0]])
        scaled = table * np.array([10.0, 0.25])
        a = mrd(table)
        b = mrd(scaled)
        assert [r["model"] for r in a] == [r["model"] for r in b]
        for ra, rb in zip(a, b):
            assert ra["mrd"] == pytest.approx(rb["mrd"])

    def test_incomplete_rejected(self):
        with pytest.raises(IncompleteTable):
            mrd([[1.0, float("nan")]])
        with pytest.raises(IncompleteTable):
            mrd(np.zeros((0, 2)))


class TestErrorDistribution:
    def test_identical_single_zero_bin(self):
        out = error_distribution([1.0, 2.0], [1.0, 2.0])
        assert out["zeros"] == 2
        assert sum(out["counts"]) + 0 == 2 or out["counts"] == [2]

    def test_constant_offset_single_bin(self):
        out = error_distribution([3.0, 3.0], [1.0, 1.0])
        assert out["zeros"] == 0
        assert sum(out["counts"]) == 2

    def test_mass_sums_to_n(self):
        rng = np.random.default_rng(0)
        p = rng.normal(0, 1, 500)
        t = rng.normal(0, 1, 500)
        out = error_distribution(p, t)
        assert sum(out["counts"]) + out["zeros"] == 500
        assert out["n"] == 500


class TestSvgExport:
    def test_writes_polylines(self, tmp_path):
        path = tmp_path / "chart.svg"
        evalkit.export_svg_lines(path, {"a": [1.0, 2.0, 3.0], "b": [3.0, 2.0, 1.0]}, hline=2.0)
        text = path.read_text()
        assert text.startswith("<svg")
        assert text.count("<polyline") == 2
        assert "stroke-dasharray" in text  # the hline

    def test_rejects_empty(self, tmp_path):
        with pytest.raises(ValueError):
            evalkit.export_svg_lines(tmp_path / "x.svg", {"a": []})
