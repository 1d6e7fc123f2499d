import math

import numpy as np
import pytest

from conftest import make_growth_series
from tumordyn.dataio import (
    CsvFormatError,
    NormalizationMap,
    SigmoidFit,
    SigmoidFitError,
    SubjectNotFoundError,
    TumorSeries,
    fit_sigmoid,
    load_series,
    make_norm_map,
    sample_interpolant,
    volume_from_calipers,
    write_interpolant_csv,
)


class TestVolumeFromCalipers:
    def test_unit_sphereish(self):
        assert volume_from_calipers(1.0, 1.0) == pytest.approx(math.pi / 6, rel=1e-14)

    def test_zero_width(self):
        assert volume_from_calipers(5.0, 0.0) == 0.0

    def test_two_by_one(self):
        assert volume_from_calipers(2.0, 1.0) == pytest.approx(math.pi / 3, rel=1e-14)

    def test_rejects_negative_and_swapped(self):
        with pytest.raises(ValueError):
            volume_from_calipers(-1.0, 0.5)
        with pytest.raises(ValueError):
            volume_from_calipers(1.0, -0.5)
        with pytest.raises(ValueError):
            volume_from_calipers(1.0, 2.0)

    def test_monotone_in_each_argument(self):
        grid = [0.5, 1.0, 2.0, 4.0]
        for w in grid:
            values = [volume_from_calipers(L, w) for L in grid if L >= w]
            assert values == sorted(values)
        for L in [4.0, 8.0]:
            values = [volume_from_calipers(L, w) for w in grid]
            assert values == sorted(values)


class TestTumorSeries:
    def test_validation(self):
        with pytest.raises(ValueError):
            TumorSeries(1, [1.0, 2.0, 3.0], [1.0, 2.0, 3.0])  # too few
        with pytest.raises(ValueError):
            TumorSeries(1, [1, 2, 2, 3], [1, 2, 3, 4])  # not strictly increasing
        with pytest.raises(ValueError):
            TumorSeries(1, [1, 2, 3, 4], [1, -2, 3, 4])  # non-positive volume


class TestLoadSeries:
    def test_identity_read_back(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("id,time_days,volume_mm3\n1,22,80\n1,27,400\n1,30,800\n1,32,1000\n")
        s = load_series(path, 1)
        assert list(s.times) == [22, 27, 30, 32]
        assert list(s.volumes) == [80, 400, 800, 1000]

    def test_rows_sorted_by_time(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("id,time_days,volume_mm3\n1,30,800\n1,22,80\n1,32,1000\n1,27,400\n")
        s = load_series(path, 1)
        assert list(s.times) == [22, 27, 30, 32]
        assert list(s.volumes) == [80, 400, 800, 1000]

    def test_missing_subject(self, sample_csv):
        with pytest.raises(SubjectNotFoundError):
            load_series(sample_csv, 99)

    def test_parse_error_names_line(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("id,time_days,volume_mm3\n1,22,80\n1,27,abc\n1,30,800\n1,32,1000\n")
        with pytest.raises(CsvFormatError) as err:
            load_series(path, 1)
        assert err.value.line_no == 3
        assert "line 3" in str(err.value)

    def test_comments_ignored(self, sample_csv):
        s = load_series(sample_csv, 1)
        assert len(s) == 6

    def test_duplicate_time_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("id,time_days,volume_mm3\n1,22,80\n1,22,90\n1,30,800\n1,32,1000\n")
        with pytest.raises(CsvFormatError):
            load_series(path, 1)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1,22,80\n1,27,400\n")
        with pytest.raises(CsvFormatError):
            load_series(path, 1)


class TestNormalizationMap:
    def setup_method(self):
        self.series = TumorSeries(1, [22.0, 27.0, 30.0, 32.0], [80.0, 400.0, 800.0, 1000.0])
        self.norm_map = make_norm_map(self.series)

    def test_endpoints(self):
        assert self.norm_map.normalize_t(22.0) == 0.0
        assert self.norm_map.normalize_t(32.0) == 1.0

    def test_midpoint(self):
        assert self.norm_map.normalize_t(27.0) == 0.5

    def test_round_trips(self):
        for x in [123.4, 80.0, 999.0]:
            assert self.norm_map.denormalize_v(self.norm_map.normalize_v(x)) == pytest.approx(x, abs=1e-12)
        for t in [22.0, 25.3, 32.0]:
            assert self.norm_map.denormalize_t(self.norm_map.normalize_t(t)) == pytest.approx(t, abs=1e-12)

    def test_degenerate_range(self):
        with pytest.raises(ValueError):
            NormalizationMap(t_min=22.0, t_max=22.0, v_min=0.0, v_max=1.0)
        with pytest.raises(ValueError):
            make_norm_map(TumorSeries(1, [1, 2, 3, 4], [5.0, 5.0, 5.0, 5.0]))


class TestFitSigmoid:
    def test_recovers_generating_parameters(self):
        A, B, k, tau0 = 50.0, 1000.0, 8.0, 0.5
        taus = np.linspace(0.0, 1.0, 10)
        times = 22.0 + 10.0 * taus
        volumes = A + B / (1.0 + np.exp(-k * (taus - tau0)))
        series = TumorSeries(1, times, volumes)
        fit = fit_sigmoid(series, make_norm_map(series))
        assert fit.A == pytest.approx(A, rel=1e-6)
        assert fit.B == pytest.approx(B, rel=1e-6)
        assert fit.k == pytest.approx(k, rel=1e-6)
        assert fit.tau0 == pytest.approx(tau0, rel=1e-6)
        assert fit.sse < 1e-12

    def test_monotone_on_monotone_data(self):
        series = make_growth_series()
        fit = fit_sigmoid(series, make_norm_map(series))
        values = [v for _, v in sample_interpolant(fit, 101)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_constant_data_is_a_fit_error(self):
        series = TumorSeries(1, [1.0, 2.0, 3.0, 4.0], [50.0, 50.0, 50.0, 50.0])
        norm_map = NormalizationMap(t_min=1.0, t_max=4.0, v_min=0.0, v_max=100.0)
        with pytest.raises(SigmoidFitError):
            fit_sigmoid(series, norm_map)


class TestSampleInterpolant:
    FIT = SigmoidFit(A=50.0, B=1000.0, k=8.0, tau0=0.5, sse=0.0)

    def test_two_points_are_endpoints(self):
        pts = sample_interpolant(self.FIT, 2)
        assert [t for t, _ in pts] == [0.0, 1.0]

    def test_21_points_spacing(self):
        pts = sample_interpolant(self.FIT, 21)
        taus = [t for t, _ in pts]
        assert len(pts) == 21
        assert np.allclose(np.diff(taus), 0.05)

    def test_strictly_increasing_and_bounded(self):
        pts = sample_interpolant(self.FIT, 50)
        values = [v for _, v in pts]
        assert all(b > a for a, b in zip(values, values[1:]))
        assert all(self.FIT.A <= v <= self.FIT.A + self.FIT.B for v in values)

    def test_needs_two(self):
        with pytest.raises(ValueError):
            sample_interpolant(self.FIT, 1)

    def test_csv_export(self, tmp_path):
        norm_map = NormalizationMap(22.0, 32.0, 80.0, 1000.0)
        path = tmp_path / "interp.csv"
        write_interpolant_csv(self.FIT, 5, norm_map, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "tau,time_days,volume_mm3"
        assert len(lines) == 6
