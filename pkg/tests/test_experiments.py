"""Recovery-protocol statistics at scales small enough for the unit suite."""

import io
import math

import numpy as np
import pytest

from nri.core import CapacityError
from nri.experiments import (
    RecoveryConfig,
    SWEEP_HEADER,
    index_dim_for_ratio,
    run_recovery,
    snr_db,
    sweep,
    sweep_rows,
    write_sweep_csv,
)


class TestSnr:
    def test_reference_points(self):
        assert snr_db(0.01, 100, 10) == pytest.approx(4.56, abs=0.01)
        assert snr_db(0.005, 100, 10) == pytest.approx(1.55, abs=0.01)
        assert snr_db(0.005, 1000, 10) == pytest.approx(21.55, abs=0.01)

    def test_weight_scaling_is_exactly_20db_per_decade(self):
        for c in (10, 100):
            delta = snr_db(0.02, 50 * c, 7) - snr_db(0.02, 50, 7)
            assert delta == pytest.approx(20 * math.log10(c), abs=1e-9)

    def test_zero_noise_is_infinite(self):
        assert snr_db(0.01, 100, 0) == math.inf

    def test_validation(self):
        with pytest.raises(ValueError):
            snr_db(0.0, 100, 10)
        with pytest.raises(ValueError):
            snr_db(0.01, -1, 10)
        with pytest.raises(ValueError):
            snr_db(0.01, 100, -1)


class TestScaling:
    def test_reference_points(self):
        assert index_dim_for_ratio(64_000, 64, 1) == 1000
        assert index_dim_for_ratio(64_000, 64, 2) == 8000

    def test_no_reduction(self):
        for r in (1, 2, 3):
            assert index_dim_for_ratio(1234, 1, r) == 1234

    def test_validation(self):
        with pytest.raises(ValueError):
            index_dim_for_ratio(100, 0.5, 1)
        with pytest.raises(ValueError):
            index_dim_for_ratio(100, 4, 0)


class TestConfig:
    def test_xi(self):
        two = RecoveryConfig(matrix_size=400, state_size=200, mode="two_way",
                             feature_density=0.05)
        assert two.xi == 4.0
        one = RecoveryConfig(matrix_size=400, state_size=100, mode="one_way",
                             feature_density=0.05)
        assert one.xi == 4.0

    def test_validation(self):
        with pytest.raises(ValueError):
            RecoveryConfig(matrix_size=400, state_size=400, mode="two_way",
                           feature_density=0.05)  # no reduction
        with pytest.raises(ValueError):
            RecoveryConfig(matrix_size=400, state_size=200, feature_density=0.001)
        with pytest.raises(ValueError):
            RecoveryConfig(matrix_size=400, state_size=200, mode="direct",
                           feature_density=0.05)


@pytest.mark.filterwarnings("ignore:no random dimension")
class TestRecovery:
    def test_direct_mode_is_lossless(self):
        cfg = RecoveryConfig(matrix_size=200, state_size=200, mode="direct",
                             feature_density=0.05, feature_weight=100,
                             noise_max=10, classes_sampled=30, seed=4)
        report = run_recovery(cfg)
        assert report.features_per_class == 10
        assert np.all(report.per_class_correct == 10)
        assert report.mean_correct_fraction == 1.0
        # every top-rank decoded value carries at least the planted weight
        assert np.all(report.profile_rank_mean[:10] >= 100)

    def test_two_way_smoke(self):
        cfg = RecoveryConfig(matrix_size=400, state_size=200, mode="two_way",
                             feature_density=0.025, feature_weight=1000,
                             noise_max=10, classes_sampled=40, seed=5)
        report = run_recovery(cfg)
        assert 0 < report.mean_correct <= 10
        assert report.runtime_seconds > 0
        assert not report.saturated
        assert report.snr_encoded_db == pytest.approx(snr_db(0.025, 1000, 10))
        assert len(report.profile_rank_mean) == min(400, 10 + 50)
        # top-rank decoded values bracket the planted weight
        plateau = report.profile_rank_mean[: report.features_per_class].mean()
        assert 0.5 * 1000 <= plateau <= 2.0 * 1000

    def test_same_seed_is_reproducible(self):
        cfg = RecoveryConfig(matrix_size=300, state_size=150, mode="two_way",
                             feature_density=0.04, feature_weight=500,
                             noise_max=10, classes_sampled=25, seed=8)
        a = run_recovery(cfg)
        b = run_recovery(cfg)
        assert np.array_equal(a.per_class_correct, b.per_class_correct)
        assert np.array_equal(a.profile_rank_mean, b.profile_rank_mean)

    def test_seed_change_moves_result_within_noise(self):
        base = dict(matrix_size=1000, state_size=500, mode="two_way",
                    feature_density=0.01, feature_weight=1000, noise_max=10,
                    classes_sampled=100)
        a = run_recovery(RecoveryConfig(seed=1, **base))
        b = run_recovery(RecoveryConfig(seed=2, **base))
        spread = 2 * math.hypot(
            a.std_correct / math.sqrt(len(a.per_class_correct)),
            b.std_correct / math.sqrt(len(b.per_class_correct)),
        )
        assert abs(a.mean_correct - b.mean_correct) <= max(spread, 0.5)

    def test_weight_monotonicity(self):
        base = dict(matrix_size=1000, state_size=500, mode="two_way",
                    feature_density=0.01, noise_max=10, classes_sampled=100, seed=3)
        low = run_recovery(RecoveryConfig(feature_weight=100, **base))
        high = run_recovery(RecoveryConfig(feature_weight=1000, **base))
        guard = 2 * low.std_correct / math.sqrt(len(low.per_class_correct))
        assert high.mean_correct >= low.mean_correct - guard

    def test_matrix_size_moves_spread_not_mean(self):
        # quadrupling N at fixed 4:1 reduction: mean stays, class spread shrinks
        reports = {}
        for N in (2000, 8000):
            cfg = RecoveryConfig(matrix_size=N, state_size=N // 2, mode="two_way",
                                 feature_density=0.01, feature_weight=100,
                                 noise_max=10, classes_sampled=400, seed=9)
            reports[N] = run_recovery(cfg)
        small, big = reports[2000], reports[8000]
        se = math.hypot(small.std_correct_fraction / 20, big.std_correct_fraction / 20)
        assert abs(small.mean_correct_fraction - big.mean_correct_fraction) <= 2.5 * se
        assert big.std_correct_fraction < 0.95 * small.std_correct_fraction


class TestSweep:
    def configs(self):
        return [
            RecoveryConfig(matrix_size=300, state_size=150, mode="two_way",
                           feature_density=0.02, feature_weight=1000,
                           noise_max=10, classes_sampled=20, seed=6),
            RecoveryConfig(matrix_size=300, state_size=150, mode="one_way",
                           feature_density=0.02, feature_weight=1000,
                           noise_max=10, classes_sampled=20, seed=6),
        ]

    def test_rows_and_csv(self):
        rows = sweep(self.configs())
        recs = sweep_rows(rows)
        assert [r["mode"] for r in recs] == ["two_way", "one_way"]
        assert all(0 <= r["mean"] <= 1 for r in recs)
        buf = io.StringIO()
        write_sweep_csv(rows, buf)
        lines = buf.getvalue().strip().split("\n")
        assert lines[0] == SWEEP_HEADER
        assert len(lines) == 3

    def test_errors_recorded_per_row_and_sweep_continues(self):
        bad_then_good = self.configs()
        rows = sweep(bad_then_good, memory_cap=10)  # every run hits the cap
        assert all(r.error and "CapacityError" in r.error for r in rows)
        recs = sweep_rows(rows)
        assert all(math.isnan(r["mean"]) for r in recs)
        buf = io.StringIO()
        write_sweep_csv(rows, buf)
        assert len(buf.getvalue().strip().split("\n")) == 3

    def test_threaded_matches_serial(self):
        serial = sweep_rows(sweep(self.configs(), threads=1))
        threaded = sweep_rows(sweep(self.configs(), threads=2))
        for a, b in zip(serial, threaded):
            a.pop("runtime_s")
            b.pop("runtime_s")
        assert serial == threaded
