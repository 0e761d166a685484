import numpy as np
import pytest

from cyclicmc.chain import SampleMatrix
from cyclicmc.stopping import (
    BudgetExceeded,
    StopConfig,
    ess_threshold,
    run_until_stop,
    stop_rule_holds,
)
from cyclicmc.samplers import FlipChainSpec, make_ar1_sampler, make_flip_chain

from conftest import rng_from


def iid_matrix(n, seed):
    return SampleMatrix(rng_from(seed).standard_normal((n, 1)))


class TestStopConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            StopConfig(epsilon=-0.1)
        with pytest.raises(ValueError):
            StopConfig(epsilon=0.1, alpha=1.2)
        with pytest.raises(ValueError):
            StopConfig(epsilon=0.1, check_growth=1.0)
        with pytest.raises(ValueError):
            StopConfig(epsilon=0.1, scaling="magic")

    def test_first_check_defaults(self):
        assert StopConfig(epsilon=0.1).first_check == 1000
        assert StopConfig(epsilon=0.1, n0=5000).first_check == 5000
        assert StopConfig(epsilon=0.1, n_start=300).first_check == 300


class TestStopRule:
    def test_below_n0_never_holds(self):
        s = iid_matrix(500, seed=81)
        cfg = StopConfig(epsilon=10.0, n0=1000, n_start=100)
        holds, rec = stop_rule_holds(s, cfg)
        assert not holds
        # the indicator pad makes lhs exceed rhs by at least the volume root
        assert rec.lhs > rec.rhs

    def test_huge_epsilon_holds_past_n0(self):
        s = iid_matrix(500, seed=82)
        cfg = StopConfig(epsilon=1e6, n0=100, n_start=100)
        holds, rec = stop_rule_holds(s, cfg)
        assert holds and rec.lhs <= rec.rhs

    def test_degenerate_sample_reports_reason(self):
        s = SampleMatrix(np.ones((500, 1)))
        cfg = StopConfig(epsilon=0.1, n0=100)
        holds, rec = stop_rule_holds(s, cfg)
        assert not holds
        assert rec.reason != ""

    def test_d1_sample_size_prediction(self):
        # i.i.d. d=1 with det_psi scaling: rule fires once n ~ 4 t^2 / eps^2
        eps = 0.1
        sampler = make_ar1_sampler(0.0)
        cfg = StopConfig(epsilon=eps, n0=100, n_start=100,
                         check_growth=1.05)
        report = run_until_stop(sampler, cfg, rng_from(83))
        predicted = 4.0 * 2.705543454 / eps**2
        assert 0.5 * predicted <= report.n_stop <= 2.0 * predicted


class TestRunUntilStop:
    def test_check_schedule_is_geometric(self):
        sampler = make_flip_chain(FlipChainSpec(0.25, 0.5))
        cfg = StopConfig(epsilon=1e-9, n0=1000, n_start=1000,
                         check_growth=1.2, max_n=2200)
        with pytest.raises(BudgetExceeded) as err:
            run_until_stop(sampler, cfg, rng_from(84))
        ns = [c.n for c in err.value.report.checks]
        assert ns == [1000, 1200, 1440, 1728, 2074]
        assert err.value.report.stopped is False

    def test_deterministic_given_seed(self):
        sampler = make_flip_chain(FlipChainSpec(0.25, 0.5))
        cfg = StopConfig(epsilon=0.08, n0=100, n_start=100)
        r1 = run_until_stop(sampler, cfg, rng_from(85))
        r2 = run_until_stop(sampler, cfg, rng_from(85))
        assert r1.n_stop == r2.n_stop
        assert np.array_equal(r1.estimate, r2.estimate)
        assert [c.lhs for c in r1.checks] == [c.lhs for c in r2.checks]

    def test_monotone_in_epsilon(self):
        sampler = make_flip_chain(FlipChainSpec(0.25, 0.5))
        stops = []
        for eps in (0.2, 0.1, 0.05):
            cfg = StopConfig(epsilon=eps, n0=100, n_start=100)
            stops.append(run_until_stop(sampler, cfg, rng_from(86)).n_stop)
        assert stops[0] <= stops[1] <= stops[2]

    def test_phase_counts_partition_total(self):
        sampler = make_flip_chain(FlipChainSpec(0.25, 0.5))
        cfg = StopConfig(epsilon=0.15, n0=100, n_start=100)
        report = run_until_stop(sampler, cfg, rng_from(87))
        counts = report.phase_counts(2)
        assert counts[1] + counts[2] == report.n_stop
        assert abs(counts[1] - counts[2]) <= 1

    def test_ess_at_stop_meets_threshold(self):
        sampler = make_flip_chain(FlipChainSpec(0.25, 0.5))
        cfg = StopConfig(epsilon=0.05, n0=100, n_start=100)
        report = run_until_stop(sampler, cfg, rng_from(88))
        assert report.ess_at_stop >= 0.8 * ess_threshold(0.10, 1, 0.05)

    def test_report_serialization(self, tmp_path):
        sampler = make_flip_chain(FlipChainSpec(0.25, 0.5))
        cfg = StopConfig(epsilon=0.2, n0=100, n_start=100)
        report = run_until_stop(sampler, cfg, rng_from(89))
        doc = report.to_json()
        assert doc["n_stop"] == report.n_stop
        assert len(doc["checks"]) == len(report.checks)
        path = tmp_path / "checks.csv"
        report.checks_to_csv(str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == "n,lhs,rhs,holds"
        assert len(lines) == len(report.checks) + 1


class TestEssThreshold:
    def test_frozen_values(self):
        assert ess_threshold(0.10, 2, 0.05) == pytest.approx(5786.8, abs=0.5)
        assert ess_threshold(0.10, 1, 0.05) == pytest.approx(4328.9, abs=0.5)

    def test_epsilon_scaling(self):
        assert ess_threshold(0.10, 2, 0.025) == pytest.approx(
            4.0 * ess_threshold(0.10, 2, 0.05), rel=1e-12)

    def test_domain(self):
        with pytest.raises(ValueError):
            ess_threshold(0.10, 2, 0.0)
