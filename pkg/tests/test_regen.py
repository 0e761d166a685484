import io

import numpy as np
import pytest

from cyclicmc import regen
from cyclicmc.regen import (
    InsufficientTours,
    MinorizedKernel,
    NoRegeneration,
    RatioOutOfRange,
    matrix_minorized_kernel,
    run_split_chain,
    tours,
)
from cyclicmc.samplers import THREE_STATE_P, three_state_stationary

import oracles
from conftest import rng_from


@pytest.fixture(scope="module")
def three_state_run():
    kernel = matrix_minorized_kernel(THREE_STATE_P)
    states, bells = run_split_chain(kernel, 0, 3 * 10**5, rng_from(51))
    return kernel, states, bells


def test_never_ringing_kernel_gives_no_tours():
    kernel = matrix_minorized_kernel(THREE_STATE_P)
    silent = MinorizedKernel(step=kernel.step, ratio=lambda u, v: 0.0,
                             h=lambda u: 0.0)
    states, bells = run_split_chain(silent, 0, 500, rng_from(52))
    assert bells.sum() == 0
    with pytest.raises(NoRegeneration):
        tours(states, bells, lambda u, v: float(v))


def test_iid_chain_rings_every_step():
    pi = three_state_stationary()
    kernel = matrix_minorized_kernel(np.tile(pi, (3, 1)))
    states, bells = run_split_chain(kernel, 0, 400, rng_from(53))
    assert bells.all()
    records = tours(states, bells, lambda u, v: float(v == 0))
    assert len(records) == 399
    assert all(r.length == 1 for r in records)


def test_ratio_out_of_range_detected():
    kernel = matrix_minorized_kernel(THREE_STATE_P)
    broken = MinorizedKernel(step=kernel.step, ratio=lambda u, v: 1.5,
                             h=lambda u: 0.7)
    with pytest.raises(RatioOutOfRange):
        run_split_chain(broken, 0, 100, rng_from(54))


def test_three_state_ratio_formula():
    kernel = matrix_minorized_kernel(THREE_STATE_P)
    mincol = THREE_STATE_P.min(axis=0)
    for u in range(3):
        assert kernel.h(u) == pytest.approx(0.7)
        for v in range(3):
            expected = mincol[v] / THREE_STATE_P[u, v]
            assert kernel.ratio(u, v) == pytest.approx(expected)
            assert 0.0 <= kernel.ratio(u, v) <= 1.0


def test_tour_index_arithmetic():
    # bells = [0,1,0,0,1]: regenerations at t=2 and t=5, one tour of length 3
    states = list(range(6))
    bells = np.array([0, 1, 0, 0, 1], dtype=bool)
    records = tours(states, bells, lambda u, v: float(v))
    assert len(records) == 1
    rec = records[0]
    assert rec.start == 2 and rec.length == 3
    assert rec.y[0] == states[3] + states[4] + states[5]


def test_tour_centering():
    states = list(range(6))
    bells = np.array([0, 1, 0, 0, 1], dtype=bool)
    rec = tours(states, bells, lambda u, v: float(v), k=2, theta=1.5)[0]
    assert rec.y_centered[0] == pytest.approx(rec.y[0] - 2 * 1.5 * 3)


def test_bell_on_final_transition_ok():
    states = list(range(5))
    bells = np.array([1, 0, 0, 1], dtype=bool)
    records = tours(states, bells, lambda u, v: float(v))
    assert len(records) == 1
    assert records[0].start == 1 and records[0].length == 3


def test_kac_identity_three_state(three_state_run):
    kernel, states, bells = three_state_run
    report = regen.kac_check(states, bells, kernel.h)
    assert report.inv_pi_h == pytest.approx(1.0 / 0.7)
    assert abs(report.mean_tour - 1.0 / 0.7) <= 0.01 * (1.0 / 0.7)
    assert report.ok


def test_tour_mean_identity_three_state(three_state_run):
    kernel, states, bells = three_state_run
    pi = three_state_stationary()
    records = tours(states, bells, lambda u, v: float(v == 0), k=1,
                    theta=pi[0])
    report = regen.tour_identity_check(records, k=1, theta=pi[0])
    assert report.ok
    assert np.all(np.abs(report.lag2_corr) < 0.02)


def test_tour_lengths_look_independent(three_state_run):
    kernel, states, bells = three_state_run
    taus = np.diff(regen.regeneration_times(bells)).astype(float)
    lag1 = np.corrcoef(taus[:-1], taus[1:])[0, 1]
    assert abs(lag1) <= 4.0 / np.sqrt(taus.size)


def test_tour_length_law_ignores_initial_state():
    kernel = matrix_minorized_kernel(THREE_STATE_P)
    _, bells_a = run_split_chain(kernel, 0, 2 * 10**5, rng_from(55))
    _, bells_b = run_split_chain(kernel, 2, 2 * 10**5, rng_from(56))
    ta = np.diff(regen.regeneration_times(bells_a)).astype(float)
    tb = np.diff(regen.regeneration_times(bells_b)).astype(float)
    d = oracles.ks_two_sample(ta, tb)
    assert d < oracles.ks_critical(ta.size, tb.size, alpha=0.01)


def test_insufficient_tours_raises():
    states = list(range(6))
    bells = np.array([0, 1, 0, 0, 1], dtype=bool)
    records = tours(states, bells, lambda u, v: float(v))
    with pytest.raises(InsufficientTours):
        regen.tour_identity_check(records, k=1, theta=0.0)


def test_tours_csv_format(three_state_run):
    kernel, states, bells = three_state_run
    records = tours(states, bells, lambda u, v: float(v == 0))[:10]
    buf = io.StringIO()
    regen.tours_to_csv(records, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "i,T_i,tau_i,Y_1"
    assert len(lines) == 11
    first = lines[1].split(",")
    assert int(first[0]) == 1
    assert int(first[1]) == records[0].start
    assert int(first[2]) == records[0].length


def test_matrix_kernel_validates_input():
    with pytest.raises(ValueError):
        matrix_minorized_kernel(np.array([[0.5, 0.4], [0.5, 0.5]]))
