import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.analytic_solutions import PSI0, ProbeSpec
from artifact.errors import AssumptionError, ConfigError
from artifact.probe_reconstruction import (
    CoverageError,
    ExtrapolationError,
    MeasurementRecord,
    SolverConfig,
    extrapolate_eta1,
    frequency_sweep,
    geometric_epsilons,
    least_squares_reconstruct,
    measure,
    piecewise_linear_eta1,
    pinned_exponent,
    probe_setup,
    recover_coefficients,
    run_probe_experiment,
    t1_of,
)
from artifact.transport_kernel import BoundaryTrace, probe_inflow, run_forward

from conftest import make_spec

TINY = SolverConfig(20, 60, 4.0, 0.01, 4, 6, 2, 6, 3)
SMALL = SolverConfig(50, 150, 4.0, 2e-3, 4, 6, 2, 6, 3)


def _trace(values, dt=0.01, n=401, w_mu=(0.5, 0.5), w_omega=(1.0, 2.0)):
    times = np.arange(n) * dt
    h = np.broadcast_to(np.asarray(values, dtype=float), (n, len(w_mu), len(w_omega))).copy()
    return BoundaryTrace(times, h, np.array([0.3, 0.7]), np.array(w_mu), np.array([1.0, 2.0]), np.array(w_omega), dt)


# -- measurement ----------------------------------------------------------


def test_measure_of_zero_trace():
    assert measure(_trace(0.0), 2.0, 0.2) == 0.0


def test_measure_of_constant_trace_equals_window_mass():
    # sum over the window of dt psi0 is eps to high accuracy; weights sum to 1 * 3
    c = 2.5
    assert measure(_trace(c, dt=1e-3, n=4001), 2.0, 0.2) == pytest.approx(c * 0.2 * 3.0, rel=1e-10)


def test_measure_ignores_signal_outside_window():
    tr = _trace(0.0)
    tr.outgoing[:100] = 7.0
    tr.outgoing[300:] = -1.0
    assert measure(tr, 2.0, 0.2) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-5, max_value=5), st.floats(min_value=-5, max_value=5))
def test_measure_is_linear(a, b):
    rng = np.random.default_rng(0)
    x, y = _trace(0.0), _trace(0.0)
    x.outgoing[:] = rng.random(x.outgoing.shape)
    y.outgoing[:] = rng.random(y.outgoing.shape)
    z = _trace(0.0)
    z.outgoing[:] = a * x.outgoing + b * y.outgoing
    lhs = measure(z, 2.0, 0.3)
    rhs = a * measure(x, 2.0, 0.3) + b * measure(y, 2.0, 0.3)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_measure_raw_array_and_coverage():
    tr = _trace(1.0)
    raw = measure(tr.outgoing, 2.0, 0.2, times=tr.times, dt=tr.dt, w_mu=tr.w_mu, w_omega=tr.w_omega)
    assert raw == measure(tr, 2.0, 0.2)
    with pytest.raises(ConfigError):
        measure(tr.outgoing, 2.0, 0.2)
    with pytest.raises(CoverageError):
        measure(tr, 3.9, 0.2)
    with pytest.raises(ConfigError):
        measure(tr, 2.0, 0.0)
    assert measure(tr, 2.0, 0.2, PSI0) == measure(tr, 2.0, 0.2)


def test_echo_time():
    m = make_spec().build()
    assert t1_of(ProbeSpec(0.5, 2.0, 0.1), m) == pytest.approx(4.0)
    assert t1_of(ProbeSpec(0.8, 2.0, 0.1), m) == pytest.approx(2.5)


def test_geometric_epsilons():
    np.testing.assert_allclose(geometric_epsilons(0.2), [0.2, 0.14, 0.098, 0.0686])
    with pytest.raises(ConfigError):
        geometric_epsilons(0.2, ratio=1.0)


# -- extrapolation ----------------------------------------------------------


def _records(values, eps):
    return [MeasurementRecord(e, 1.0, v, 1.0, v) for e, v in zip(eps, values)]


EPS = np.array([0.2, 0.14, 0.098, 0.0686])


@pytest.mark.parametrize("q", [0.3, 0.5, 1.0])
def test_extrapolation_recovers_synthetic_limit(q):
    res = extrapolate_eta1(_records(0.6 + 0.3 * EPS**q, EPS))
    assert res.eta1_estimate == pytest.approx(0.6, abs=1e-10)
    assert res.fit_exponent == pytest.approx(q, abs=1e-6)


def test_pinned_exponent_fit():
    q = pinned_exponent(1.25)
    assert q == pytest.approx(0.4)
    res = extrapolate_eta1(_records(0.45 - 0.2 * EPS**q, EPS), pin_q=True)
    assert res.eta1_estimate == pytest.approx(0.45, abs=1e-12)
    assert res.pinned and res.fit_exponent == q
    with pytest.raises(ConfigError):
        pinned_exponent(1.5)


def test_constant_records():
    res = extrapolate_eta1(_records([0.3] * 4, EPS), pin_q=True)
    assert res.eta1_estimate == pytest.approx(0.3, abs=1e-12)
    assert res.fit_slope == pytest.approx(0.0, abs=1e-12)


def test_extrapolation_needs_three_widths():
    with pytest.raises(ExtrapolationError):
        extrapolate_eta1(_records([0.6, 0.7], EPS[:2]))
    with pytest.raises(ExtrapolationError):
        extrapolate_eta1(_records([0.6, 0.7, 0.8], [0.2, 0.2, 0.1]))
    with pytest.raises(ExtrapolationError):
        extrapolate_eta1(_records([0.6, math.nan, 0.8], [0.2, 0.15, 0.1]))


def test_result_rows():
    res = extrapolate_eta1(_records(0.6 + 0.1 * EPS, EPS), gamma0=2.0, omega0=2.0)
    row = res.coefficient_row()
    assert row["eta2"] == pytest.approx(0.4)
    assert row["zeta1"] == pytest.approx(0.2)
    assert row["zeta2"] == pytest.approx(0.8)
    assert not res.flagged
    assert res.as_dict()["fit"]["pinned"] is False
    assert recover_coefficients(1.0, 3.0) == (0.0, 0.0, 1.0)


def test_record_round_trip():
    r = MeasurementRecord(0.1, 4.0, 0.3, 0.5, 0.6, 0.6, {"f0": 0.2})
    back = MeasurementRecord.from_dict(r.as_dict())
    assert back.as_dict() == r.as_dict()
    with pytest.raises(ConfigError):
        MeasurementRecord.from_dict({"epsilon": 0.1})
    with pytest.raises(ConfigError):
        MeasurementRecord(0.1, 1.0, 1.0, 0.0, 1.0)


# -- experiment ---------------------------------------------------------------


def test_setup_checks(spec):
    with pytest.raises(AssumptionError, match="need L >= 3.5"):
        probe_setup(spec, 0.6, 1.0, 0.5, 2.0, 0.2, SolverConfig(20, 40, 3.0, 0.01))
    with pytest.raises(ConfigError, match="under-resolved"):
        probe_setup(spec, 0.6, 1.0, 0.8, 2.0, 0.03, TINY)
    s = probe_setup(spec, 0.6, 1.0, 0.8, 2.0, 0.2, TINY)
    assert s.n_steps == 270
    assert s.C > 0.0


def test_experiment_argument_errors(spec):
    with pytest.raises(ConfigError, match="decreasing"):
        run_probe_experiment(spec, 0.6, 1.0, 0.8, 2.0, [0.1, 0.2], TINY)
    with pytest.raises(ConfigError, match="empty"):
        run_probe_experiment(spec, 0.6, 1.0, 0.8, 2.0, [], TINY)


def test_experiment_records_are_consistent(spec):
    recs = run_probe_experiment(spec, 0.6, 1.0, 0.8, 2.0, [0.2, 0.15], TINY, channels=("f0", "f1"), keep_trace=True)
    for r in recs:
        assert r.eta1_raw == pytest.approx(r.M_value / r.C_value)
        assert r.components["f0"] + r.components["f1"] == pytest.approx(r.M_value, rel=1e-9)
        assert r.t1 == pytest.approx(2.5)
        assert r.trace is not None
        assert measure(r.trace, r.t1, r.epsilon) == pytest.approx(r.M_value, rel=1e-12)


def test_sweep_empty_and_isolated_failure(spec):
    assert frequency_sweep(spec, 0.6, 1.0, 0.8, [], [0.2, 0.15, 0.12], TINY) == []
    entries = frequency_sweep(spec, 0.6, 1.0, 0.8, [29.9], [0.2, 0.15, 0.12], TINY)
    assert not entries[0].ok and entries[0].exit_code == 2


def test_sweep_constant_profile(spec):
    entries = frequency_sweep(spec, 0.4, 1.0, 0.8, [1.5, 2.5], [0.2, 0.14, 0.098], SMALL)
    for e in entries:
        assert e.ok, e.error
        row = e.result.coefficient_row()
        assert row["eta1"] + row["eta2"] == pytest.approx(1.0)
    # identical physics at both frequencies up to the grid
    a, b = (e.result.eta1_estimate for e in entries)
    assert a == pytest.approx(b, abs=0.05)


@pytest.mark.slow
def test_sweep_follows_increasing_profile(spec):
    prof = 'tanh_profile:{"low": 0.3, "high": 0.7, "center": 2.0, "width": 0.5}'
    from artifact.interface_model import eta1_profile_from_config

    eta = eta1_profile_from_config(prof, 30.0)
    entries = frequency_sweep(spec, eta, 1.0, 0.8, [1.5, 2.0, 2.5], [0.2, 0.14, 0.098], SMALL)
    est = [e.result.eta1_estimate for e in entries]
    assert est[0] < est[1] < est[2]


# -- least squares ------------------------------------------------------------


@pytest.fixture(scope="module")
def observed(spec):
    s = probe_setup(spec, 0.6, 1.0, 0.8, 2.0, 0.2, TINY)
    tr = run_forward(s.m, s.coeffs, probe_inflow(s.probe), s.n_steps * s.dt, s.dt, s.grid, s.q)
    return s, tr


def test_least_squares_exact_start(observed):
    res = least_squares_reconstruct([observed], 1.0, 0.6)
    assert res.status == "converged"
    assert res.misfit == 0.0
    assert res.evaluations == 1


def test_least_squares_recovers_from_offset_start(observed):
    res = least_squares_reconstruct([observed], 1.0, 0.5)
    assert res.status == "converged"
    assert res.values[0] == pytest.approx(0.6, abs=1e-3)
    assert res.misfit_history[-1] <= res.misfit_history[0]


def test_least_squares_with_noise_is_seeded(observed):
    a = least_squares_reconstruct([observed], 1.0, 0.5, noise=0.01, seed=7)
    b = least_squares_reconstruct([observed], 1.0, 0.5, noise=0.01, seed=7)
    assert a.values[0] == b.values[0]
    assert a.values[0] == pytest.approx(0.6, abs=0.05)


def test_least_squares_argument_errors(observed):
    with pytest.raises(ConfigError):
        least_squares_reconstruct([], 1.0, 0.5)
    with pytest.raises(ConfigError):
        least_squares_reconstruct([observed], 1.0, [0.5, 0.6])
    with pytest.raises(ConfigError):
        least_squares_reconstruct([observed], 1.0, [0.5, 0.6], knots=[1.0])


def test_piecewise_profile():
    f = piecewise_linear_eta1([1.0, 3.0], [0.2, 0.6])
    np.testing.assert_allclose(f(np.array([0.0, 2.0, 5.0])), [0.2, 0.4, 0.6])
    assert piecewise_linear_eta1([0.0], [0.3])(np.ones(3)).tolist() == [0.3] * 3
