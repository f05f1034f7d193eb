import math

import numpy as np
import pytest

from artifact.analytic_solutions import ProbeSpec
from artifact.errors import ConfigError
from artifact.estimate_suite import (
    Check,
    EstimateReport,
    Tolerances,
    assumption_audit,
    collect_run,
    l1_budget,
    lp_bound,
    maximum_principle,
    minimal_length,
)
from artifact.interface_model import derive_coefficients
from artifact.spectral_material import build_angular_quadrature
from artifact.transport_kernel import SpatialGrid, equilibrium_inflow, zero_inflow

from conftest import make_spec

GRID = SpatialGrid(20, 60, 4.0)
DT = 0.02


@pytest.fixture(scope="module")
def small():
    m = make_spec(n_omega=8).build()
    q = build_angular_quadrature(4)
    return m, q, derive_coefficients(0.6, 1.0, m, q)


def _run(small, phi, T=2.0, **kw):
    m, q, co = small
    return collect_run(m, co, q, GRID, DT, phi, T, **kw)


def test_check_semantics():
    assert Check("a", 1.0, 1.0005, 1e-3).passed
    assert not Check("a", 1.0, 1.002, 1e-3).passed
    assert Check("a", 1.0, 1.5, 0.0).margin == pytest.approx(-0.5)
    assert Check("b", 0.0, -1e-13, 0.0, "lower", scale=1.0).passed is False
    assert Check("b", -1e-12, -1e-13, 0.0, "lower", scale=1.0).passed
    assert not Check("c", math.inf, 1.0).passed
    assert Check("d", 2.0, 2.3, 0.1, scale=4.0).passed


def test_report_access_and_json():
    r = EstimateReport([Check("x", 1.0, 0.5)], {"k": 1}) + EstimateReport([Check("y", 1.0, 2.0)])
    assert r["x"].passed and not r["y"].passed and not r.passed
    with pytest.raises(KeyError):
        r["z"]
    assert '"passed": false' in r.to_json()
    assert "FAIL" in r.table()


def test_zero_input_gives_zero_sides(small):
    run = _run(small, zero_inflow(), lp=(2.0,))
    rep = l1_budget(run) + lp_bound(run, 2.0) + maximum_principle(run, 0.0)
    assert rep.passed
    assert rep["l1_budget"].measured == 0.0 and rep["l1_budget"].bound == 0.0
    assert rep["lp_bound_p2"].measured == 0.0


def test_saturation_run_approaches_bound_from_below(small):
    m0 = 3.0
    run = _run(small, equilibrium_inflow(small[0], m0), T=8.0, record_every=10)
    rep = maximum_principle(run, m0)
    assert rep.passed, rep.table()
    assert rep["min_value"].measured >= 0.0
    assert 0.5 * m0 < rep["max_f_over_xi"].measured <= m0 * (1 + 1e-6)
    assert l1_budget(run).passed


def test_maximum_principle_preconditions(small):
    run = _run(small, equilibrium_inflow(small[0], -1.0), T=0.2)
    with pytest.raises(ConfigError, match="nonnegative"):
        maximum_principle(run, 1.0)
    run = _run(small, equilibrium_inflow(small[0], 2.0), T=0.2)
    with pytest.raises(ConfigError, match="exceeds"):
        maximum_principle(run, 1.0)
    run = _run(small, zero_inflow(), T=0.2, track_extremes=False)
    with pytest.raises(ConfigError, match="track_extremes"):
        maximum_principle(run, 1.0)


def test_lp_argument_errors(small):
    run = _run(small, zero_inflow(), T=0.2, lp=(2.0,))
    with pytest.raises(ConfigError):
        lp_bound(run, 1.0)
    with pytest.raises(ConfigError, match="did not record"):
        lp_bound(run, 3.0)
    with pytest.raises(ConfigError):
        l1_budget(_run(small, zero_inflow(), T=0.2, record_every=0))


def test_lp_near_one_matches_l1_mass(small):
    p = 1.0 + 1e-7
    run = _run(small, equilibrium_inflow(small[0]), T=1.0, lp=(p,), record_every=5)
    rec = run.records
    mass = np.asarray(rec.l1_f) + np.asarray(rec.l1_g)
    np.testing.assert_allclose(rec.lp[p], mass, rtol=1e-4)
    np.testing.assert_allclose(rec.injected_lp[p], rec.injected_l1, rtol=1e-4)
    assert lp_bound(run, p)["lp_bound_p1"].detail["factor"] == pytest.approx(2.0, rel=1e-6)


def test_reports_are_deterministic(small):
    a = _run(small, equilibrium_inflow(small[0]), T=1.0)
    b = _run(small, equilibrium_inflow(small[0]), T=1.0)
    ra = (l1_budget(a) + lp_bound(a, 2.0)).to_json()
    rb = (l1_budget(b) + lp_bound(b, 2.0)).to_json()
    assert ra == rb


def test_audit_length_boundary_case():
    m = make_spec().build()
    p = ProbeSpec(0.5, 2.0, 0.1)
    assert minimal_length(m, 0.5, 2.0) == pytest.approx(3.5)
    assert assumption_audit(m, p, SpatialGrid(10, 25, 3.5)).passed
    short = assumption_audit(m, p, SpatialGrid(10, 10, 2.0))
    assert not short.passed
    assert short["right_layer_length"].detail["L_min"] == pytest.approx(3.5)
    assert short.meta["L_min"] == pytest.approx(3.5)


def test_audit_flags_exponent_and_reports_tau_floor():
    tau = lambda w: 2.0 + np.asarray(w)  # noqa: E731
    m = make_spec(tau=tau, p0=1.6).build()
    rep = assumption_audit(m, ProbeSpec(0.5, 2.0, 0.1), SpatialGrid(10, 30, 4.0))
    assert not rep["p0_in_range"].passed
    assert rep["tau_floor"].passed
    assert rep["tau_floor"].measured == pytest.approx(m.tau.min())


def test_tolerance_defaults():
    t = Tolerances()
    assert (t.integral, t.pointwise, t.lower) == (1e-3, 1e-6, 1e-12)
