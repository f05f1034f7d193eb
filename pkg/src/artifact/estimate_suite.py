"""Numerical checks of the a-priori bounds and of the probe assumptions.

Every check compares a measured quantity with a bound and reports the
relative margin.  The checks read the diagnostics a TransportSolver
collects while it steps (see ``collect_run``).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .analytic_solutions import ProbeSpec
from .errors import ConfigError
from .interface_model import InterfaceCoefficients
from .spectral_material import AngularQuadrature, MaterialModel
from .transport_kernel import Inflow, RunRecords, SpatialGrid, TransportSolver

__all__ = [
    "Tolerances",
    "Check",
    "EstimateReport",
    "RunArtifacts",
    "collect_run",
    "l1_budget",
    "maximum_principle",
    "lp_bound",
    "assumption_audit",
    "minimal_length",
]


@dataclass(frozen=True)
class Tolerances:
    integral: float = 1e-3
    pointwise: float = 1e-6
    lower: float = 1e-12


@dataclass
class Check:
    """One comparison of a measured quantity with a bound.

    ``upper`` passes iff measured <= bound + tolerance * scale, ``lower``
    iff measured >= bound - tolerance * scale.  ``scale`` defaults to
    |bound|, making the tolerance relative; the margin uses the same scale.
    """

    name: str
    bound: float
    measured: float
    tolerance: float = 0.0
    kind: str = "upper"
    detail: dict = field(default_factory=dict)
    scale: float | None = None

    @property
    def _scale(self) -> float:
        return abs(self.bound) if self.scale is None else self.scale

    @property
    def margin(self) -> float:
        gap = self.bound - self.measured if self.kind == "upper" else self.measured - self.bound
        return gap / self._scale if self._scale > 0.0 else gap

    @property
    def passed(self) -> bool:
        if not (math.isfinite(self.bound) and math.isfinite(self.measured)):
            return False
        slack = self.tolerance * self._scale
        if self.kind == "upper":
            return self.measured <= self.bound + slack
        return self.measured >= self.bound - slack

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(margin=self.margin, passed=self.passed)
        return d


@dataclass
class EstimateReport:
    checks: list
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __add__(self, other: "EstimateReport") -> "EstimateReport":
        return EstimateReport(self.checks + other.checks, {**self.meta, **other.meta})

    def as_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.as_dict() for c in self.checks], "meta": self.meta}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True, default=float)

    def table(self) -> str:
        rows = [f"{'check':<28}{'measured':>15}{'bound':>15}{'margin':>12}  status"]
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            rows.append(f"{c.name:<28}{c.measured:>15.6e}{c.bound:>15.6e}{c.margin:>12.3e}  {status}")
        return "\n".join(rows)


@dataclass
class RunArtifacts:
    """What the checks need from one forward run."""

    records: RunRecords
    m: MaterialModel
    coeffs: InterfaceCoefficients
    q: AngularQuadrature
    phi: Inflow
    lp: tuple
    tracked_extremes: bool
    meta: dict = field(default_factory=dict)


def collect_run(
    m: MaterialModel,
    coeffs: InterfaceCoefficients,
    q: AngularQuadrature,
    grid: SpatialGrid,
    dt: float,
    phi: Inflow,
    T_end: float,
    *,
    record_every: int = 1,
    lp=(2.0,),
    track_extremes: bool = True,
) -> RunArtifacts:
    """Run from zero data to ``T_end`` with the diagnostics switched on."""
    n_steps = int(round(T_end / dt))
    if n_steps < 1:
        raise ConfigError("T_end must cover at least one step")
    solver = TransportSolver(
        m, coeffs, q, grid, dt, phi, record_every=record_every, lp=lp, track_extremes=track_extremes
    )
    for _ in range(n_steps):
        solver.step()
    meta = {"T_end": n_steps * dt, "dt": dt, "nx_left": grid.nx_left, "nx_right": grid.nx_right, "L": grid.L}
    return RunArtifacts(solver.records, m, coeffs, q, phi, tuple(solver.lp), track_extremes, meta)


def l1_budget(run: RunArtifacts, tol: Tolerances = Tolerances()) -> EstimateReport:
    """Total L1 mass against the injected mass and the injected boundary flux.

    Both bounds are evaluated at every recorded time; the tighter one is
    the check, the other is reported alongside.
    """
    rec = run.records
    if not rec.norm_times:
        raise ConfigError("no norm records: run with record_every > 0")
    mass = np.asarray(rec.l1_f) + np.asarray(rec.l1_g)
    norm_b = np.asarray(rec.injected_l1)
    flux_b = np.asarray(rec.injected_flux)
    which = "flux" if flux_b[-1] <= norm_b[-1] else "norm"
    tight = flux_b if which == "flux" else norm_b
    other = norm_b if which == "flux" else flux_b
    check = _worst_time("l1_budget", rec.norm_times, mass, tight, tol.integral)
    check.detail.update(
        tighter=which,
        other_bound=_worst_time("other", rec.norm_times, mass, other, tol.integral).as_dict(),
        final={"mass": float(mass[-1]), "norm": float(norm_b[-1]), "flux": float(flux_b[-1])},
    )
    return EstimateReport([check], run.meta)


def _worst_time(name: str, times, measured: np.ndarray, bound: np.ndarray, tol: float) -> Check:
    """Time-resolved upper check with slack tol * (largest bound of the run).

    Early in an injection both sides are tiny and dominated by the
    interpolation error of the leading tail of the pulse, so the slack is
    scaled by the size of the run rather than by the instantaneous bound.
    The pointwise relative excess is kept in the detail.
    """
    scale = float(np.max(np.abs(bound))) if bound.size else 0.0
    excess = measured - bound
    # times where both sides vanish carry no information
    live = (bound != 0.0) | (measured != 0.0)
    k = int(np.argmax(np.where(live, excess, -np.inf))) if live.any() else 0
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(bound > 0, excess / bound, np.where(excess > 0, np.inf, 0.0))
    detail = {
        "time": float(times[k]),
        "scale": scale,
        "worst_pointwise_relative_excess": float(np.max(rel)),
    }
    return Check(name, float(bound[k]), float(measured[k]), tol, detail=detail, scale=scale)


def maximum_principle(run: RunArtifacts, m0: float, tol: Tolerances = Tolerances()) -> EstimateReport:
    """Sign and upper bounds 0 <= f <= m0 xi, 0 <= g <= gamma0 m0 xi.

    Raises ConfigError when the input violates 0 <= phi <= m0 xi (a
    precondition, not a failed check).
    """
    if not run.tracked_extremes:
        raise ConfigError("maximum principle needs a run with track_extremes=True")
    phi = run.phi
    if not getattr(phi, "nonnegative", False):
        raise ConfigError("maximum principle precondition: the incoming data is not declared nonnegative")
    sup = getattr(phi, "sup_ratio", None)
    if sup is None:
        raise ConfigError("maximum principle precondition: incoming data has no sup(phi/xi)")
    ratio = float(sup(run.m, run.q.mu))
    if ratio > m0 * (1.0 + 1e-12):
        raise ConfigError(f"maximum principle precondition: sup phi/xi = {ratio} exceeds m0 = {m0}")
    rec = run.records
    g0 = run.coeffs.gamma0
    checks = [
        # the sign bound is absolute, with room for rounding only
        Check("min_value", -tol.lower, rec.min_value, 0.0, "lower", scale=1.0),
        Check("max_f_over_xi", m0, rec.max_ratio_f, tol.pointwise, detail={"sup_phi_over_xi": ratio}),
        Check("max_g_over_xi", g0 * m0, rec.max_ratio_g, tol.pointwise),
    ]
    return EstimateReport(checks, {**run.meta, "m0": m0})


def lp_bound(run: RunArtifacts, p: float, tol: Tolerances = Tolerances()) -> EstimateReport:
    """Weighted L^p norm against (1 + gamma0)^(1/p) times the injected L^p norm."""
    if not 1.0 < p < math.inf:
        raise ConfigError(f"p must lie in (1, inf), got {p}")
    if np.any(run.m.xi <= 0.0):
        raise ConfigError("the weighted L^p check needs xi > 0 at every node")
    rec = run.records
    if p not in rec.lp:
        raise ConfigError(f"run did not record p = {p}; recorded {sorted(rec.lp)}")
    factor = (1.0 + run.coeffs.gamma0) ** (1.0 / p)
    measured = np.asarray(rec.lp[p])
    bound = factor * np.asarray(rec.injected_lp[p])
    check = _worst_time(f"lp_bound_p{p:g}", rec.norm_times, measured, bound, tol.integral)
    check.detail["factor"] = factor
    return EstimateReport([check], run.meta)


def minimal_length(m: MaterialModel, mu0: float, omega0: float) -> float:
    """Smallest right-layer end L for which the echo from x = L misses the window."""
    v0 = m.v0
    return v0 / (mu0 * m.interp("v", omega0)) + 0.5 * v0 + 1.0


def assumption_audit(m: MaterialModel, p: ProbeSpec, grid: SpatialGrid) -> EstimateReport:
    """Velocity bound, the integrability exponent, the relaxation floor and the layer length."""
    v_ok = bool(np.all(np.isfinite(m.v)) and np.all(np.isfinite(m.v_prime)))
    integral = float(np.sum(m.w * m.xi / m.tau * m.v ** (-1.0 / m.p0))) if np.all(m.v > 0) else math.inf
    L_min = minimal_length(m, p.mu0, p.omega0)
    checks = [
        Check("velocity_bound", math.inf if not v_ok else 1e300, m.v0 if v_ok else math.inf,
              detail={"v0": m.v0, "differentiable_table": v_ok}),
        Check("p0_in_range", 1.5, m.p0, detail={"lower": 1.0}),
        Check("p0_integral", 1e300, integral, detail={"p0": m.p0}),
        Check("tau_floor", 0.0, m.tau0, kind="lower", detail={"tau0": m.tau0}),
        Check("right_layer_length", L_min, grid.L, kind="lower",
              detail={"L_min": L_min, "mu0": p.mu0, "omega0": p.omega0}),
    ]  # fmt: skip
    # p0 must be strictly inside (1, 3/2)
    if not 1.0 < m.p0 < 1.5:
        checks[1].measured = math.inf
    if not m.tau0 > 0.0:
        checks[3].measured = -math.inf
    return EstimateReport(checks, {"L_min": L_min})
