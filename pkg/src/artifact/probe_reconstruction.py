"""Probe experiments with windowed measurement and recovery of the interface coefficients.

The explicit route injects a concentrated probe, windows the returning
surface signal around the echo time t1 and divides by the limit constant
C; repeating this for shrinking probe widths and extrapolating gives
eta1 at the probe frequency.  A derivative-free least-squares inversion
against the forward solver is provided as a baseline.
"""

from __future__ import annotations

import math
import multiprocessing as mp
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares

from .analytic_solutions import PSI0, BumpFunction, ProbeSpec, c_constant, make_probe
from .errors import ArtifactError, AssumptionError, ConfigError, NumericalError
from .estimate_suite import minimal_length
from .interface_model import InterfaceCoefficients, derive_coefficients
from .spectral_material import (
    AngularQuadrature,
    MaterialModel,
    MaterialSpec,
    probe_angular_quadrature,
    probe_spectral_grid,
)
from .transport_kernel import BoundaryTrace, RunRecords, SpatialGrid, TransportSolver, probe_inflow

__all__ = [
    "CoverageError",
    "ExtrapolationError",
    "SolverConfig",
    "ProbeSetup",
    "MeasurementRecord",
    "ReconstructionResult",
    "SweepEntry",
    "LeastSquaresResult",
    "measure",
    "t1_of",
    "geometric_epsilons",
    "probe_setup",
    "run_probe_experiment",
    "extrapolate_eta1",
    "recover_coefficients",
    "frequency_sweep",
    "piecewise_linear_eta1",
    "least_squares_reconstruct",
]


class CoverageError(ConfigError):
    """The trace does not cover the measurement window."""


class ExtrapolationError(NumericalError):
    """The eps -> 0 fit is not determined by the records."""


# ---------------------------------------------------------------------------
# measurement
# ---------------------------------------------------------------------------


def _window_weights(times: np.ndarray, t1: float, eps: float, psi0: BumpFunction) -> np.ndarray:
    return psi0((times - t1) / eps)


def measure(trace: BoundaryTrace | np.ndarray, t1: float, eps: float, psi0: BumpFunction = PSI0, *, times=None,
            dt=None, w_mu=None, w_omega=None) -> float:  # fmt: skip
    """Windowed surface measurement of an outgoing trace.

    sum_n dt psi0((t_n - t1)/eps) sum_i sum_w w_mu[i] w_omega[w] h[n, i, w]

    ``trace`` is a BoundaryTrace or a raw array ``h[n, i, w]``; for a raw
    array the time axis and the quadrature weights must be passed too.
    """
    if isinstance(trace, BoundaryTrace):
        h, times, dt, w_mu, w_omega = trace.outgoing, trace.times, trace.dt, trace.w_mu, trace.w_omega
    else:
        h = np.asarray(trace, dtype=float)
        if times is None or dt is None or w_mu is None or w_omega is None:
            raise ConfigError("measure: a raw array needs times, dt, w_mu and w_omega")
        times = np.asarray(times, dtype=float)
    if not eps > 0.0:
        raise ConfigError(f"measure: window half-width must be positive, got {eps}")
    slack = 1e-9 * max(1.0, abs(t1))
    if times.size == 0 or times[0] > t1 - eps + slack or times[-1] < t1 + eps - slack:
        span = (float(times[0]), float(times[-1])) if times.size else (math.nan, math.nan)
        raise CoverageError(f"trace covers {span} but the window is [{t1 - eps}, {t1 + eps}]")
    psi = _window_weights(times, t1, eps, psi0)
    inside = np.flatnonzero(psi)
    if inside.size == 0:
        return 0.0
    per_time = np.einsum("niw,i,w->n", h[inside], np.asarray(w_mu), np.asarray(w_omega))
    return float(dt * np.sum(psi[inside] * per_time))


def t1_of(p: ProbeSpec, m: MaterialModel) -> float:
    """Echo time 2/(mu0 v(omega0)) of the reflected probe."""
    return 2.0 / (p.mu0 * m.interp("v", p.omega0))


def geometric_epsilons(eps_max: float, count: int = 4, ratio: float = 0.7) -> list[float]:
    if not (eps_max > 0.0 and count >= 1 and 0.0 < ratio < 1.0):
        raise ConfigError("epsilon list needs eps_max > 0, count >= 1 and ratio in (0, 1)")
    return [eps_max * ratio**k for k in range(count)]


# ---------------------------------------------------------------------------
# experiment setup
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    """Discretization of one probe run.

    The angular and spectral rules are rebuilt for every probe width with
    panel breaks on the probe support; the ``n_*`` fields are the node
    counts of those panels.
    """

    nx_left: int = 400
    nx_right: int = 1200
    L: float = 4.0
    dt: float = 5e-4
    n_mu_outer: int = 8
    n_mu_probe: int = 6
    n_omega_below: int = 4
    n_omega_probe: int = 8
    n_omega_above: int = 6
    record_every: int = 0

    @property
    def grid(self) -> SpatialGrid:
        return SpatialGrid(self.nx_left, self.nx_right, self.L)


@dataclass
class ProbeSetup:
    m: MaterialModel
    q: AngularQuadrature
    coeffs: InterfaceCoefficients
    probe: ProbeSpec
    grid: SpatialGrid
    dt: float
    C: float

    @property
    def n_steps(self) -> int:
        return int(math.ceil((self.probe.t1 + self.probe.eps) / self.dt - 1e-9))


def _node_gap(nodes: np.ndarray, lo: float, hi: float) -> float:
    # widest gap between consecutive nodes inside [lo, hi], ends included
    inside = nodes[(nodes >= lo) & (nodes <= hi)]
    pts = np.concatenate([[lo], inside, [hi]])
    return float(np.max(np.diff(pts)))


def probe_setup(
    spec: MaterialSpec,
    eta1,
    gamma0: float,
    mu0: float,
    omega0: float,
    eps: float,
    solver: SolverConfig = SolverConfig(),
    *,
    check_assumption: bool = True,
) -> ProbeSetup:
    """Material, quadratures, coefficients and probe for one probe width.

    Raises AssumptionError when the right layer is too short for the
    echo from x = L to stay clear of the window, and ConfigError when the
    probe is not resolved (eps < 4 max(dt, node gaps on its support)).
    """
    q = probe_angular_quadrature(mu0, eps, solver.n_mu_outer, solver.n_mu_probe)
    sg = probe_spectral_grid(
        spec.omega_max, omega0, eps, solver.n_omega_below, solver.n_omega_probe, solver.n_omega_above
    )
    m = spec.build(sg)
    coeffs = derive_coefficients(eta1, gamma0, m, q)
    p = make_probe(mu0, omega0, eps, m)
    grid = solver.grid
    if check_assumption:
        L_min = minimal_length(m, mu0, omega0)
        if grid.L < L_min * (1.0 - 1e-12):
            raise AssumptionError(
                f"right layer too short for the probe at mu0={mu0}, omega0={omega0}: L = {grid.L}, "
                f"need L >= {L_min:.6g}"
            )
    resolution = max(solver.dt, _node_gap(q.mu, mu0, mu0 + eps), _node_gap(m.omega, omega0, omega0 + eps))
    if eps < 4.0 * resolution * (1.0 - 1e-12):
        raise ConfigError(f"probe width {eps} is under-resolved: need eps >= 4 x {resolution:.3g}")
    return ProbeSetup(m, q, coeffs, p, grid, solver.dt, c_constant(p, m))


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------


@dataclass
class MeasurementRecord:
    epsilon: float
    t1: float
    M_value: float
    C_value: float
    eta1_raw: float
    eta1_true: float = math.nan
    components: dict = field(default_factory=dict)
    records: RunRecords | None = None
    trace: BoundaryTrace | None = None
    seconds: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ConfigError("record epsilon must be positive")
        if not self.C_value > 0.0:
            raise ConfigError("record C must be positive")

    def as_dict(self) -> dict:
        d = {
            "epsilon": self.epsilon,
            "t1": self.t1,
            "M": self.M_value,
            "C": self.C_value,
            "M_over_C": self.eta1_raw,
        }
        if not math.isnan(self.eta1_true):
            d["eta1_true"] = self.eta1_true
        if self.components:
            d["components"] = dict(self.components)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementRecord":
        try:
            return cls(
                float(d["epsilon"]),
                float(d.get("t1", math.nan)),
                float(d["M"]),
                float(d["C"]),
                float(d.get("M_over_C", float(d["M"]) / float(d["C"]))),
                float(d.get("eta1_true", math.nan)),
                dict(d.get("components", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed measurement record: {exc}") from None


def _measure_run(setup: ProbeSetup, channels=(), keep_trace=False, psi0: BumpFunction = PSI0, **options):
    """One forward solve with the window sum accumulated while stepping."""
    p = setup.probe
    solver = TransportSolver(
        setup.m, setup.coeffs, setup.q, setup.grid, setup.dt, probe_inflow(p), channels=channels, **options
    )
    weights = np.outer(setup.q.w, setup.m.w)
    names = (None, *solver.channels)
    sums = dict.fromkeys(names, 0.0)
    n_steps = setup.n_steps
    stored = {c: np.empty((n_steps + 1, setup.q.n_half, setup.m.grid.n)) for c in names} if keep_trace else None

    def take(n):
        t = n * setup.dt
        psi = float(psi0((t - p.t1) / p.eps))
        for c in names:
            out = solver.outgoing(c)
            if psi:
                sums[c] += setup.dt * psi * float(np.sum(weights * out))
            if stored is not None:
                stored[c][n] = out

    take(0)
    for n in range(1, n_steps + 1):
        solver.step()
        take(n)
    trace = None
    if keep_trace:
        times = np.arange(n_steps + 1) * setup.dt
        trace = BoundaryTrace(
            times, stored[None], setup.q.mu.copy(), setup.q.w.copy(), setup.m.omega.copy(), setup.m.w.copy(),
            setup.dt, {c: stored[c] for c in solver.channels}, solver.records,
        )  # fmt: skip
    return sums, solver.records, trace


def _experiment_job(spec, eta1, gamma0, mu0, omega0, eps, solver, channels, keep_trace, options):
    start = time.perf_counter()
    setup = probe_setup(spec, eta1, gamma0, mu0, omega0, eps, solver)
    sums, records, trace = _measure_run(
        setup, channels, keep_trace, record_every=solver.record_every, **options
    )
    M = sums[None]
    eta_true = float(np.interp(omega0, setup.m.omega, setup.coeffs.eta1))
    return MeasurementRecord(
        eps, setup.probe.t1, M, setup.C, M / setup.C, eta_true,
        {c: v for c, v in sums.items() if c is not None}, records, trace, time.perf_counter() - start,
    )  # fmt: skip


# jobs are handed to forked workers through this table: material profiles
# are closures and do not pickle
_JOBS: list = []


def _run_job(index: int):
    fn, args = _JOBS[index]
    try:
        return fn(*args)
    except ArtifactError as exc:
        return exc


def _run_all(jobs: list, n_jobs: int) -> list:
    """Run ``(fn, args)`` jobs; failures come back as exception objects."""
    global _JOBS
    n_jobs = max(1, int(n_jobs or os.cpu_count() or 1))
    if n_jobs == 1 or len(jobs) <= 1 or "fork" not in mp.get_all_start_methods():
        out = []
        for fn, args in jobs:
            try:
                out.append(fn(*args))
            except ArtifactError as exc:
                out.append(exc)
        return out
    _JOBS = jobs
    try:
        with ProcessPoolExecutor(min(n_jobs, len(jobs)), mp_context=mp.get_context("fork")) as pool:
            return list(pool.map(_run_job, range(len(jobs))))
    finally:
        _JOBS = []


def run_probe_experiment(
    spec: MaterialSpec,
    eta1,
    gamma0: float,
    mu0: float,
    omega0: float,
    epsilons: Sequence[float],
    solver: SolverConfig = SolverConfig(),
    *,
    channels: Sequence[str] = (),
    keep_trace: bool = False,
    jobs: int = 1,
    **options,
) -> list[MeasurementRecord]:
    """Forward-solve and measure once per probe width.

    ``channels`` adds instrumentation of the ballistic part, the remainder
    and the right-layer part (see TransportSolver); their window sums land
    in ``MeasurementRecord.components``.  ``options`` go to the solver.
    """
    eps = [float(e) for e in epsilons]
    if not eps:
        raise ConfigError("empty epsilon list")
    if any(b >= a for a, b in zip(eps[:-1], eps[1:])):
        raise ConfigError(f"epsilon list must be strictly decreasing, got {eps}")
    # fail fast on setup errors before any solve
    for e in eps:
        probe_setup(spec, eta1, gamma0, mu0, omega0, e, solver)
    work = [
        (_experiment_job, (spec, eta1, gamma0, mu0, omega0, e, solver, tuple(channels), keep_trace, options))
        for e in eps
    ]
    results = _run_all(work, jobs)
    for r in results:
        if isinstance(r, Exception):
            raise r
    return results


# ---------------------------------------------------------------------------
# extrapolation
# ---------------------------------------------------------------------------


@dataclass
class ReconstructionResult:
    omega0: float
    eta1_estimate: float
    fit_exponent: float
    fit_slope: float
    residual: float
    records: list
    eta2: float
    zeta1: float
    zeta2: float
    gamma0: float
    pinned: bool = False

    @property
    def flagged(self) -> bool:
        """Estimate outside the soft bracket [-0.1, 1.1]."""
        return not (-0.1 <= self.eta1_estimate <= 1.1)

    def coefficient_row(self) -> dict:
        return {
            "omega0": self.omega0,
            "eta1": self.eta1_estimate,
            "eta2": self.eta2,
            "zeta1": self.zeta1,
            "zeta2": self.zeta2,
        }

    def as_dict(self) -> dict:
        return {
            "omega0": self.omega0,
            "eta1_estimate": self.eta1_estimate,
            "fit": {
                "exponent": self.fit_exponent,
                "slope": self.fit_slope,
                "residual": self.residual,
                "pinned": self.pinned,
            },
            "flagged": self.flagged,
            "gamma0": self.gamma0,
            "coefficients": self.coefficient_row(),
            "records": [r.as_dict() for r in self.records],
        }


def recover_coefficients(eta1: float, gamma0: float) -> tuple[float, float, float]:
    """(eta2, zeta1, zeta2) from eta1 through the conservation relations."""
    if not gamma0 > 0.0:
        raise ConfigError("gamma0 must be positive")
    zeta1 = (1.0 - eta1) / gamma0
    return 1.0 - eta1, zeta1, 1.0 - zeta1


def pinned_exponent(p0: float) -> float:
    """Remainder rate 1 - 3/p0' with p0' the conjugate of p0."""
    if not 1.0 < p0 < 1.5:
        raise ConfigError(f"p0 must lie in (1, 3/2), got {p0}")
    return 1.0 - 3.0 * (p0 - 1.0) / p0


def _fit_power(eps: np.ndarray, y: np.ndarray, q_fixed: float | None):
    """Fit y = a + b eps^q; returns (a, b, q, rms residual)."""
    if q_fixed is not None:
        A = np.column_stack([np.ones_like(eps), eps**q_fixed])
        if np.linalg.matrix_rank(A) < 2:
            raise ExtrapolationError("singular design: the probe widths do not separate the two terms")
        (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
        r = y - A @ np.array([a, b])
        return float(a), float(b), float(q_fixed), float(np.sqrt(np.mean(r**2)))

    # variable projection on a coarse grid of exponents gives the start
    def linear(q):
        A = np.column_stack([np.ones_like(eps), eps**q])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        return coef, float(np.sum((y - A @ coef) ** 2))

    grid = np.linspace(0.05, 1.0, 20)
    q0 = min(grid, key=lambda q: linear(q)[1])
    (a0, b0), _ = linear(q0)
    scale = max(1.0, float(np.max(np.abs(y))))
    sol = least_squares(
        lambda x: (x[0] + x[1] * eps ** x[2] - y) / scale,
        x0=[a0, b0, q0],
        bounds=([-np.inf, -np.inf, 1e-6], [np.inf, np.inf, 1.0]),
        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000,
    )  # fmt: skip
    if not sol.success or not np.all(np.isfinite(sol.x)):
        raise ExtrapolationError(f"power-law fit failed: {sol.message}")
    a, b, q = (float(v) for v in sol.x)
    r = a + b * eps**q - y
    return a, b, q, float(np.sqrt(np.mean(r**2)))


def extrapolate_eta1(
    records: Sequence[MeasurementRecord],
    *,
    gamma0: float = 1.0,
    omega0: float = math.nan,
    pin_q: bool = False,
    p0: float = 1.25,
) -> ReconstructionResult:
    """Extrapolate M/C to zero probe width with the model eta1 + b eps^q.

    The exponent is fitted in (0, 1] or, with ``pin_q``, fixed at the
    remainder rate 1 - 3/p0'.
    """
    records = list(records)
    eps = np.array([r.epsilon for r in records], dtype=float)
    if len(records) < 3 or np.unique(eps).size < 3:
        raise ExtrapolationError(f"need at least 3 records with distinct widths, got {np.unique(eps).size}")
    y = np.array([r.eta1_raw for r in records], dtype=float)
    if not np.all(np.isfinite(y)):
        raise ExtrapolationError("non-finite M/C in the records")
    a, b, q, res = _fit_power(eps, y, pinned_exponent(p0) if pin_q else None)
    eta2, zeta1, zeta2 = recover_coefficients(a, gamma0)
    return ReconstructionResult(omega0, a, q, b, res, records, eta2, zeta1, zeta2, gamma0, pin_q)


# ---------------------------------------------------------------------------
# frequency sweep
# ---------------------------------------------------------------------------


@dataclass
class SweepEntry:
    omega0: float
    result: ReconstructionResult | None = None
    error: str | None = None
    exit_code: int = 0

    @property
    def ok(self) -> bool:
        return self.result is not None


def frequency_sweep(
    spec: MaterialSpec,
    eta1,
    gamma0: float,
    mu0: float,
    omega0_list: Sequence[float],
    epsilons: Sequence[float],
    solver: SolverConfig = SolverConfig(),
    *,
    pin_q: bool = False,
    jobs: int = 1,
) -> list[SweepEntry]:
    """Independent reconstructions at each probe frequency.

    One job per (frequency, width) forward solve.  A failure at one
    frequency is reported in its entry and
    does not affect the others.
    """
    entries = [SweepEntry(float(w)) for w in omega0_list]
    eps = [float(e) for e in epsilons]
    work, owner = [], []
    for k, entry in enumerate(entries):
        try:
            for e in eps:
                probe_setup(spec, eta1, gamma0, mu0, entry.omega0, e, solver)
        except ArtifactError as exc:
            entry.error, entry.exit_code = str(exc), exc.exit_code
            continue
        for e in eps:
            work.append((_experiment_job, (spec, eta1, gamma0, mu0, entry.omega0, e, solver, (), False, {})))
            owner.append(k)
    results = _run_all(work, jobs)
    per_entry: dict[int, list] = {}
    for k, r in zip(owner, results):
        per_entry.setdefault(k, []).append(r)
    for k, recs in per_entry.items():
        entry = entries[k]
        failed = [r for r in recs if isinstance(r, Exception)]
        if failed:
            entry.error, entry.exit_code = str(failed[0]), failed[0].exit_code
            continue
        try:
            entry.result = extrapolate_eta1(recs, gamma0=gamma0, omega0=entry.omega0, pin_q=pin_q, p0=spec.p0)
        except ArtifactError as exc:
            entry.error, entry.exit_code = str(exc), exc.exit_code
    return entries


# ---------------------------------------------------------------------------
# least-squares baseline
# ---------------------------------------------------------------------------


def piecewise_linear_eta1(knots: Sequence[float], values: Sequence[float]) -> Callable[[np.ndarray], np.ndarray]:
    """eta1(omega) interpolating ``values`` at ``knots``, constant outside."""
    xs = np.asarray(knots, dtype=float)
    ys = np.asarray(values, dtype=float)
    if ys.size == 1:
        c = float(ys[0])
        return lambda w: np.full(np.shape(w), c)
    return lambda w: np.interp(w, xs, ys)


@dataclass
class LeastSquaresResult:
    knots: np.ndarray
    values: np.ndarray
    misfit_history: list
    status: str
    evaluations: int

    @property
    def misfit(self) -> float:
        return self.misfit_history[-1]

    def eta1(self) -> Callable[[np.ndarray], np.ndarray]:
        return piecewise_linear_eta1(self.knots, self.values)


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_section(f, lo: float, hi: float, tol: float, x_best: float, f_best: float):
    """Minimize f on [lo, hi]; the incumbent (x_best, f_best) is kept if better."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    x, fx = (c, fc) if fc < fd else (d, fd)
    return (x, fx) if fx < f_best else (x_best, f_best)


def least_squares_reconstruct(
    observed: Sequence[tuple[ProbeSetup, BoundaryTrace]],
    gamma0: float,
    initial: Sequence[float] | float,
    *,
    knots: Sequence[float] | None = None,
    noise: float = 0.0,
    seed: int = 0,
    tol: float = 1e-4,
    max_sweeps: int = 20,
) -> LeastSquaresResult:
    """Fit a piecewise-linear eta1 by matching simulated to observed traces.

    Each entry of ``observed`` pairs the setup a trace was produced with
    (material, quadratures, probe, grid, step) with the trace itself.  The
    misfit is the quadrature-weighted squared difference summed over all
    traces.  Coordinate descent over the knot values, each coordinate
    minimized by golden-section search on the admissible range
    [max(0, 1 - gamma0), 1].  ``noise`` adds seeded Gaussian noise with
    standard deviation ``noise * max|trace|`` to the observations.
    """
    if not observed:
        raise ConfigError("least squares needs at least one observed trace")
    values = np.atleast_1d(np.asarray(initial, dtype=float)).copy()
    if knots is None:
        if values.size != 1:
            raise ConfigError("knot positions are required for more than one knot")
        knots = [0.0]
    knots = np.asarray(knots, dtype=float)
    if knots.shape != values.shape:
        raise ConfigError("one initial value per knot")
    lo = max(0.0, 1.0 - gamma0)
    values = np.clip(values, lo, 1.0)

    rng = np.random.default_rng(seed)
    data = []
    for setup, trace in observed:
        obs = trace.outgoing
        if noise:
            obs = obs + rng.normal(0.0, noise * float(np.max(np.abs(obs))), size=obs.shape)
        wts = trace.dt * np.outer(trace.w_mu, trace.w_omega)
        data.append((setup, obs, wts, trace.times.size - 1))

    evaluations = 0

    def misfit(vals: np.ndarray) -> float:
        nonlocal evaluations
        evaluations += 1
        prof = piecewise_linear_eta1(knots, vals)
        total = 0.0
        for setup, obs, wts, n_steps in data:
            coeffs = derive_coefficients(prof, gamma0, setup.m, setup.q)
            sim = replace(setup, coeffs=coeffs)
            solver = TransportSolver(sim.m, coeffs, sim.q, sim.grid, sim.dt, probe_inflow(sim.probe))
            total += float(np.sum(wts * (solver.outgoing() - obs[0]) ** 2))
            for n in range(1, n_steps + 1):
                solver.step()
                total += float(np.sum(wts * (solver.outgoing() - obs[n]) ** 2))
        return total

    current = misfit(values)
    history = [current]
    if current == 0.0:
        return LeastSquaresResult(knots, values, history, "converged", evaluations)
    status, stalls = "max_sweeps", 0
    for _ in range(max_sweeps):
        before = values.copy()
        for k in range(values.size):

            def along(x, k=k):
                trial = values.copy()
                trial[k] = x
                return misfit(trial)

            values[k], current = _golden_section(along, lo, 1.0, tol, values[k], current)
        improvement = history[-1] - current
        history.append(current)
        # a single coordinate is minimized exactly by one line search
        if values.size == 1 or np.max(np.abs(values - before)) <= tol:
            status = "converged"
            break
        stalls = stalls + 1 if improvement <= 0.0 else 0
        if stalls >= 3:
            status = "stalled"
            break
    return LeastSquaresResult(knots, values, history, status, evaluations)
