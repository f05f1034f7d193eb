"""Time stepping of the coupled two-layer system.

Transport is exact along characteristics.  Each ray family (mu_i, omega_w)
carries its values on a lattice that moves with speed mu_i v_w, with
spacing h equal to the cell width, so no interpolation is ever applied
to the transported values themselves.  Relaxation uses the exact
integrating factor with the bracket field lagged to the start of the
step and sampled at the midpoint of each characteristic segment.  When a
family's lattice crosses a layer boundary inside a step, the step is
split at the crossing and the boundary or interface condition is applied
at that instant.

The bracket <f> is the plain quadrature sum over (mu, omega) of f/tau.
The relaxation target is xi <f> divided by the angular measure (2), so
that the pair (xi, gamma0 xi) is a steady state and the collision term
conserves the (mu, omega)-integral of f.
"""

from __future__ import annotations

import functools
import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import _lattice
from .analytic_solutions import ProbeSpec, eval_probe
from .errors import ConfigError, NumericalError
from .interface_model import InterfaceCoefficients, apply_interface, diffusive_reflux
from .spectral_material import AngularQuadrature, MaterialModel

__all__ = [
    "SpatialGrid",
    "PhononState",
    "BoundaryTrace",
    "RunRecords",
    "TransportSolver",
    "bracket",
    "apply_boundary_left",
    "apply_boundary_right",
    "apply_interface",
    "run_forward",
    "zero_inflow",
    "equilibrium_inflow",
    "probe_inflow",
]

Inflow = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def zero_inflow() -> Inflow:
    def phi(t, mu, omega):
        return np.zeros(np.broadcast_shapes(np.shape(t), np.shape(mu), np.shape(omega)))

    phi.nonnegative = True
    phi.sup_ratio = lambda m, mu: 0.0
    return phi


def equilibrium_inflow(m: MaterialModel, scale: float = 1.0) -> Inflow:
    """Time-independent inflow scale * xi(omega)."""

    def phi(t, mu, omega):
        val = scale * np.interp(omega, m.omega, m.xi)
        return np.broadcast_to(val, np.broadcast_shapes(np.shape(t), np.shape(mu), np.shape(omega))).copy()

    phi.nonnegative = scale >= 0.0
    phi.sup_ratio = lambda m_, mu: scale
    return phi


def probe_inflow(p: ProbeSpec) -> Inflow:
    def phi(t, mu, omega):
        return eval_probe(p, t, mu, omega)

    def sup_ratio(m, mu):
        # sup over t is at t = eps/2, the peak of the time bump
        vals = eval_probe(p, 0.5 * p.eps, np.asarray(mu)[:, None], m.omega[None, :])
        return float(np.max(vals / m.xi[None, :]))

    phi.nonnegative = True
    phi.sup_ratio = sup_ratio
    phi.probe = p
    return phi


@dataclass(frozen=True)
class SpatialGrid:
    nx_left: int
    nx_right: int
    L: float

    def __post_init__(self):
        if self.nx_left < 2 or self.nx_right < 1:
            raise ConfigError("need nx_left >= 2 and nx_right >= 1")
        if not self.L > 1.0:
            raise ConfigError(f"L must exceed 1, got {self.L}")
        # both layers share the cell width, which is also the lattice spacing
        if abs(self.nx_right / self.nx_left - (self.L - 1.0)) > 1e-9 * self.L:
            raise ConfigError(
                f"cell widths differ between layers: nx_right/nx_left = {self.nx_right / self.nx_left} "
                f"but L - 1 = {self.L - 1.0}"
            )

    @property
    def dx(self) -> float:
        return 1.0 / self.nx_left

    @property
    def x_left(self) -> np.ndarray:
        return (np.arange(self.nx_left) + 0.5) * self.dx

    @property
    def x_right(self) -> np.ndarray:
        return 1.0 + (np.arange(self.nx_right) + 0.5) * self.dx


@dataclass
class PhononState:
    """Cell-center snapshot; axis order (x, mu, omega) with mu as in ``q.nodes``."""

    t: float
    f: np.ndarray
    g: np.ndarray


@dataclass
class RunRecords:
    """Diagnostics collected while stepping."""

    norm_times: list = field(default_factory=list)
    l1_f: list = field(default_factory=list)
    l1_g: list = field(default_factory=list)
    lp: dict = field(default_factory=dict)
    injected_l1: list = field(default_factory=list)
    injected_flux: list = field(default_factory=list)
    injected_lp: dict = field(default_factory=dict)
    min_value: float = math.inf
    max_ratio_f: float = -math.inf
    max_ratio_g: float = -math.inf
    bracket_f: list = field(default_factory=list)
    interface_in: list = field(default_factory=list)


@dataclass
class BoundaryTrace:
    """Outgoing f(t, 0, -mu_i, omega_w); ``outgoing[n, i, w]``."""

    times: np.ndarray
    outgoing: np.ndarray
    mu: np.ndarray
    w_mu: np.ndarray
    omega: np.ndarray
    w_omega: np.ndarray
    dt: float
    channels: dict = field(default_factory=dict)
    records: RunRecords | None = None
    meta: dict = field(default_factory=dict)

    def channel(self, name: str) -> "BoundaryTrace":
        """Trace of an instrumentation channel ('f0', 'f1' or 'g0')."""
        return BoundaryTrace(self.times, self.channels[name], self.mu, self.w_mu, self.omega, self.w_omega, self.dt)

    def scaled(self, a: float) -> "BoundaryTrace":
        return BoundaryTrace(self.times, a * self.outgoing, self.mu, self.w_mu, self.omega, self.w_omega, self.dt)

    def __sub__(self, other: "BoundaryTrace") -> "BoundaryTrace":
        return BoundaryTrace(
            self.times, self.outgoing - other.outgoing, self.mu, self.w_mu, self.omega, self.w_omega, self.dt
        )


def bracket(values: np.ndarray, q: AngularQuadrature, m: MaterialModel) -> float | np.ndarray:
    """sum_mu sum_omega w_mu w_omega f / tau over the last two axes.

    ``values[..., k, w]`` follows the full node order of ``q.nodes``.
    """
    return np.einsum("...kw,k,w->...", values, q.weights, m.w / m.tau)


def apply_boundary_left(t, phi: Inflow, q: AngularQuadrature, m: MaterialModel, nonnegative: bool = False):
    """f(t, 0, mu_i > 0, omega) = phi; rows follow the half-range nodes."""
    vals = np.asarray(phi(t, q.mu[:, None], m.omega[None, :]), dtype=float)
    if nonnegative and np.any(vals < 0.0):
        raise ConfigError("incoming data declared nonnegative has negative values")
    return vals


def apply_boundary_right(g_out_L: np.ndarray, coeffs: InterfaceCoefficients, m: MaterialModel, q: AngularQuadrature):
    """g(L, -mu_i, omega) from the outgoing g(L, +mu_i, omega) via isotropic re-emission."""
    flux = float(np.sum(q.w[:, None] * q.mu[:, None] * (m.w * m.v)[None, :] * g_out_L))
    return diffusive_reflux(flux, coeffs, m, q.n_half)


@functools.lru_cache(maxsize=8)
def _gregory_weights(n: int) -> np.ndarray:
    """Unit-spacing Gregory weights (end differences up to third order) for n points."""
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    corr = np.array([-1.0, 1.0, 0.0, 0.0]) / 12.0
    corr -= np.array([1.0, -2.0, 1.0, 0.0]) / 24.0
    corr += np.array([-1.0, 3.0, -3.0, 1.0]) * (19.0 / 720.0)
    # the rule is symmetric: the same end correction at both ends
    w[:4] += corr
    w[-4:] += corr[::-1]
    w.setflags(write=False)
    return w


def _partial_segment(s: np.ndarray):
    """Weights of the quadratic through 0, s, 1 + s integrated over [0, s]."""
    w2 = -(s**3) / (6.0 * (1.0 + s))
    w1 = 0.5 * s + s**2 / 6.0
    return s - w1 - w2, w1, w2


class _Buffer:
    __slots__ = ("P", "ghost", "bval")

    def __init__(self, nmu, nom, n, fill=None):
        self.P = np.zeros((nmu, nom, n))
        self.ghost = np.zeros((nmu, nom))
        self.bval = np.zeros((nmu, nom))
        if fill is not None:
            self.P[...] = fill[None, :, None]
            self.ghost[...] = fill[None, :]
            self.bval[...] = fill[None, :]

    def readout(self, theta_fam):
        # value at the outflow boundary, between the last point and the ghost
        return theta_fam * self.P[:, :, -1] + (1.0 - theta_fam) * self.ghost


class TransportSolver:
    """Stateful stepper for the two-layer system.

    Parameters
    ----------
    m, coeffs, q, grid
        Material, interface coefficients, angular rule and spatial grid.
    dt
        Time step.  Every family must move at most one lattice spacing per
        step and dt may not exceed the smallest relaxation time.
    phi
        Incoming data at x = 0, ``phi(t, mu, omega)`` with broadcasting.
    coupled
        False drops the relaxation source and the right layer: the left layer
        then carries the purely ballistic, attenuated reflection problem.
    channels
        Instrumentation run alongside the full system: ``"f0"`` (ballistic
        part), ``"f1"`` (remainder, driven by the full bracket and the full
        right layer) and ``"g0"`` (right-layer part without relaxation source,
        transported back to x = 0).
    init
        ``"zero"`` or ``"equilibrium"`` (f = xi, g = gamma0 xi; validation only).
    record_every
        Cadence (in steps) of norm diagnostics; 0 disables them.
    track_extremes
        Record min f and max f/xi, g/xi over every lattice value at every
        step (roughly doubles the cost of the bracket reduction).
    lp
        Exponents for weighted norm diagnostics.
    """

    def __init__(
        self,
        m: MaterialModel,
        coeffs: InterfaceCoefficients,
        q: AngularQuadrature,
        grid: SpatialGrid,
        dt: float,
        phi: Inflow,
        *,
        coupled: bool = True,
        channels: Iterable[str] = (),
        init: str = "zero",
        record_every: int = 0,
        lp: Iterable[float] = (2.0,),
        record_bracket: bool = False,
        record_interface: bool = False,
        track_extremes: bool = False,
    ):
        self.m, self.coeffs, self.q, self.grid = m, coeffs, q, grid
        self.phi = phi
        self.coupled = coupled
        self.channels = tuple(channels)
        for c in self.channels:
            if c not in ("f0", "f1", "g0"):
                raise ConfigError(f"unknown instrumentation channel {c!r}")
        if not coupled and self.channels:
            raise ConfigError("instrumentation channels need the coupled system")
        dt = float(dt)
        if not dt > 0.0:
            raise ConfigError("dt must be positive")
        if dt > m.tau0:
            raise ConfigError(f"dt = {dt} exceeds the smallest relaxation time {m.tau0}")
        self.dt = dt
        self.h = grid.dx
        self.nf, self.ng = grid.nx_left, grid.nx_right
        nmu, nom = q.n_half, m.grid.n
        self.nmu, self.nom = nmu, nom

        # families with equal group velocity share their lattice phase
        vals, inv = np.unique(m.v, return_inverse=True)
        order = np.argsort(inv, kind="stable")
        self._grp_idx = order.astype(np.int64)
        self._grp_ptr = np.concatenate([[0], np.cumsum(np.bincount(inv, minlength=vals.size))]).astype(np.int64)
        self._grp_of = inv.astype(np.int64)
        self._d = q.mu[:, None] * vals[None, :] * dt / self.h
        dmax = float(self._d.max())
        if dmax > 1.0 + 1e-12:
            raise ConfigError(
                f"dt too large: fastest ray moves {dmax:.3f} cells per step (limit 1); use dt <= {self.h / (q.mu.max() * vals.max()):.3e}"
            )

        self._decay = np.exp(-dt / m.tau)
        self._ang = q.total_weight
        self._src = m.xi / self._ang
        self._wot = m.w / m.tau
        self._wmu = q.w.copy()
        self._flux_w = q.w[:, None] * q.mu[:, None] * (m.w * m.v)[None, :]
        self._alpha_xi = coeffs.alpha0 * m.xi
        self._mu_col = q.mu[:, None]
        self._om_row = m.omega[None, :]
        self._scratch = np.zeros(max(self.nf, self.ng))
        self._no_src = np.zeros(0)
        self._exit_dummy = np.zeros((nmu, nom))

        self.n = 0
        self.theta = np.zeros_like(self._d)
        eq_f = m.xi if init == "equilibrium" else None
        eq_g = coeffs.gamma0 * m.xi if init == "equilibrium" else None
        if init not in ("zero", "equilibrium"):
            raise ConfigError(f"unknown initial state {init!r}")
        self.Fp = _Buffer(nmu, nom, self.nf, eq_f)
        self.Fm = _Buffer(nmu, nom, self.nf, eq_f)
        if coupled:
            self.Gp = _Buffer(nmu, nom, self.ng, eq_g)
            self.Gm = _Buffer(nmu, nom, self.ng, eq_g)
        self.ch = {}
        if "f0" in self.channels:
            self.ch["f0"] = {"Fp": _Buffer(nmu, nom, self.nf), "Fm": _Buffer(nmu, nom, self.nf)}
        if "f1" in self.channels:
            self.ch["f1"] = {"Fp": _Buffer(nmu, nom, self.nf, eq_f), "Fm": _Buffer(nmu, nom, self.nf, eq_f)}
        if "g0" in self.channels:
            # the forward-moving part of g0 leaves through x = L and never
            # reaches x = 0, so only the backward-moving part is carried
            self.ch["g0"] = {"Gm": _Buffer(nmu, nom, self.ng), "Fm": _Buffer(nmu, nom, self.nf)}
        self.Fp.bval[...] = self._phi(np.zeros((nmu, nom)))
        if "f0" in self.ch:
            self.ch["f0"]["Fp"].bval[...] = self.Fp.bval
        self.flux = float(np.sum(self._flux_w * self.Gp.readout(1.0))) if coupled else 0.0
        if coupled and init == "equilibrium":
            self.Gm.bval[...] = self._alpha_xi[None, :] * self.flux

        self.record_every = int(record_every)
        self.lp = tuple(float(p) for p in lp)
        self.record_bracket = record_bracket
        self.record_interface = record_interface
        self.records = RunRecords()
        for p in self.lp:
            self.records.lp[p] = []
            self.records.injected_lp[p] = []
        self._inj = {"l1": 0.0, "flux": 0.0, **{p: 0.0 for p in self.lp}}
        self._phi_prev = self.Fp.bval.copy()
        self.track_extremes = track_extremes
        self._extremes = np.array([math.inf, -math.inf]) if track_extremes else np.zeros(0)
        self._extremes_g = np.array([math.inf, -math.inf]) if track_extremes else np.zeros(0)
        self.Sf = np.zeros(self.nf)
        self.Sg = np.zeros(self.ng)
        self._deposit()
        if self.record_every:
            self._record_norms()
        if record_bracket:
            self.records.bracket_f.append(self.Sf.copy())
        if record_interface:
            self.records.interface_in.append(self.Fm.bval.copy())

    # -- helpers ---------------------------------------------------------

    @property
    def t(self) -> float:
        return self.n * self.dt

    def _fam(self, per_group):
        return per_group[:, self._grp_of]

    def _phi(self, t):
        vals = np.asarray(self.phi(t, self._mu_col, self._om_row), dtype=float)
        return np.broadcast_to(vals, (self.nmu, self.nom))

    def _advance(self, buf, inflow, S, exit_out, sched):
        theta, wrap, afrac = sched
        _lattice.advance(
            buf.P, buf.ghost, np.ascontiguousarray(inflow), exit_out, theta, self._d, wrap, afrac,
            self._grp_ptr, self._grp_idx, self._decay, self.m.tau, self._src, S, self.dt, self._scratch,
        )  # fmt: skip

    def _deposit(self):
        th = self.theta
        args = (th, self._grp_ptr, self._grp_idx, self._wmu, self._wot, self.m.xi)
        self.Sf[:] = 0.0
        for buf, rev in ((self.Fp, False), (self.Fm, True)):
            _lattice.deposit(buf.P, buf.ghost, buf.bval, *args, self.Sf, rev, self._scratch, self._extremes)
        if self.coupled:
            self.Sg[:] = 0.0
            for buf, rev in ((self.Gp, False), (self.Gm, True)):
                _lattice.deposit(buf.P, buf.ghost, buf.bval, *args, self.Sg, rev, self._scratch, self._extremes_g)
        if self.track_extremes:
            rec = self.records
            rec.min_value = min(rec.min_value, float(self._extremes[0]), float(self._extremes_g[0]))
            rec.max_ratio_f = float(self._extremes[1])
            rec.max_ratio_g = float(self._extremes_g[1])

    def _schedule(self):
        nd0 = self.n * self._d
        nd1 = (self.n + 1) * self._d
        k0 = np.floor(nd0)
        k1 = np.floor(nd1)
        theta = nd0 - k0
        theta_next = nd1 - k1
        wrap = k1 > k0
        with np.errstate(divide="ignore", invalid="ignore"):
            afrac = np.where(wrap, np.clip((k1 - nd0) / self._d, 0.0, 1.0), 0.0)
        return theta, wrap, afrac, theta_next

    # -- stepping --------------------------------------------------------

    def step(self):
        """Advance all buffers by one time step."""
        theta, wrap, afrac, theta_next = self._schedule()
        sched = (theta, wrap, afrac)
        tn = self.t
        t_cross = tn + self._fam(afrac) * self.dt
        phi_c = self._phi(t_cross)
        co = self.coeffs
        e_fp = np.zeros((self.nmu, self.nom))
        e_gm = np.zeros((self.nmu, self.nom))
        Sf = self.Sf if self.coupled else self._no_src
        Sf_rev = np.ascontiguousarray(self.Sf[::-1]) if self.coupled else self._no_src

        self._advance(self.Fp, phi_c, Sf, e_fp, sched)
        if self.coupled:
            Sg_rev = np.ascontiguousarray(self.Sg[::-1])
            reflux = np.broadcast_to(self._alpha_xi[None, :] * self.flux, (self.nmu, self.nom))
            self._advance(self.Gm, reflux, Sg_rev, e_gm, sched)
            in_fm, in_gp = apply_interface(e_fp, e_gm, co)
            self._advance(self.Gp, in_gp, self.Sg, self._exit_dummy, sched)
        else:
            in_fm = co.eta1 * e_fp
        self._advance(self.Fm, in_fm, Sf_rev, self._exit_dummy, sched)

        if "f0" in self.ch:
            b = self.ch["f0"]
            e0 = np.zeros_like(e_fp)
            self._advance(b["Fp"], phi_c, self._no_src, e0, sched)
            self._advance(b["Fm"], co.eta1 * e0, self._no_src, self._exit_dummy, sched)
        if "f1" in self.ch:
            b = self.ch["f1"]
            e1 = np.zeros_like(e_fp)
            self._advance(b["Fp"], np.zeros_like(phi_c), self.Sf, e1, sched)
            self._advance(b["Fm"], co.eta1 * e1 + co.zeta1 * e_gm, Sf_rev, self._exit_dummy, sched)
        if "g0" in self.ch:
            b = self.ch["g0"]
            eg = np.zeros_like(e_fp)
            self._advance(b["Gm"], reflux, self._no_src, eg, sched)
            self._advance(b["Fm"], co.zeta1 * eg, self._no_src, self._exit_dummy, sched)

        self.n += 1
        self.theta = theta_next
        self._update_boundaries()
        self._deposit()
        if not (np.all(np.isfinite(self.Sf)) and np.all(np.isfinite(self.Fm.ghost))):
            raise NumericalError(f"non-finite values after step {self.n}")
        self.records.min_value = min(self.records.min_value, float(self.outgoing().min()))
        self._accumulate_injection()
        if self.record_every and self.n % self.record_every == 0:
            self._record_norms()
        if self.record_bracket:
            self.records.bracket_f.append(self.Sf.copy())
        if self.record_interface:
            self.records.interface_in.append(self.Fm.bval.copy())

    def _update_boundaries(self):
        th = self._fam(self.theta)
        co = self.coeffs
        self.Fp.bval = np.array(self._phi(np.full((self.nmu, self.nom), self.t)))
        f_out = self.Fp.readout(th)
        if self.coupled:
            g_out = self.Gm.readout(th)
            self.Fm.bval, self.Gp.bval = apply_interface(f_out, g_out, co)
            self.flux = float(np.sum(self._flux_w * self.Gp.readout(th)))
            self.Gm.bval = np.broadcast_to(self._alpha_xi[None, :] * self.flux, (self.nmu, self.nom)).copy()
        else:
            self.Fm.bval = co.eta1 * f_out
        if "f0" in self.ch:
            b = self.ch["f0"]
            b["Fp"].bval = self.Fp.bval
            b["Fm"].bval = co.eta1 * b["Fp"].readout(th)
        if "f1" in self.ch:
            b = self.ch["f1"]
            b["Fm"].bval = co.eta1 * b["Fp"].readout(th) + co.zeta1 * g_out

    def _accumulate_injection(self):
        cur = self.Fp.bval
        prev = self._phi_prev
        w = self._wmu[:, None] * self.m.w[None, :]
        avg = 0.5 * (cur + prev)
        self._inj["l1"] += self.dt * float(np.sum(w * np.abs(avg)))
        self._inj["flux"] += self.dt * float(np.sum(self._flux_w * np.abs(avg)))
        xi = self.m.xi[None, :]
        for p in self.lp:
            with np.errstate(divide="ignore", invalid="ignore"):
                wp = np.where(xi > 0, xi ** (1.0 - p), 0.0)
            self._inj[p] += self.dt * 0.5 * float(np.sum(w * wp * (np.abs(cur) ** p + np.abs(prev) ** p)))
        self._phi_prev = cur

    def _buffer_norm(self, buf: _Buffer, th: np.ndarray, p: float) -> np.ndarray:
        # integral over the layer of |f|^p from the exact lattice samples:
        # Gregory rule between the first and last lattice point, quadratics
        # through the inflow and outflow values on the two partial segments
        P = np.abs(buf.P) ** p
        b = np.abs(buf.bval) ** p
        out = np.abs(buf.readout(th)) ** p
        n = P.shape[2]
        if n < 8:
            inner = P.sum(axis=2) - 0.5 * (P[:, :, 0] + P[:, :, -1])
            return self.h * (inner + 0.5 * th * (b + P[:, :, 0]) + 0.5 * (1.0 - th) * (P[:, :, -1] + out))
        inner = P @ _gregory_weights(n)
        a0, a1, a2 = _partial_segment(th)
        c0, c1, c2 = _partial_segment(1.0 - th)
        head = a0 * b + a1 * P[:, :, 0] + a2 * P[:, :, 1]
        tail = c0 * out + c1 * P[:, :, -1] + c2 * P[:, :, -2]
        return self.h * (inner + head + tail)

    def _record_norms(self):
        rec = self.records
        th = self._fam(self.theta)
        w = self._wmu[:, None] * self.m.w[None, :]
        bufs_f = [self.Fp, self.Fm]
        bufs_g = [self.Gp, self.Gm] if self.coupled else []
        rec.norm_times.append(self.t)
        rec.l1_f.append(sum(float(np.sum(w * self._buffer_norm(b, th, 1.0))) for b in bufs_f))
        rec.l1_g.append(sum(float(np.sum(w * self._buffer_norm(b, th, 1.0))) for b in bufs_g))
        rec.injected_l1.append(self._inj["l1"])
        rec.injected_flux.append(self._inj["flux"])
        xi = self.m.xi[None, :]
        for p in self.lp:
            with np.errstate(divide="ignore", invalid="ignore"):
                wp = w * np.where(xi > 0, xi ** (1.0 - p), 0.0)
            total = sum(float(np.sum(wp * self._buffer_norm(b, th, p))) for b in bufs_f + bufs_g)
            rec.lp[p].append(total ** (1.0 / p))
            rec.injected_lp[p].append(self._inj[p] ** (1.0 / p))

    # -- views -----------------------------------------------------------

    def outgoing(self, channel: str | None = None) -> np.ndarray:
        """Current f(t, 0, -mu_i, omega) of the full system or a channel."""
        th = self._fam(self.theta)
        buf = self.Fm if channel is None else self.ch[channel]["Fm"]
        return buf.readout(th)

    def _cells(self, buf: _Buffer, n: int, reverse: bool) -> np.ndarray:
        # linear interpolation to cell centers, result (cells, nmu, nom)
        th = self._fam(self.theta)[..., None]
        c = np.arange(n) + 0.5
        s = c - th
        j = np.floor(s).astype(int)
        with np.errstate(invalid="ignore", divide="ignore"):
            lam = np.where(j < 0, c / th, s - j)
        ext = np.concatenate([buf.bval[..., None], buf.P, buf.ghost[..., None]], axis=2)
        lo = np.take_along_axis(ext, j + 1, axis=2)
        hi = np.take_along_axis(ext, j + 2, axis=2)
        vals = np.moveaxis(lo + lam * (hi - lo), 2, 0)
        return vals[::-1] if reverse else vals

    def snapshot(self) -> PhononState:
        """Cell-center values with mu ordered as ``q.nodes``."""
        fp = self._cells(self.Fp, self.nf, False)
        fm = self._cells(self.Fm, self.nf, True)
        f = np.concatenate([fm[:, ::-1], fp], axis=1)
        if self.coupled:
            gp = self._cells(self.Gp, self.ng, False)
            gm = self._cells(self.Gm, self.ng, True)
            g = np.concatenate([gm[:, ::-1], gp], axis=1)
        else:
            g = np.zeros((self.ng, 2 * self.nmu, self.nom))
        return PhononState(self.t, f, g)

    def lattice(self, channel: str | None = None) -> dict:
        """Raw lattice values of the left layer (for decomposition checks)."""
        src = {"Fp": self.Fp, "Fm": self.Fm} if channel is None else self.ch[channel]
        return {k: src[k].P.copy() for k in ("Fp", "Fm") if k in src}


def _run_meta(solver: TransportSolver, T_end: float) -> dict:
    m = solver.m
    digest = hashlib.sha256()
    for arr in (m.omega, m.w, m.tau, m.v, m.xi, solver.q.mu, solver.q.w, solver.coeffs.eta1):
        digest.update(np.ascontiguousarray(arr).tobytes())
    return {
        "nx_left": solver.nf,
        "nx_right": solver.ng,
        "L": solver.grid.L,
        "dt": solver.dt,
        "T_end": T_end,
        "n_mu_half": solver.nmu,
        "n_omega": solver.nom,
        "gamma0": solver.coeffs.gamma0,
        "alpha0": solver.coeffs.alpha0,
        "material_hash": digest.hexdigest()[:16],
    }


def run_forward(
    m: MaterialModel,
    coeffs: InterfaceCoefficients,
    phi: Inflow,
    T_end: float,
    dt: float,
    grid: SpatialGrid,
    q: AngularQuadrature,
    **options,
) -> BoundaryTrace:
    """Integrate from t = 0 to ``T_end`` and return the trace at x = 0 of every step."""
    n_steps = int(round(T_end / dt))
    if n_steps < 1 or abs(n_steps * dt - T_end) > 1e-9 * max(1.0, T_end):
        raise ConfigError(f"T_end = {T_end} is not a positive multiple of dt = {dt}")
    solver = TransportSolver(m, coeffs, q, grid, dt, phi, **options)
    out = np.empty((n_steps + 1, q.n_half, m.grid.n))
    chans = {c: np.empty_like(out) for c in solver.channels}
    out[0] = solver.outgoing()
    for c in chans:
        chans[c][0] = solver.outgoing(c)
    for n in range(1, n_steps + 1):
        solver.step()
        out[n] = solver.outgoing()
        for c in chans:
            chans[c][n] = solver.outgoing(c)
    times = np.arange(n_steps + 1) * dt
    trace = BoundaryTrace(times, out, q.mu.copy(), q.w.copy(), m.omega.copy(), m.w.copy(), dt, chans, solver.records)
    trace.meta = _run_meta(solver, T_end)
    trace.meta["lattice"] = {c or "full": solver.lattice(c) for c in (None, *solver.channels) if c != "g0"}
    return trace
