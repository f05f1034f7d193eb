"""Closed-form pieces of the probe analysis.

Bump functions, the probe datum, the ballistic outgoing trace, ray
integrals of the characteristic solution and the limit constant C.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from .errors import ConfigError, NumericalError
from .spectral_material import MaterialModel

__all__ = [
    "BumpFunction",
    "PHI0",
    "PSI0",
    "ProbeSpec",
    "make_probe",
    "eval_bump",
    "eval_probe",
    "f0_outgoing",
    "outgoing_at_zero",
    "incoming_at_interface",
    "characteristic_solution",
    "c_constant",
    "window_shift",
]


@dataclass(frozen=True)
class BumpFunction:
    """exp(-1/(z(1-z))) on (0, 1) or exp(-1/(1-z^2)) on (-1, 1), unit mass."""

    kind: str
    norm: float

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, 1.0) if self.kind == "phi0" else (-1.0, 1.0)

    def __call__(self, z):
        return eval_bump(self, z)


def _raw(kind: str, z: np.ndarray) -> np.ndarray:
    out = np.zeros_like(z)
    if kind == "phi0":
        inside = (z > 0.0) & (z < 1.0)
        zz = z[inside]
        out[inside] = np.exp(-1.0 / (zz * (1.0 - zz)))
    else:
        inside = np.abs(z) < 1.0
        zz = z[inside]
        out[inside] = np.exp(-1.0 / (1.0 - zz * zz))
    return out


def _make_bump(kind: str) -> BumpFunction:
    lo, hi = (0.0, 1.0) if kind == "phi0" else (-1.0, 1.0)
    raw = lambda z: float(_raw(kind, np.array([z]))[0])  # noqa: E731
    mass, _ = quad(raw, lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)
    b = BumpFunction(kind, mass)
    check, _ = quad(lambda z: float(eval_bump(b, z)), lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)
    if abs(check - 1.0) > 1e-10:
        raise NumericalError(f"{kind} normalization failed: mass {check}")
    return b


def eval_bump(b: BumpFunction, z):
    z = np.asarray(z, dtype=float)
    out = _raw(b.kind, np.atleast_1d(z).astype(float)) / b.norm
    return out.reshape(z.shape) if z.ndim else float(out[0])


PHI0 = _make_bump("phi0")
PSI0 = _make_bump("psi0")


@dataclass(frozen=True)
class ProbeSpec:
    mu0: float
    omega0: float
    eps: float
    t1: float = float("nan")

    def __post_init__(self):
        if not (0.0 < self.mu0 < 1.0):
            raise ConfigError(f"mu0 must lie in (0, 1), got {self.mu0}")
        if not self.omega0 > 0.0:
            raise ConfigError(f"omega0 must be positive, got {self.omega0}")
        if not (0.0 < self.eps < 1.0):
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.eps}")
        if self.mu0 + self.eps > 1.0:
            raise ConfigError(f"probe angular support exceeds 1: mu0 + eps = {self.mu0 + self.eps}")

    def with_eps(self, eps: float) -> "ProbeSpec":
        return ProbeSpec(self.mu0, self.omega0, eps, self.t1)


def make_probe(mu0: float, omega0: float, eps: float, m: MaterialModel) -> ProbeSpec:
    """Probe with t1 = 2/(mu0 v(omega0)); checks the spectral support fits the grid."""
    if omega0 + eps > m.grid.omega_max:
        raise ConfigError(f"probe spectral support ends at {omega0 + eps} > omega_max {m.grid.omega_max}")
    return ProbeSpec(mu0, omega0, eps, 2.0 / (mu0 * m.interp("v", omega0)))


def eval_probe(p: ProbeSpec, t, mu, omega, phi0: BumpFunction = PHI0):
    """eps^-3 phi0(t/eps) phi0((mu-mu0)/eps) phi0((omega-omega0)/eps), broadcasting."""
    e = p.eps
    return (
        phi0(np.asarray(t, dtype=float) / e)
        * phi0((np.asarray(mu, dtype=float) - p.mu0) / e)
        * phi0((np.asarray(omega, dtype=float) - p.omega0) / e)
        / e**3
    )


def _as_field(value, omega):
    if callable(value):
        return np.asarray(value(omega), dtype=float)
    return np.asarray(value, dtype=float)


def f0_outgoing(t, mu, omega, eta1, m: MaterialModel, p: ProbeSpec, phi0: BumpFunction = PHI0):
    """Ballistic trace f0(t, 0, mu<0, omega): reflected probe with two-way attenuation.

    ``eta1`` is a scalar, an array broadcasting with ``omega`` or a callable.
    """
    t = np.asarray(t, dtype=float)
    a = np.abs(np.asarray(mu, dtype=float))
    omega = np.asarray(omega, dtype=float)
    v = np.interp(omega, m.omega, m.v)
    tau = np.interp(omega, m.omega, m.tau)
    travel = 2.0 / (a * v)
    val = _as_field(eta1, omega) * eval_probe(p, t - travel, a, omega, phi0) * np.exp(-travel / tau)
    return np.where(t >= travel, val, 0.0)


# ---------------------------------------------------------------------------
# ray integrals
# ---------------------------------------------------------------------------

# h(t, x) is the scalar field multiplying xi/tau in the relaxation source


def _ray_integral(h, t, x_of_y, y_max, tau, xi, dy):
    if y_max <= 0.0:
        return 0.0
    n = max(1, math.ceil(y_max / dy))
    step = y_max / n
    y = (np.arange(n) + 0.5) * step
    vals = np.asarray(h(t - y, x_of_y(y)), dtype=float)
    return float(step * np.sum(np.exp(-y / tau) * vals)) * xi / tau


def incoming_at_interface(
    t: float,
    mu: float,
    omega_index: int,
    m: MaterialModel,
    h: Callable,
    phi: Callable | None,
    g_at_1: Callable | None,
    eta1: float,
    zeta1: float,
    dy: float,
) -> float:
    """f(t, 1, mu<0, omega) from the interface condition and the ray through [0, 1].

    ``phi(t)`` is the inflow at x = 0 for direction -mu, ``g_at_1(t)`` is
    g(t, 1, mu, omega).  Both may be None (zero data).
    """
    a = abs(mu)
    v, tau, xi = m.v[omega_index], m.tau[omega_index], m.xi[omega_index]
    cross = 1.0 / (a * v)
    ymax = min(t, cross)
    reflected = _ray_integral(h, t, lambda y: 1.0 - a * v * y, ymax, tau, xi, dy)
    if t > cross and phi is not None:
        reflected += float(phi(t - cross)) * math.exp(-cross / tau)
    through = float(g_at_1(t)) if g_at_1 is not None else 0.0
    return zeta1 * through + eta1 * reflected


def outgoing_at_zero(
    t: float,
    mu: float,
    omega_index: int,
    m: MaterialModel,
    h: Callable,
    f_in_at_1: Callable | None,
    dy: float,
) -> float:
    """f(t, 0, mu<0, omega) by integrating back along the ray to x = 1.

    ``f_in_at_1(s)`` is f(s, 1, mu, omega); it is only needed once the ray
    reaches the interface within the elapsed time.
    """
    a = abs(mu)
    v, tau, xi = m.v[omega_index], m.tau[omega_index], m.xi[omega_index]
    cross = 1.0 / (a * v)
    val = _ray_integral(h, t, lambda y: a * v * y, min(t, cross), tau, xi, dy)
    if t > cross and f_in_at_1 is not None:
        val += float(f_in_at_1(t - cross)) * math.exp(-cross / tau)
    return val


def characteristic_solution(
    t: float,
    mu: float,
    omega_index: int,
    m: MaterialModel,
    h: Callable,
    eta1: float,
    zeta1: float,
    dy: float,
    phi: Callable | None = None,
    g_at_1: Callable | None = None,
) -> tuple[float, float]:
    """(f(t, 0, mu<0, omega), f(t, 1, mu<0, omega)) for the left layer.

    Composite midpoint rule along each ray with step at most ``dy``.
    """

    def f_in(s):
        return incoming_at_interface(s, mu, omega_index, m, h, phi, g_at_1, eta1, zeta1, dy)

    return outgoing_at_zero(t, mu, omega_index, m, h, f_in, dy), f_in(t)


# ---------------------------------------------------------------------------
# limit constant
# ---------------------------------------------------------------------------


def window_shift(p: ProbeSpec, m: MaterialModel) -> tuple[float, float]:
    """Coefficients (a, b) of the window argument t - a*mu - b*omega in C."""
    v = m.interp("v", p.omega0)
    vp = m.interp("v_prime", p.omega0)
    scale = 2.0 / (p.mu0 * v) ** 2
    return scale * v, scale * p.mu0 * vp


def _gauss(lo, hi, n):
    x, w = leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def c_constant(
    p: ProbeSpec, m: MaterialModel, phi0: BumpFunction = PHI0, psi0: BumpFunction = PSI0, n: int = 32
) -> float:
    """Limit constant of the normalized measurement.

    C = exp(-2/(tau mu0 v)) * iiint psi0(t - a mu - b omega) phi0(t) phi0(mu) phi0(omega)
    with a = 2/(mu0^2 v) and b = 2 v'/(mu0 v^2), evaluated at omega0.

    Tensor Gauss rule with ``n`` points per axis: omega outermost on (0, 1),
    mu on the part of (0, 1) where the window can be reached (two panels),
    t innermost on the part of (0, 1) inside the window support.
    """
    if n < 2 or n % 2:
        raise ConfigError("c_constant needs an even number of points per axis")
    a, b = window_shift(p, m)
    tau = m.interp("tau", p.omega0)
    v = m.interp("v", p.omega0)
    w_lo, w_hi = psi0.support

    om, wom = _gauss(0.0, 1.0, n)
    xt, wt = leggauss(n)
    total = 0.0
    for omega, weight in zip(om, wom):
        po = phi0(omega)
        if po == 0.0:
            continue
        # t - a mu - b omega in (w_lo, w_hi) for some t in (0, 1)
        mlo = max(0.0, (-w_hi - b * omega) / a)
        mhi = min(1.0, (1.0 - w_lo - b * omega) / a)
        if mhi <= mlo:
            continue
        mid = 0.5 * (mlo + mhi)
        m1, w1 = _gauss(mlo, mid, n // 2)
        m2, w2 = _gauss(mid, mhi, n // 2)
        mu = np.concatenate([m1, m2])
        wmu = np.concatenate([w1, w2])
        shift = a * mu + b * omega
        tlo = np.clip(shift + w_lo, 0.0, 1.0)
        thi = np.clip(shift + w_hi, 0.0, 1.0)
        half = 0.5 * (thi - tlo)
        T = tlo[:, None] + half[:, None] * (xt + 1.0)
        inner = np.sum(half[:, None] * wt * phi0(T) * psi0(T - shift[:, None]), axis=1)
        total += weight * po * float(np.sum(wmu * phi0(mu) * inner))
    C = math.exp(-2.0 / (tau * p.mu0 * v)) * total
    if not C > 1e-14:
        raise ConfigError(
            f"degenerate constant C = {C:.3e}: the window misses the reflected probe (mu0={p.mu0}, omega0={p.omega0})"
        )
    return C
