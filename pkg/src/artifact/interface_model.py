"""Interface reflection/transmission coefficients and the diffusive wall at x = L."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, ModelError
from .spectral_material import AngularQuadrature, MaterialModel, parse_profile

__all__ = [
    "InterfaceCoefficients",
    "derive_coefficients",
    "compute_alpha0",
    "diffusive_reflux",
    "apply_interface",
    "eta1_profile_from_config",
]


@dataclass(frozen=True)
class InterfaceCoefficients:
    eta1: np.ndarray
    eta2: np.ndarray
    zeta1: np.ndarray
    zeta2: np.ndarray
    gamma0: float
    alpha0: float

    def residuals(self) -> dict[str, float]:
        """Largest violation of each conservation relation over the nodes."""
        return {
            "eta": float(np.max(np.abs(self.eta1 + self.eta2 - 1.0))),
            "zeta": float(np.max(np.abs(self.zeta1 + self.zeta2 - 1.0))),
            "energy": float(np.max(np.abs(self.eta1 + self.gamma0 * self.zeta1 - 1.0))),
        }


def compute_alpha0(m: MaterialModel, q: AngularQuadrature) -> float:
    """Normalization of the isotropic re-emission at x = L (zero net flux)."""
    denom = float(np.sum(q.w * q.mu) * np.sum(m.w * m.v * m.xi))
    if not np.isfinite(denom) or denom <= 0.0:
        raise ModelError("alpha0: half-range flux of xi is not positive")
    return 1.0 / denom


def derive_coefficients(eta1, gamma0: float, m: MaterialModel, q: AngularQuadrature) -> InterfaceCoefficients:
    """Complete (eta1, gamma0) into the four coefficient tables on ``m.grid``.

    ``eta1`` may be a scalar, a per-node array, or a callable of frequency.
    """
    if callable(eta1):
        eta1 = eta1(m.omega)
    eta1 = np.array(np.broadcast_to(np.asarray(eta1, dtype=float), m.omega.shape))
    gamma0 = float(gamma0)
    if not gamma0 > 0.0:
        raise ConfigError(f"gamma0 must be positive, got {gamma0}")
    bad = np.flatnonzero((eta1 < 0.0) | (eta1 > 1.0) | ~np.isfinite(eta1))
    if bad.size:
        i = int(bad[0])
        raise ModelError(f"eta1 = {eta1[i]} outside [0, 1] at node {i} (omega = {m.omega[i]:.6g})")
    zeta1 = (1.0 - eta1) / gamma0
    bad = np.flatnonzero(zeta1 > 1.0)
    if bad.size:
        i = int(bad[0])
        raise ModelError(
            f"inadmissible coefficients: zeta1 = {zeta1[i]:.6g} > 1 at node {i} (omega = {m.omega[i]:.6g})"
        )
    tables = [eta1, 1.0 - eta1, zeta1, 1.0 - zeta1]
    for t in tables:
        t.setflags(write=False)
    return InterfaceCoefficients(*tables, gamma0, compute_alpha0(m, q))


def diffusive_reflux(flux: float, coeffs: InterfaceCoefficients, m: MaterialModel, n_mu: int = 1) -> np.ndarray:
    """Re-emitted g(L, mu<0, omega) = alpha0 xi(omega) flux; rows are mu nodes."""
    row = coeffs.alpha0 * m.xi * flux
    return np.repeat(row[None, :], n_mu, axis=0)


def apply_interface(f_out: np.ndarray, g_out: np.ndarray, coeffs: InterfaceCoefficients):
    """Interface condition at x = 1.

    ``f_out`` is f(1, +mu_i, omega) and ``g_out`` is g(1, -mu_i, omega), both
    indexed by the half-range node i.  Returns (f(1, -mu_i), g(1, +mu_i)).
    """
    f_in = coeffs.eta1 * f_out + coeffs.zeta1 * g_out
    g_in = coeffs.eta2 * f_out + coeffs.zeta2 * g_out
    return f_in, g_in


def _tanh_profile(params: dict) -> Callable[[np.ndarray], np.ndarray]:
    lo = float(params.get("low", 0.3))
    hi = float(params.get("high", 0.7))
    c = float(params.get("center", 2.0))
    width = float(params.get("width", 0.5))
    if width <= 0.0:
        raise ConfigError("tanh_profile: width must be positive")
    return lambda w: lo + (hi - lo) * 0.5 * (1.0 + np.tanh((np.asarray(w) - c) / width))


def eta1_profile_from_config(value, omega_max: float) -> Callable[[np.ndarray], np.ndarray]:
    """``"const:<v>"``, a number, an array, a table, or ``"tanh_profile:{...}"``."""
    if isinstance(value, dict) and value.get("kind") == "tanh_profile":
        return _tanh_profile(value)
    if isinstance(value, str) and value.startswith("tanh_profile"):
        _, _, arg = value.partition(":")
        try:
            params = json.loads(arg) if arg.strip() else {}
        except json.JSONDecodeError:
            raise ConfigError(f"eta1: cannot parse tanh_profile parameters {arg!r}") from None
        return _tanh_profile(params)
    prof = parse_profile(value, omega_max, "eta1")
    if prof is None:
        raise ConfigError("interface block needs eta1")
    return prof
