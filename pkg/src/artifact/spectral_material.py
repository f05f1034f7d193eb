"""Angle and frequency quadratures, and the linearized material model.

The material is described by frequency profiles: relaxation time
tau(omega), group velocity v(omega) and equilibrium weight xi(omega).
``MaterialSpec`` holds these as functions of frequency and ``MaterialSpec.build`` samples them on a
concrete ``SpectralGrid``.  Probe experiments need grids adapted to the
probe support, so the same spec is sampled on several grids.

Conventions
-----------
``AngularQuadrature`` stores the positive half of a symmetric rule; the
node ``-mu[i]`` carries the same weight ``w[i]``.  All arrays are plain
float64 numpy arrays and every object is immutable after construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ConfigError, ModelError

__all__ = [
    "AngularQuadrature",
    "SpectralGrid",
    "MaterialModel",
    "MaterialSpec",
    "ValidationItem",
    "ValidationReport",
    "build_angular_quadrature",
    "build_composite_angular_quadrature",
    "probe_angular_quadrature",
    "build_spectral_grid",
    "build_composite_spectral_grid",
    "probe_spectral_grid",
    "build_xi_from_bose_einstein",
    "validate_material",
    "material_from_config",
    "parse_profile",
]


# ---------------------------------------------------------------------------
# quadratures
# ---------------------------------------------------------------------------


def _gauss_on(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def _composite(breaks: Sequence[float], counts: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    xs, ws = [], []
    for a, b, n in zip(breaks[:-1], breaks[1:], counts):
        if b - a <= 0.0 or n == 0:
            continue
        x, w = _gauss_on(a, b, n)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


@dataclass(frozen=True)
class AngularQuadrature:
    """Symmetric rule on [-1, 1]; ``mu``/``w`` are the positive half."""

    mu: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if mu.ndim != 1 or mu.shape != w.shape or mu.size == 0:
            raise ConfigError("angular nodes and weights must be matching 1-D arrays")
        if np.any(mu <= 0.0) or np.any(mu >= 1.0):
            raise ConfigError("half-range angular nodes must lie in (0, 1)")
        if np.any(w <= 0.0):
            raise ConfigError("angular weights must be positive")
        if np.any(np.diff(mu) <= 0.0):
            raise ConfigError("half-range angular nodes must be strictly increasing")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "w", w)

    @property
    def n_half(self) -> int:
        return self.mu.size

    @property
    def nodes(self) -> np.ndarray:
        return np.concatenate([-self.mu[::-1], self.mu])

    @property
    def weights(self) -> np.ndarray:
        return np.concatenate([self.w[::-1], self.w])

    @property
    def total_weight(self) -> float:
        return 2.0 * float(self.w.sum())


def build_angular_quadrature(n: int) -> AngularQuadrature:
    """Gauss-Legendre rule with ``n`` (even) nodes on [-1, 1]."""
    if not isinstance(n, (int, np.integer)) or n < 2 or n % 2:
        raise ConfigError(f"angular order must be an even integer >= 2, got {n!r}")
    x, w = leggauss(int(n))
    pos = x > 0.0
    return AngularQuadrature(x[pos], w[pos])


def build_composite_angular_quadrature(breaks: Sequence[float], counts: Sequence[int]) -> AngularQuadrature:
    """Composite Gauss-Legendre on the half range, mirrored to [-1, 0).

    ``breaks`` must start at 0 and end at 1.
    """
    breaks = [float(b) for b in breaks]
    if len(breaks) != len(counts) + 1 or breaks[0] != 0.0 or breaks[-1] != 1.0:
        raise ConfigError("angular panel breaks must run from 0 to 1, one more than the counts")
    if any(b1 < b0 for b0, b1 in zip(breaks[:-1], breaks[1:])):
        raise ConfigError("angular panel breaks must be nondecreasing")
    if any(int(c) < 0 for c in counts):
        raise ConfigError("angular panel counts must be nonnegative")
    mu, w = _composite(breaks, [int(c) for c in counts])
    return AngularQuadrature(mu, w)


# sub-panels of the probe support in units of epsilon; the measurement
# window only sees the lower part of the support, so it is refined there
PROBE_SUBPANELS = (0.0, 0.125, 0.25, 0.5, 1.0)


def probe_angular_quadrature(mu0: float, eps: float, n_outer: int = 8, n_probe: int = 6) -> AngularQuadrature:
    """Half-range rule with panel breaks on the probe support [mu0, mu0+eps]."""
    if not (0.0 < mu0 and mu0 + eps <= 1.0 and eps > 0.0):
        raise ConfigError(f"probe angular support [{mu0}, {mu0 + eps}] must lie inside (0, 1]")
    inner = [mu0 + s * eps for s in PROBE_SUBPANELS]
    breaks = [0.0, *inner, 1.0]
    counts = [n_outer] + [n_probe] * (len(inner) - 1) + [n_outer]
    return build_composite_angular_quadrature(breaks, counts)


@dataclass(frozen=True)
class SpectralGrid:
    omega_max: float
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if x.ndim != 1 or x.shape != w.shape or x.size == 0:
            raise ConfigError("frequency nodes and weights must be matching 1-D arrays")
        if np.any(x <= 0.0) or np.any(np.diff(x) <= 0.0):
            raise ConfigError("frequency nodes must be positive and strictly increasing")
        if np.any(w <= 0.0):
            raise ConfigError("frequency weights must be positive")
        if x[-1] > self.omega_max:
            raise ConfigError("frequency nodes exceed omega_max")
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.nodes.size


def build_composite_spectral_grid(breaks: Sequence[float], counts: Sequence[int]) -> SpectralGrid:
    breaks = [float(b) for b in breaks]
    if breaks[0] < 0.0 or len(breaks) != len(counts) + 1:
        raise ConfigError("frequency panel breaks must be nonnegative, one more than the counts")
    if any(b1 < b0 for b0, b1 in zip(breaks[:-1], breaks[1:])):
        raise ConfigError("frequency panel breaks must be nondecreasing")
    x, w = _composite(breaks, [int(c) for c in counts])
    return SpectralGrid(breaks[-1], x, w)


def build_spectral_grid(omega_max: float, n: int, panel: int = 8) -> SpectralGrid:
    """Composite Gauss-Legendre on (0, omega_max] with ``panel`` nodes per panel."""
    if omega_max <= 0.0 or n < 1:
        raise ConfigError("need omega_max > 0 and at least one frequency node")
    panel = max(1, min(panel, n))
    n_panels, rest = divmod(n, panel)
    counts = [panel] * n_panels + ([rest] if rest else [])
    breaks = np.linspace(0.0, omega_max, len(counts) + 1)
    return build_composite_spectral_grid(breaks, counts)


def probe_spectral_grid(
    omega_max: float, omega0: float, eps: float, n_below: int = 4, n_probe: int = 8, n_above: int = 6
) -> SpectralGrid:
    """Frequency rule with one panel exactly on the probe support [omega0, omega0+eps]."""
    if not (0.0 < omega0 and omega0 + eps <= omega_max):
        raise ConfigError(f"probe spectral support [{omega0}, {omega0 + eps}] must lie inside (0, {omega_max}]")
    top = omega0 + eps
    mid = top + 0.25 * (omega_max - top)
    return build_composite_spectral_grid(
        [0.0, omega0, top, mid, omega_max], [n_below, n_probe, n_above - n_above // 2, n_above // 2]
    )


# ---------------------------------------------------------------------------
# equilibrium weight
# ---------------------------------------------------------------------------


def bose_einstein_shape(omega: np.ndarray, T_eq: float = 1.0, hbar_over_k0: float = 1.0) -> np.ndarray:
    """M_eq(omega)^2 exp(x) with x = hbar omega / (k0 T); unnormalized.

    Written as omega^2 / (4 sinh^2(x/2)) to avoid overflow in the tail.
    """
    omega = np.asarray(omega, dtype=float)
    x = hbar_over_k0 * omega / T_eq
    with np.errstate(over="ignore"):
        s = np.sinh(0.5 * x)
        out = omega**2 / (4.0 * s * s)
    # omega -> 0: M_eq -> k0 T / hbar and the shape tends to (T/hbar_over_k0)^2
    small = x < 1e-8
    if np.any(small):
        out = np.where(small, (T_eq / hbar_over_k0) ** 2, out)
    return np.where(np.isfinite(out), out, 0.0)


def build_xi_from_bose_einstein(
    T_eq: float, hbar: float, k0: float, grid: SpectralGrid, tau: np.ndarray
) -> np.ndarray:
    """Equilibrium weight on ``grid`` normalized so that sum(w xi / tau) = 1."""
    if T_eq <= 0.0:
        raise ConfigError("T_eq must be positive")
    tau = np.broadcast_to(np.asarray(tau, dtype=float), grid.nodes.shape)
    if np.any(tau <= 0.0):
        raise ConfigError("tau must be positive on the grid")
    raw = bose_einstein_shape(grid.nodes, T_eq, hbar / k0)
    return _normalize_xi(raw, grid, tau)


def _normalize_xi(raw: np.ndarray, grid: SpectralGrid, tau: np.ndarray) -> np.ndarray:
    s = float(np.sum(grid.weights * raw / tau))
    if not np.isfinite(s) or s <= 0.0:
        raise ModelError("equilibrium weight vanishes on the frequency grid (omega_max too small?)")
    xi = raw / s
    # one correction pass brings the normalization to the last ulp
    xi /= float(np.sum(grid.weights * xi / tau))
    return xi


# ---------------------------------------------------------------------------
# material model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaterialModel:
    grid: SpectralGrid
    tau: np.ndarray
    v: np.ndarray
    v_prime: np.ndarray
    xi: np.ndarray
    p0: float = 1.25
    v0: float = field(default=float("nan"))
    tau0: float = field(default=float("nan"))

    def __post_init__(self):
        n = self.grid.n
        for name in ("tau", "v", "v_prime", "xi"):
            arr = np.array(np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n,)))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if math.isnan(self.v0):
            object.__setattr__(self, "v0", float(np.max(self.v)))
        if math.isnan(self.tau0):
            object.__setattr__(self, "tau0", float(np.min(self.tau)))

    @property
    def omega(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def w(self) -> np.ndarray:
        return self.grid.weights

    def interp(self, name: str, omega: float) -> float:
        """Linear interpolation of a tabulated field at ``omega``."""
        return float(np.interp(omega, self.grid.nodes, getattr(self, name)))

    def normalization(self) -> float:
        return float(np.sum(self.w * self.xi / self.tau))


Profile = Callable[[np.ndarray], np.ndarray]


def parse_profile(value, omega_max: float, name: str) -> Profile | None:
    """Turn a config value into a function of frequency.

    Accepts a number, ``"const:<v>"``, a list (samples on the default
    composite grid of the material, linearly interpolated) or a dict
    ``{"omega": [...], "values": [...]}``.
    """
    if value is None:
        return None
    if isinstance(value, (int, float)):
        c = float(value)
        return lambda w: np.full(np.shape(w), c)
    if isinstance(value, str):
        kind, _, arg = value.partition(":")
        if kind.strip() == "const":
            try:
                c = float(arg)
            except ValueError:
                raise ConfigError(f"{name}: cannot parse constant {arg!r}") from None
            return lambda w: np.full(np.shape(w), c)
        raise ConfigError(f"{name}: unknown profile kind {kind!r}")
    if isinstance(value, dict):
        try:
            xs = np.asarray(value["omega"], dtype=float)
            ys = np.asarray(value["values"], dtype=float)
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{name}: table needs numeric 'omega' and 'values'") from None
        if xs.shape != ys.shape or xs.ndim != 1 or np.any(np.diff(xs) <= 0):
            raise ConfigError(f"{name}: table abscissae must be increasing and match values")
        return lambda w: np.interp(w, xs, ys)
    if isinstance(value, (list, tuple, np.ndarray)):
        ys = np.asarray(value, dtype=float)
        if ys.ndim != 1 or ys.size == 0:
            raise ConfigError(f"{name}: array profile must be a non-empty list")
        xs = build_spectral_grid(omega_max, ys.size).nodes
        return lambda w: np.interp(w, xs, ys)
    raise ConfigError(f"{name}: unsupported profile {value!r}")


def _parse_xi(value, omega_max: float):
    if isinstance(value, dict) and value.get("kind") == "bose_einstein":
        return ("bose_einstein", float(value.get("T_eq", 1.0)), float(value.get("hbar_over_k0", 1.0)))
    if isinstance(value, str) and value.startswith("bose_einstein"):
        _, _, arg = value.partition(":")
        params = {}
        if arg.strip():
            try:
                params = json.loads(arg)
            except json.JSONDecodeError:
                raise ConfigError(f"xi: cannot parse Bose-Einstein parameters {arg!r}") from None
        return ("bose_einstein", float(params.get("T_eq", 1.0)), float(params.get("hbar_over_k0", 1.0)))
    prof = parse_profile(value, omega_max, "xi")
    if prof is None:
        raise ConfigError("xi: missing")
    return ("table", prof)


@dataclass(frozen=True)
class MaterialSpec:
    """Frequency-continuous material description, sampled by ``build``."""

    omega_max: float
    n_omega: int
    n_mu: int
    tau: Profile
    v: Profile
    xi: tuple
    p0: float = 1.25
    v_prime: Profile | None = None

    def build(self, grid: SpectralGrid | None = None) -> MaterialModel:
        grid = grid or build_spectral_grid(self.omega_max, self.n_omega)
        tau = np.asarray(self.tau(grid.nodes), dtype=float)
        v = np.asarray(self.v(grid.nodes), dtype=float)
        if np.any(tau <= 0.0):
            raise ModelError(f"tau must be positive; node {int(np.argmin(tau))} has {tau.min()}")
        if self.xi[0] == "bose_einstein":
            _, T_eq, ratio = self.xi
            raw = bose_einstein_shape(grid.nodes, T_eq, ratio)
        else:
            raw = np.asarray(self.xi[1](grid.nodes), dtype=float)
        xi = _normalize_xi(raw, grid, tau)
        if self.v_prime is not None:
            vp = np.asarray(self.v_prime(grid.nodes), dtype=float)
        elif grid.n > 1:
            vp = np.gradient(v, grid.nodes)
        else:
            vp = np.zeros_like(v)
        return MaterialModel(grid, tau, v, vp, xi, self.p0)

    def angular(self) -> AngularQuadrature:
        return build_angular_quadrature(self.n_mu)


def material_from_config(block: dict) -> MaterialSpec:
    try:
        omega_max = float(block.get("omega_max", 30.0))
        n_omega = int(block.get("n_omega", 24))
        n_mu = int(block.get("n_mu", 16))
        p0 = float(block.get("p0", 1.25))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"material: {exc}") from None
    if omega_max <= 0 or n_omega < 1:
        raise ConfigError("material: omega_max and n_omega must be positive")
    tau = parse_profile(block.get("tau", "const:1"), omega_max, "tau")
    v = parse_profile(block.get("v", "const:1"), omega_max, "v")
    vp = parse_profile(block.get("v_prime"), omega_max, "v_prime")
    xi = _parse_xi(block.get("xi", "bose_einstein"), omega_max)
    return MaterialSpec(omega_max, n_omega, n_mu, tau, v, xi, p0, vp)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationItem:
    name: str
    passed: bool
    value: float
    node: int | None = None
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    items: tuple[ValidationItem, ...]

    @property
    def passed(self) -> bool:
        return all(i.passed for i in self.items)

    def __getitem__(self, name: str) -> ValidationItem:
        for item in self.items:
            if item.name == name:
                return item
        raise KeyError(name)

    def failures(self) -> list[ValidationItem]:
        return [i for i in self.items if not i.passed]


def validate_material(m: MaterialModel) -> ValidationReport:
    items = []
    w = m.w

    # relaxation time bounded away from zero
    bad = np.flatnonzero(~(m.tau > 0.0) | ~np.isfinite(m.tau))
    items.append(
        ValidationItem(
            "tau_positive",
            bad.size == 0,
            float(np.min(m.tau)),
            int(bad[0]) if bad.size else int(np.argmin(m.tau)),
            "tau0 = min tau over nodes",
        )
    )

    # bounded positive group velocity
    bad = np.flatnonzero(~(m.v > 0.0) | ~np.isfinite(m.v))
    items.append(
        ValidationItem(
            "velocity_bounded",
            bad.size == 0,
            float(np.max(m.v)),
            int(bad[0]) if bad.size else int(np.argmax(m.v)),
            "v0 = max v over nodes",
        )
    )

    bad = np.flatnonzero(~(m.xi >= 0.0))
    items.append(ValidationItem("xi_nonnegative", bad.size == 0, float(np.min(m.xi)), int(bad[0]) if bad.size else None))

    with np.errstate(all="ignore"):
        norm = float(np.sum(w * m.xi / m.tau))
    items.append(ValidationItem("xi_normalization", bool(abs(norm - 1.0) <= 1e-12), norm))

    for q in (1, 2, 4):
        val = float(np.sum(w * np.abs(m.xi) ** q))
        items.append(ValidationItem(f"xi_moment_{q}", bool(np.isfinite(val)), val))

    items.append(ValidationItem("p0_range", bool(1.0 < m.p0 < 1.5), float(m.p0), None, "need 1 < p0 < 3/2"))
    with np.errstate(all="ignore"):
        integral = float(np.sum(w * m.xi / (m.tau * m.v ** (1.0 / m.p0))))
    items.append(ValidationItem("spectral_integrability", bool(np.isfinite(integral)), integral))
    return ValidationReport(tuple(items))
