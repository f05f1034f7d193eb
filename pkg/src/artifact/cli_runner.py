"""Command-line entry point: simulate | probe | reconstruct | validate | sweep.

Configuration is JSON, deep-merged over the defaults shipped with the
package.  Every command writes its results plus the fully resolved
configuration to the output directory.  Result files are deterministic
for a given configuration and seed; only ``metadata.json`` carries
timings.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .analytic_solutions import make_probe
from .errors import ArtifactError, AssumptionError, ConfigError, NumericalError
from .estimate_suite import (
    EstimateReport,
    Tolerances,
    assumption_audit,
    collect_run,
    l1_budget,
    lp_bound,
    maximum_principle,
)
from .interface_model import derive_coefficients, eta1_profile_from_config
from .probe_reconstruction import (
    MeasurementRecord,
    SolverConfig,
    extrapolate_eta1,
    frequency_sweep,
    geometric_epsilons,
    least_squares_reconstruct,
    measure,
    probe_setup,
    run_probe_experiment,
)
from .spectral_material import material_from_config
from .transport_kernel import (
    SpatialGrid,
    TransportSolver,
    equilibrium_inflow,
    probe_inflow,
    run_forward,
    zero_inflow,
)

COMMANDS = ("simulate", "probe", "reconstruct", "validate", "sweep")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def load_defaults() -> dict:
    return json.loads(resources.files("artifact").joinpath("defaults.json").read_text())


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_config(path: str | None, seed: int | None = None) -> dict:
    cfg = load_defaults()
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(user) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config blocks: {sorted(unknown)}")
        cfg = _merge(cfg, user)
    if seed is not None:
        cfg["seed"] = seed
    return cfg


def _positive(block: dict, name: str, kind=float, where: str = ""):
    try:
        val = kind(block[name])
    except KeyError:
        raise ConfigError(f"{where}{name} is missing") from None
    except (TypeError, ValueError):
        raise ConfigError(f"{where}{name} must be a number, got {block[name]!r}") from None
    if not val > 0:
        raise ConfigError(f"{where}{name} must be positive, got {val}")
    return val


class Setup:
    """Validated, built objects shared by the commands."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        mat = cfg["material"]
        self.spec = material_from_config(mat)
        iface = cfg["interface"]
        self.eta1 = eta1_profile_from_config(iface.get("eta1"), self.spec.omega_max)
        self.gamma0 = _positive(iface, "gamma0", where="interface.")
        g = cfg["grid"]
        self.grid = SpatialGrid(
            _positive(g, "nx_left", int, "grid."), _positive(g, "nx_right", int, "grid."), _positive(g, "L", where="grid.")
        )
        self.dt = _positive(g, "dt", where="grid.")
        self.T_end = None if g.get("T_end") is None else _positive(g, "T_end", where="grid.")
        pr = cfg["probe"]
        self.mu0 = _positive(pr, "mu0", where="probe.")
        self.omega0 = _positive(pr, "omega0", where="probe.")
        self.omega0_list = [float(w) for w in pr.get("omega0_list") or []]
        exp = cfg["experiment"]
        eps = exp.get("epsilons")
        if isinstance(eps, dict):
            self.epsilons = geometric_epsilons(
                _positive(eps, "eps_max", where="experiment.epsilons."),
                _positive(eps, "count", int, "experiment.epsilons."),
                _positive(eps, "ratio", where="experiment.epsilons."),
            )
        elif isinstance(eps, list) and eps:
            self.epsilons = [float(e) for e in eps]
        else:
            raise ConfigError("experiment.epsilons must be a list or {eps_max, count, ratio}")
        quad = exp.get("quadrature", {})
        try:
            self.solver = SolverConfig(
                self.grid.nx_left, self.grid.nx_right, self.grid.L, self.dt, **{k: int(v) for k, v in quad.items()}
            )
        except TypeError as exc:
            raise ConfigError(f"experiment.quadrature: {exc}") from None
        self.channels = tuple(exp.get("channels") or ())
        self.pin_q = bool(cfg["fit"].get("pin_q", False))
        self.seed = int(cfg.get("seed", 0))
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(setup: Setup, out: Path, jobs: int) -> dict:
    """Forward run; trace CSV (t, mu, omega, value) for the outgoing directions."""
    sim = setup.cfg["simulate"]
    kind = sim.get("inflow", "probe")
    init = sim.get("init", "zero")
    probe = None
    if kind == "probe":
        ps = probe_setup(setup.spec, setup.eta1, setup.gamma0, setup.mu0, setup.omega0,
                         float(sim.get("epsilon", setup.epsilons[0])), setup.solver)  # fmt: skip
        m, q, coeffs, probe = ps.m, ps.q, ps.coeffs, ps.probe
        phi = probe_inflow(probe)
    else:
        m, q = setup.spec.build(), setup.spec.angular()
        coeffs = derive_coefficients(setup.eta1, setup.gamma0, m, q)
        if kind == "zero":
            phi = zero_inflow()
        elif kind == "equilibrium":
            phi = equilibrium_inflow(m, float(sim.get("scale", 1.0)))
        else:
            raise ConfigError(f"simulate.inflow must be probe, zero or equilibrium, got {kind!r}")
    T_end = setup.T_end
    if T_end is None:
        if probe is None:
            raise ConfigError("grid.T_end is required unless the inflow is a probe")
        T_end = math.ceil((probe.t1 + probe.eps) / setup.dt - 1e-9) * setup.dt
    stride = int(sim.get("trace_stride", 1))
    if stride < 1:
        raise ConfigError("simulate.trace_stride must be >= 1")

    results: dict = {"inflow": kind, "init": init}
    if init == "equilibrium":
        results["equilibrium_deviation"] = _equilibrium_deviation(setup, m, q, coeffs, phi, T_end)
    trace = run_forward(m, coeffs, phi, T_end, setup.dt, setup.grid, q, init=init)
    trace.meta.pop("lattice", None)
    if probe is not None:
        results["probe"] = {"mu0": probe.mu0, "omega0": probe.omega0, "epsilon": probe.eps, "t1": probe.t1}
        results["M"] = measure(trace, probe.t1, probe.eps)
    results["max_abs_outgoing"] = float(np.max(np.abs(trace.outgoing)))

    idx = np.arange(0, trace.times.size, stride)
    rows = (
        (_fmt(trace.times[n]), _fmt(-trace.mu[i]), _fmt(trace.omega[w]), _fmt(trace.outgoing[n, i, w]))
        for n in idx
        for i in range(trace.mu.size)
        for w in range(trace.omega.size)
    )
    _write_csv(out / "trace.csv", ["t", "mu", "omega", "f"], rows)
    _dump(out / "results.json", results)
    return {"run": trace.meta}


def _equilibrium_deviation(setup, m, q, coeffs, phi, T_end) -> float:
    solver = TransportSolver(m, coeffs, q, setup.grid, setup.dt, phi, init="equilibrium")
    worst = 0.0
    for _ in range(int(round(T_end / setup.dt))):
        solver.step()
        s = solver.snapshot()
        worst = max(worst, float(np.max(np.abs(s.f - m.xi))), float(np.max(np.abs(s.g - coeffs.gamma0 * m.xi))))
    return worst


def _records_outputs(records, out: Path) -> None:
    _dump(out / "records.json", [r.as_dict() for r in records])
    rows = [
        (_fmt(r.epsilon), _fmt(r.M_value), _fmt(r.C_value), _fmt(r.eta1_raw),
         "" if math.isnan(r.eta1_true) else _fmt(abs(r.eta1_raw - r.eta1_true)))
        for r in records
    ]  # fmt: skip
    _write_csv(out / "convergence.csv", ["epsilon", "M", "C", "M_over_C", "abs_error"], rows)


def _experiment(setup: Setup, jobs: int, omega0=None):
    return run_probe_experiment(
        setup.spec, setup.eta1, setup.gamma0, setup.mu0, setup.omega0 if omega0 is None else omega0,
        setup.epsilons, setup.solver, channels=setup.channels, jobs=jobs,
    )  # fmt: skip


def cmd_probe(setup: Setup, out: Path, jobs: int) -> dict:
    """Probe experiment over the epsilon list; records and convergence table."""
    records = _experiment(setup, jobs)
    _records_outputs(records, out)
    return {"seconds_per_record": [r.seconds for r in records]}


def _coefficient_csv(path: Path, rows) -> None:
    _write_csv(path, ["omega0", "eta1", "eta2", "zeta1", "zeta2"],
               [[_fmt(r[k]) for k in ("omega0", "eta1", "eta2", "zeta1", "zeta2")] for r in rows])  # fmt: skip


def cmd_reconstruct(setup: Setup, out: Path, jobs: int) -> dict:
    """Estimate eta1 from measurement records, fresh or loaded from a file."""
    rc = setup.cfg["reconstruct"]
    if rc.get("records"):
        try:
            raw = json.loads(Path(rc["records"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read records {rc['records']}: {exc}") from None
        if not isinstance(raw, list):
            raise ConfigError("records file must hold a list of records")
        records = [MeasurementRecord.from_dict(d) for d in raw]
    else:
        records = _experiment(setup, jobs)
        _records_outputs(records, out)
    result = extrapolate_eta1(records, gamma0=setup.gamma0, omega0=setup.omega0, pin_q=setup.pin_q, p0=setup.spec.p0)
    payload = result.as_dict()
    ls_cfg = rc.get("least_squares", {})
    if ls_cfg.get("enabled"):
        payload["least_squares"] = _least_squares(setup, ls_cfg)
    _dump(out / "reconstruction.json", payload)
    _coefficient_csv(out / "coefficients.csv", [result.coefficient_row()])
    return {}


def _least_squares(setup: Setup, ls_cfg: dict) -> dict:
    """Synthetic inversion: observe the configured truth, fit from the initial guess."""
    observed = []
    for eps in setup.epsilons:
        ps = probe_setup(setup.spec, setup.eta1, setup.gamma0, setup.mu0, setup.omega0, eps, setup.solver)
        tr = run_forward(ps.m, ps.coeffs, probe_inflow(ps.probe), ps.n_steps * ps.dt, ps.dt, ps.grid, ps.q)
        observed.append((ps, tr))
    res = least_squares_reconstruct(
        observed, setup.gamma0, ls_cfg.get("initial", 0.5), knots=ls_cfg.get("knots"),
        noise=float(ls_cfg.get("noise", 0.0)), seed=setup.seed, tol=float(ls_cfg.get("tol", 1e-4)),
        max_sweeps=int(ls_cfg.get("max_sweeps", 20)),
    )  # fmt: skip
    return {
        "knots": res.knots,
        "values": res.values,
        "misfit_history": res.misfit_history,
        "status": res.status,
        "evaluations": res.evaluations,
    }


def cmd_validate(setup: Setup, out: Path, jobs: int) -> dict:
    """Assumption audit and a priori estimate checks for one forward run."""
    val = setup.cfg["validate"]
    kind = val.get("inflow", "probe")
    tol = Tolerances(**val.get("tolerances", {}))
    ps_list = [float(p) for p in val.get("p", [2.0])]
    probe = None
    if kind == "probe":
        ps = probe_setup(setup.spec, setup.eta1, setup.gamma0, setup.mu0, setup.omega0,
                         float(val.get("epsilon", setup.epsilons[0])), setup.solver, check_assumption=False)  # fmt: skip
        m, q, coeffs, probe = ps.m, ps.q, ps.coeffs, ps.probe
        phi = probe_inflow(probe)
    elif kind == "equilibrium":
        m, q = setup.spec.build(), setup.spec.angular()
        coeffs = derive_coefficients(setup.eta1, setup.gamma0, m, q)
        phi = equilibrium_inflow(m, float(val.get("m0") or 1.0))
    else:
        raise ConfigError(f"validate.inflow must be probe or equilibrium, got {kind!r}")
    T_end = setup.T_end
    if T_end is None:
        if probe is None:
            raise ConfigError("grid.T_end is required unless the inflow is a probe")
        T_end = math.ceil((probe.t1 + probe.eps) / setup.dt - 1e-9) * setup.dt
    run = collect_run(m, coeffs, q, setup.grid, setup.dt, phi, T_end,
                      record_every=int(val.get("record_every", 10)), lp=ps_list)  # fmt: skip
    m0 = val.get("m0")
    m0 = float(m0) if m0 is not None else float(phi.sup_ratio(m, q.mu))
    report = l1_budget(run, tol) + maximum_principle(run, m0, tol)
    for p in ps_list:
        report = report + lp_bound(run, p, tol)
    audit = assumption_audit(m, probe, setup.grid) if probe is not None else EstimateReport([])
    full = report + audit
    (out / "report.json").write_text(full.to_json() + "\n")
    print(full.table())
    if not audit.passed:
        failed = [c.name for c in audit.checks if not c.passed]
        raise AssumptionError(f"assumption audit failed: {failed}")
    if not report.passed:
        failed = [c.name for c in report.checks if not c.passed]
        raise NumericalError(f"estimate checks failed: {failed}")
    return {}


def cmd_sweep(setup: Setup, out: Path, jobs: int) -> dict:
    """Reconstruction at every frequency of probe.omega0_list."""
    omegas = setup.omega0_list or [setup.omega0]
    entries = frequency_sweep(
        setup.spec, setup.eta1, setup.gamma0, setup.mu0, omegas, setup.epsilons, setup.solver,
        pin_q=setup.pin_q, jobs=jobs,
    )  # fmt: skip
    rows, summary = [], []
    for e in entries:
        sub = out / f"omega0_{e.omega0:g}"
        sub.mkdir(parents=True, exist_ok=True)
        if e.ok:
            _dump(sub / "reconstruction.json", e.result.as_dict())
            _records_outputs(e.result.records, sub)
            rows.append(e.result.coefficient_row())
            summary.append({"omega0": e.omega0, "ok": True, "eta1": e.result.eta1_estimate})
        else:
            _dump(sub / "error.json", {"omega0": e.omega0, "error": e.error, "exit_code": e.exit_code})
            summary.append({"omega0": e.omega0, "ok": False, "error": e.error, "exit_code": e.exit_code})
    _coefficient_csv(out / "coefficients.csv", rows)
    _dump(out / "sweep.json", summary)
    failed = [e for e in entries if not e.ok]
    if failed:
        worst = max(failed, key=lambda e: e.exit_code)
        err = ArtifactError(f"{len(failed)} of {len(entries)} frequencies failed; first: {worst.error}")
        err.exit_code = worst.exit_code
        raise err
    return {}


HANDLERS = {
    "simulate": cmd_simulate,
    "probe": cmd_probe,
    "reconstruct": cmd_reconstruct,
    "validate": cmd_validate,
    "sweep": cmd_sweep,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artifact", description="Two-layer phonon transport and interface probing.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HANDLERS[name].__doc__.splitlines()[0] if HANDLERS[name].__doc__ else None)
        p.add_argument("--config", metavar="PATH", help="JSON config merged over the shipped defaults")
        p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: ./out)")
        p.add_argument("--jobs", metavar="N", type=int, default=os.cpu_count() or 1, help="worker processes")
        p.add_argument("--seed", metavar="U64", type=int, default=None, help="seed for the noise study")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = resolve_config(args.config, args.seed)
        setup = Setup(cfg)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _dump(out / "config.json", cfg)
        extra = HANDLERS[args.command](setup, out, args.jobs)
    except ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    meta = {"command": args.command, "version": __version__, "seconds": time.time() - started, **(extra or {})}
    _dump(out / "metadata.json", meta)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
