"""Scenario orchestration behind the CLI: runs, summaries and convergence studies."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import config as cfgmod
from . import diagnostics as dg
from . import operators as ops
from . import presets, verify
from .dynamics import ShearSolver, SolverConfig, State, momentum, run
from .errors import ConfigError, InstabilityError, VacuumError
from .grid import TorusGrid
from .kernel import LatticeKernel
from .symbols import metric_symbol

EXIT_OK, EXIT_VIOLATION, EXIT_INSTABILITY, EXIT_CONFIG = 0, 1, 2, 3
WORKERS_ENV = "TOPOFLOCK_WORKERS"

MASS_TOL_PER_TIME = 1e-12
MOMENTUM_TOL = 1e-6
MONOTONE_TOL = 1e-10
ENERGY_LAW_TOL = 0.05
SHEAR_TOL = 1e-8
SHEAR_MATCH_TOL = 1e-3
FIT_R2_MIN = 0.99
METRIC_TOL = 1e-3


@dataclass
class Outcome:
    exit_code: int
    summary: dict
    records: list = field(default_factory=list)
    state: State | None = None
    verdicts: dict = field(default_factory=dict)


def workspace(cfg: cfgmod.ScenarioConfig) -> LatticeKernel:
    return LatticeKernel(TorusGrid(cfg.dim, cfg.N), cfg.kernel_params(),
                         vacuum_threshold=cfg.vacuum_threshold)


def solver_config(cfg: cfgmod.ScenarioConfig) -> SolverConfig:
    return SolverConfig(t_end=cfg.t_end, cfl=cfg.cfl, max_steps=cfg.max_steps,
                        dealias=cfg.dealias, diag_every=cfg.diag_every)


def momentum_scale(s: State, g: TorusGrid) -> float:
    """Normaliser for momentum drift: ``max(|P(0)|, int rho |u|)`` at t = 0."""
    speed = np.sqrt(np.sum(s.u ** 2, axis=0))
    return max(float(np.linalg.norm(momentum(s, g))), g.integrate(s.rho * speed))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "pass" if v else "fail"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def write_summary(summary: dict, path) -> None:
    with open(path, "w") as fh:
        for k, v in summary.items():
            fh.write(f"{k} = {_fmt(v)}\n")


def _record_verdicts(records: list, s0: State, ws: LatticeKernel, t_end: float) -> tuple[dict, dict]:
    g = ws.grid
    stats, verdicts = {}, {}
    if not records:
        return stats, verdicts
    m0 = records[0].mass
    stats["mass_drift"] = max(abs(r.mass - m0) for r in records) / m0
    verdicts["mass_conservation"] = stats["mass_drift"] <= MASS_TOL_PER_TIME * max(1.0, t_end)
    p0 = np.array(records[0].momentum)
    scale = momentum_scale(s0, g)
    drift = max(float(np.linalg.norm(np.array(r.momentum) - p0)) for r in records)
    stats["momentum_drift"] = drift / scale if scale > 0 else drift
    verdicts["momentum_conservation"] = stats["momentum_drift"] <= MOMENTUM_TOL
    amp = np.array([r.amplitude for r in records])
    a0 = amp[0]
    stats["amplitude_ratio"] = float(amp.max() / a0) if a0 > 0 else 0.0
    verdicts["max_principle"] = bool(np.all(amp <= a0 * (1 + MONOTONE_TOL) + 1e-300))
    verdicts["amplitude_nonincreasing"] = dg.nonincreasing(amp, MONOTONE_TOL * a0)
    energy = np.array([r.energy for r in records])
    verdicts["energy_nonincreasing"] = dg.nonincreasing(energy, MONOTONE_TOL * energy[0])
    dmax = max(r.dissipation for r in records)
    eres = max(r.energy_residual for r in records)
    stats["max_energy_residual"] = eres
    stats["max_energy_residual_rel"] = eres / dmax if dmax > 0 else 0.0
    if dmax > 0 and len(records) >= 3:
        verdicts["energy_law"] = stats["max_energy_residual_rel"] <= ENERGY_LAW_TOL
    evals = [r.e_eq_residual for r in records if not math.isnan(r.e_eq_residual)]
    stats["max_e_eq_residual"] = max(evals) if evals else math.nan
    stats["density_growth_excess"] = dg.density_growth_violation(records, g.dim)
    verdicts["density_bounds"] = stats["density_growth_excess"] <= 0
    stats["max_grad_u_inf"] = max(r.grad_u_inf for r in records)
    stats["max_grad_rho_inf"] = max(r.grad_rho_inf for r in records)
    return stats, verdicts


def _metric_check(cfg, ws) -> tuple[dict, dict]:
    g, p = ws.grid, ws.params
    x = g.coords[0]
    rho = np.full(g.shape, cfg.rho_mean)
    errs = []
    for k in range(1, 9):
        f = np.cos(k * x)
        lf = ops.topo_diffusion(f, rho, ws)
        m_num = -float(np.sum(lf * f) / np.sum(f * f))
        errs.append(abs(m_num / metric_symbol(k, p, g.dim) - 1))
    stats = {"metric_rel_err_k1_8": errs, "metric_max_rel_err": max(errs)}
    return stats, {"metric_symbol": max(errs) <= METRIC_TOL}


class _ShearProbe:
    """Wraps the diagnostics sink and tracks shear-structure defects."""

    def __init__(self, inner):
        self.inner = inner
        self.defect = 0.0
        self.u_inf = []

    def __call__(self, s: State, step: int):
        self.defect = max(self.defect, float(np.max(np.abs(s.u[1]))),
                          float(np.max(np.ptp(s.u[0], axis=0))), float(np.max(np.ptp(s.rho, axis=0))))
        self.u_inf.append(float(np.max(np.abs(s.u[0]))))
        return self.inner(s, step)


def execute(cfg: cfgmod.ScenarioConfig, write: bool = True, run_verify: bool = True) -> Outcome:
    """Run one scenario; never raises for runtime failures (they map to exit codes)."""
    summary = {"scenario": cfg.scenario, "dim": cfg.dim, "N": cfg.N, "alpha": cfg.alpha, "tau": cfg.tau,
               "r0": cfg.r0, "Lambda": cfg.Lambda, "kappa": cfg.kappa, "preset": cfg.preset,
               "seed": cfg.seed, "t_end": cfg.t_end, "cfl": cfg.cfl}
    if run_verify:
        suite = verify.run_suite(quick=True)
        summary["verify_status"] = "pass" if all(c.passed for c in suite) else "fail"
        summary["verify_failed"] = ",".join(c.name for c in suite if not c.passed) or "none"
    else:
        summary["verify_status"] = "skipped"
    summary["suite_hash"] = verify.suite_hash()

    ws = workspace(cfg)
    g = ws.grid
    s0 = presets.build(cfg, g)
    stats, verdicts, records, state = {}, {}, [], None
    status, code, error = "ok", EXIT_OK, ""

    if cfg.scenario == "metric_check":
        stats, verdicts = _metric_check(cfg, ws)
        state = s0
    else:
        ubar = momentum(s0, g) / g.integrate(s0.rho)
        diag = dg.Diagnostics(ws, cfg.m, ubar, cfg.checkpoint_dt, cfg.e_residual)
        sink = _ShearProbe(diag) if cfg.scenario == "shear_2d" else diag
        scfg = solver_config(cfg)
        try:
            res = run(s0, ws, scfg, sink)
            state = res.state
            summary["steps"] = res.steps
            summary["dt_min"] = res.dt_min
            summary["dt_max"] = res.dt_max
        except VacuumError as exc:
            status, code, error = "vacuum", EXIT_VIOLATION, str(exc)
        except InstabilityError as exc:
            status, code, error = "instability", EXIT_INSTABILITY, str(exc)
        records = diag.finalize()
        stats, verdicts = _record_verdicts(records, s0, ws, cfg.t_end)
        if state is not None and cfg.scenario == "shear_2d":
            solver = ShearSolver(ws, s0.rho[0])
            U_red, _ = solver.run(s0.u[0][0], scfg)
            stats["shear_defect"] = sink.defect
            stats["shear_reduced_rel_err"] = float(np.max(np.abs(state.u[0][0] - U_red)) / np.max(np.abs(U_red)))
            verdicts["shear_invariance"] = sink.defect <= SHEAR_TOL
            verdicts["shear_u_nonincreasing"] = dg.nonincreasing(sink.u_inf, MONOTONE_TOL * sink.u_inf[0])
            verdicts["shear_reduced_match"] = stats["shear_reduced_rel_err"] <= SHEAR_MATCH_TOL
        if state is not None and cfg.scenario == "nearly_aligned":
            t = np.array([r.t for r in records])
            a = np.array([r.amplitude for r in records])
            keep = t >= cfg.fit_t0
            try:
                rate, r2 = dg.fit_exponential_decay(t[keep], a[keep])
                stats["decay_rate"], stats["decay_r2"] = rate, r2
                verdicts["exponential_alignment"] = r2 > FIT_R2_MIN
            except ValueError as exc:
                stats["decay_fit"] = f"unavailable ({exc})"
                verdicts["exponential_alignment"] = False
            cps = [v for _, v in diag.flock.checkpoints]
            stats["flocking_checkpoints"] = cps
            verdicts["flocking_decreasing"] = len(cps) >= 2 and bool(np.all(np.diff(cps) < 0))

    if code == EXIT_OK and not all(verdicts.values()):
        status, code = "invariant_violation", EXIT_VIOLATION
    summary["status"] = status
    summary["exit_code"] = code
    if error:
        summary["error"] = error
    summary["records"] = len(records)
    if records:
        last = records[-1]
        for name, val in zip(dg.columns(cfg.dim), last.row()):
            summary[f"final_{name}"] = val
    summary.update(stats)
    for k, v in verdicts.items():
        summary[f"verdict_{k}"] = v
    if write:
        dg.csv_emit(records, cfg.output, cfg.dim)
        write_summary(summary, cfg.summary_path)
    return Outcome(code, summary, records, state, verdicts)


def worker_count(tasks: int) -> int:
    cap = os.environ.get(WORKERS_ENV)
    n = min(tasks, os.cpu_count() or 1)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {cap!r}") from None
    return n


def _level(cfg: cfgmod.ScenarioConfig):
    out = execute(cfg, write=False, run_verify=False)
    if out.state is None:
        raise InstabilityError(f"level N={cfg.N} failed: {out.summary.get('error', out.summary['status'])}")
    rec = out.records
    eres = max((r.energy_residual for r in rec), default=math.nan)
    evals = [r.e_eq_residual for r in rec if not math.isnan(r.e_eq_residual)]
    return out.state.rho, out.state.u, eres, max(evals) if evals else math.nan


def _orders(errors: list[float]) -> list[float]:
    out = []
    for a, b in zip(errors[:-1], errors[1:]):
        out.append(math.log2(a / b) if a > 0 and b > 0 else math.nan)
    return out


def convergence(cfg: cfgmod.ScenarioConfig, levels: int = 3) -> dict:
    """Self-convergence at ``N, 2N, ..., 2^(levels-1) N``."""
    if levels < 3:
        raise ConfigError("convergence needs at least 3 levels")
    cfgs = [cfg.with_overrides(N=cfg.N * 2 ** i) for i in range(levels)]
    workers = worker_count(levels)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_level, cfgs))
    else:
        results = [_level(c) for c in cfgs]
    dim = cfg.dim
    sub = (slice(None, None, 2),) * dim
    report = {"scenario": cfg.scenario, "levels": [c.N for c in cfgs], "workers": workers}
    flags = []
    for name, idx in (("rho", 0), ("u", 1)):
        errs = []
        for coarse, fine in zip(results[:-1], results[1:]):
            a, b = coarse[idx], fine[idx]
            b = b[(slice(None),) + sub] if b.ndim > dim else b[sub]
            errs.append(float(np.max(np.abs(a - b))))
        scale = max(1.0, float(np.max(np.abs(results[-1][idx]))))
        report[f"{name}_errors"] = errs
        if max(errs) <= 1e-13 * scale:
            report[f"{name}_orders"] = "exact"
            continue
        report[f"{name}_orders"] = _orders(errs)
        if any(b > a for a, b in zip(errs[:-1], errs[1:])):
            flags.append(f"{name}_non_monotone")
    for name, idx in (("energy_residual", 2), ("e_eq_residual", 3)):
        vals = [r[idx] for r in results]
        report[name] = vals
        if all(not math.isnan(v) for v in vals):
            if max(vals) <= 1e-13:
                report[f"{name}_orders"] = "exact"
            else:
                report[f"{name}_orders"] = _orders(vals)
                if any(b > a for a, b in zip(vals[:-1], vals[1:])):
                    flags.append(f"{name}_non_monotone")
    report["flags"] = ",".join(flags) or "none"
    return report
