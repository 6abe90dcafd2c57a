"""Paired runs and parameter sweeps measuring convergence rates in ``eps``."""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from mixflow.constitutive import relative_quantities
from mixflow.errors import GridMismatch, RefinementBudgetExceeded, StepFailure
from mixflow.initial import InitialCondition
from mixflow.solver_type1 import Grid1D, RunResult, SimConfig, run, stable_dt
from mixflow.solver_type2 import (
    mixture_conserved, run_type2, stable_dt_type2, well_prepared_init,
)

DT_SAFETY = 0.8
SMOOTHNESS_LIMIT = 5.0


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("MIXFLOW_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    items = list(items)
    workers = min(worker_count(), len(items)) or 1
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class OrderFit:
    slope: float
    intercept: float
    r2: float
    residual: float  # RMS misfit in log space


def fit_order(x, y) -> OrderFit:
    """Least-squares line through ``(log x, log y)``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    if lx.size < 3:
        raise ValueError("an order fit needs at least three points")
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res**2)) / ss_tot if ss_tot > 0 else 1.0
    return OrderFit(float(slope), float(intercept), r2, float(np.sqrt(np.mean(res**2))))


def relative_entropy_series(run_eps: RunResult, run_base: RunResult, cfg: SimConfig,
                            time_tol: float = 1e-9):
    """Spatial integral of ``I(U|U_bar)`` at the snapshot times of ``run_eps``.

    The baseline is sampled at its nearest snapshot; a mismatch larger than
    ``time_tol`` raises :class:`GridMismatch`.
    """
    if run_eps.grid != run_base.grid:
        raise GridMismatch("trajectories live on different grids")
    dx = run_eps.grid.dx
    base_t = np.array([s.t for s in run_base.snapshots])
    times, values = [], []
    for snap in run_eps.snapshots:
        k = int(np.argmin(np.abs(base_t - snap.t)))
        if abs(base_t[k] - snap.t) > time_tol * max(1.0, abs(snap.t)):
            raise GridMismatch(f"no baseline snapshot near t={snap.t:.6g}")
        a, b = snap.state, run_base.snapshots[k].state
        rq = relative_quantities(cfg.model, (a.rho, a.theta), (b.rho, b.theta), a.v, b.v)
        times.append(snap.t)
        values.append(float(np.sum(rq.I) * dx))
    return np.array(times), np.array(values)


def max_velocity_gradient(result: RunResult) -> float:
    dx = result.grid.dx
    return max(float(np.max(np.abs(np.roll(s.state.v, -1) - s.state.v))) / dx
               for s in result.snapshots)


@dataclass
class SweepReport:
    kind: str
    eps: list
    values: list
    fit: OrderFit | None
    grid: list
    runtime_seconds: float
    series: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        key = "gap" if self.kind == "ce-gap" else "sup_I"
        out = {
            "eps": self.eps,
            key: self.values,
            "slope": None if self.fit is None else self.fit.slope,
            "fit_residual": None if self.fit is None else self.fit.residual,
            "r2": None if self.fit is None else self.fit.r2,
            "grid": self.grid,
            "runtime_seconds": self.runtime_seconds,
            "checks": self.checks,
            "notes": self.notes,
        }
        if key != "sup_I":
            out["sup_I"] = self.values
        return out


def _shared_dt(cfgs, grid, prim) -> float:
    return DT_SAFETY * min(stable_dt(prim, grid, c) for c in cfgs)


def _cadence(t_end: float, dt: float, samples: int = 50) -> int:
    """Snapshot spacing in steps so that at least ``samples`` intervals are stored."""
    steps = int(np.ceil(t_end / dt))
    return max(1, steps // samples)


def _theorem_sweep(kind: str, template: SimConfig, grid: Grid1D, ic: InitialCondition,
                   eps_list, base_cfg: SimConfig, run_cfgs) -> SweepReport:
    start = time.perf_counter()
    prim = ic.build(grid.x, template.model)
    dt = _shared_dt([base_cfg, *run_cfgs], grid, prim)
    every = _cadence(template.t_end, dt)
    base_cfg = replace(base_cfg, dt=dt, snapshot_every=every)
    run_cfgs = [replace(c, dt=dt, snapshot_every=every) for c in run_cfgs]
    base = run(base_cfg, grid, prim)

    def one(c):
        try:
            res = run(c, grid, prim)
        except StepFailure as exc:
            return None, str(exc)
        return res, None

    results = _map(one, run_cfgs)
    values, series, notes = [], {}, []
    checks = dict(min_zeta=float(base.checks["min_zeta"]),
                  max_step_drift=float(base.checks["max_step_drift"]),
                  max_grad_v_times_T=max_velocity_gradient(base) * template.t_end)
    kept_eps = []
    for eps, c, (res, err) in zip(eps_list, run_cfgs, results):
        if res is None:
            notes.append(f"eps={eps:g} aborted: {err}")
            continue
        t, I = relative_entropy_series(res, base, c)
        values.append(float(I.max()))
        kept_eps.append(float(eps))
        series[float(eps)] = (t, I)
        checks["min_zeta"] = min(checks["min_zeta"], float(res.checks["min_zeta"]))
        checks["max_step_drift"] = max(checks["max_step_drift"], float(res.checks["max_step_drift"]))
        checks["max_grad_v_times_T"] = max(checks["max_grad_v_times_T"],
                                           max_velocity_gradient(res) * template.t_end)
    if checks["max_grad_v_times_T"] > SMOOTHNESS_LIMIT:
        notes.append("velocity gradient exceeded the smoothness limit")
    positive = [(e, v) for e, v in zip(kept_eps, values) if e > 0 and v > 0]
    fit = fit_order(*zip(*positive)) if len(positive) >= 3 else None
    return SweepReport(kind, kept_eps, values, fit, [grid.n_cells],
                       time.perf_counter() - start, series, checks, notes)


def sweep_theorem1(template: SimConfig, grid: Grid1D, ic: InitialCondition, eps_list,
                   kappa: float) -> SweepReport:
    """``eps > 0`` against ``eps = 0`` at fixed conductivity ``kappa``."""
    model = template.model.with_kappa(kappa)
    base = replace(template, model=model, eps=0.0)
    runs = [replace(template, model=model, eps=float(e)) for e in eps_list]
    return _theorem_sweep("thm1", template, grid, ic, eps_list, base, runs)


def sweep_theorem2(template: SimConfig, grid: Grid1D, ic: InitialCondition, eps_list,
                   kappa_equals_eps: bool = True) -> SweepReport:
    """``eps > 0`` (with ``kappa = eps`` by default) against ``eps = kappa = 0``."""
    base = replace(template, model=template.model.with_kappa(0.0), eps=0.0)
    runs = [replace(template, eps=float(e),
                    model=template.model.with_kappa(float(e) if kappa_equals_eps else 0.0))
            for e in eps_list]
    return _theorem_sweep("thm2", template, grid, ic, eps_list, base, runs)


def conserved_gap(run1: RunResult, run2: RunResult, n: int) -> tuple[np.ndarray, np.ndarray]:
    """L2 distance of ``(rho_i, momentum, E)`` at the shared snapshot times."""
    if run1.grid != run2.grid or len(run1.snapshots) != len(run2.snapshots):
        raise GridMismatch("trajectories are not aligned")
    dx = run1.grid.dx
    times, gaps = [], []
    for a, b in zip(run1.snapshots, run2.snapshots):
        if abs(a.t - b.t) > 1e-9 * max(1.0, abs(a.t)):
            raise GridMismatch(f"snapshot times differ: {a.t} vs {b.t}")
        diff = a.U - mixture_conserved(b.U, n)
        times.append(a.t)
        gaps.append(float(np.sqrt(np.sum(diff**2) * dx)))
    return np.array(times), np.array(gaps)


def gap_at(template: SimConfig, ic: InitialCondition, eps: float, n_cells: int,
           well_prepared: bool = True):
    """Gap between the stiff and reduced solvers for one ``eps`` and grid."""
    grid = Grid1D(n_cells)
    cfg = replace(template, eps=float(eps))
    prim = ic.build(grid.x, cfg.model)
    init2 = well_prepared_init(prim, grid, cfg if well_prepared else replace(cfg, eps=0.0))
    dt = DT_SAFETY * min(stable_dt(prim, grid, cfg), stable_dt_type2(init2, grid, cfg))
    cfg = replace(cfg, dt=dt, snapshot_every=_cadence(cfg.t_end, dt))
    r1 = run(cfg, grid, prim)
    r2 = run_type2(cfg, grid, init2)
    t, g = conserved_gap(r1, r2, cfg.model.n)
    checks = dict(min_zeta=min(float(r1.checks["min_zeta"]), float(r2.checks["min_zeta"])),
                  max_step_drift=max(float(r1.checks["max_step_drift"]),
                                     float(r2.checks["max_step_drift"])))
    return t, g, checks


def chapman_enskog_gap(template: SimConfig, ic: InitialCondition, eps_list,
                       n_cells: int = 128, max_cells: int = 2048, rtol: float = 0.1,
                       atol: float = 1e-12, well_prepared: bool = True) -> SweepReport:
    """Measure ``sup_t ||U_II - U_I||`` per ``eps``, refining until it settles.

    The grid is doubled until two successive gaps differ by less than
    ``rtol`` relative or ``atol`` absolute; the finer value is kept.
    """
    start = time.perf_counter()

    def converge(eps):
        N = n_cells
        t, g, checks = gap_at(template, ic, eps, N, well_prepared)
        prev = float(g.max())
        while True:
            N *= 2
            if N > max_cells:
                raise RefinementBudgetExceeded(
                    f"gap for eps={eps:g} not converged at {N // 2} cells")
            t, g, ch = gap_at(template, ic, eps, N, well_prepared)
            cur = float(g.max())
            checks = {k: (min if k == "min_zeta" else max)(checks[k], ch[k]) for k in checks}
            if abs(cur - prev) <= max(rtol * abs(cur), atol):
                return cur, N, (t, g), checks
            prev = cur

    results = _map(converge, eps_list)
    values = [r[0] for r in results]
    grids = [r[1] for r in results]
    series = {float(e): r[2] for e, r in zip(eps_list, results)}
    checks = dict(min_zeta=min(r[3]["min_zeta"] for r in results),
                  max_step_drift=max(r[3]["max_step_drift"] for r in results))
    fit = fit_order(eps_list, values) if len(values) >= 3 and min(values) > 0 else None
    return SweepReport("ce-gap", [float(e) for e in eps_list], values, fit, grids,
                       time.perf_counter() - start, series, checks)
