"""Solver for the stiff system with one velocity per species.

The transport part is explicit and conservative.  Inter-species friction is
treated implicitly per cell with backward Euler so that the time step is
independent of ``eps``.

Stacked conserved layout: ``(rho_1..rho_n, m_1..m_n, E)`` with
``m_i = rho_i v_i`` and ``E = rho e + sum_i rho_i v_i^2 / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mixflow.constitutive import ThermoEval, eval_thermo
from mixflow.errors import MixflowError, NoTemperatureRoot, StepFailure
from mixflow.euler_core import MixtureState, solve_temperature, sound_speed
from mixflow.maxwell_stefan import (
    _friction_matrix, build_system, driving_forces, friction_production, solve_velocities,
)
from mixflow.solver_type1 import (
    DiagnosticSeries, Grid1D, RunResult, SimConfig, Snapshot, _right, diagnostic_header,
)


@dataclass
class TypeIIState:
    rho: np.ndarray
    vel: np.ndarray
    theta: np.ndarray

    @property
    def v(self):
        """Barycentric velocity."""
        return np.sum(self.rho * self.vel, axis=0) / np.sum(self.rho, axis=0)

    def mixture(self) -> MixtureState:
        return MixtureState(self.rho, self.v, self.theta)


def conserved(state: TypeIIState, thermo: ThermoEval) -> np.ndarray:
    mom = state.rho * state.vel
    E = thermo.rho_e + 0.5 * np.sum(mom * state.vel, axis=0)
    return np.concatenate([state.rho, mom, E[None]], axis=0)


def _centered(a, dx):
    return (_right(a) - np.roll(a, 1, axis=-1)) / (2 * dx)


def momentum_forces(state: TypeIIState, thermo: ThermoEval, dx: float):
    """Cell-centred ``p_i' - rho_i mu_i' - (h_i - rho_i mu_i) theta'/theta``.

    These sum to zero for exact derivatives; the finite-difference remainder is
    removed with mass-fraction weights so total momentum stays conservative.
    """
    rho, theta = state.rho, state.theta
    f = (_centered(thermo.p_partial, dx) - rho * _centered(thermo.mu, dx)
         - (thermo.h_partial - rho * thermo.mu) * _centered(theta, dx) / theta)
    c = rho / rho.sum(axis=0)
    return f - c * f.sum(axis=0)


def rhs_nonstiff(state: TypeIIState, grid: Grid1D, cfg: SimConfig,
                 thermo: ThermoEval | None = None):
    """Transport, pressure and heat conduction; friction is excluded.

    Returns the stacked time derivative and the face heat flux term used by
    the entropy production diagnostic.
    """
    model = cfg.model
    n = model.n
    rho, vel, theta = state.rho, state.vel, state.theta
    if thermo is None:
        thermo = eval_thermo(model, rho, theta)
    dx = grid.dx
    U = conserved(state, thermo)
    mom = U[n:2 * n]
    lam = np.abs(state.v) + sound_speed(model, rho, theta)
    lam_f = np.maximum(lam, _right(lam))

    F = np.empty_like(U)
    F[:n] = mom
    F[n:2 * n] = mom * vel + thermo.p_partial
    F[-1] = np.sum((thermo.h_partial + 0.5 * mom * vel) * vel, axis=0)
    flux = 0.5 * (F + _right(F)) - 0.5 * lam_f * (_right(U) - U)

    rho_f = 0.5 * (rho + _right(rho))
    theta_f = 0.5 * (theta + _right(theta))
    kappa_f = model.kappa(rho_f, theta_f)
    grad_theta = (_right(theta) - theta) / dx
    flux[-1] -= kappa_f * grad_theta

    dU = -(flux - np.roll(flux, 1, axis=-1)) / dx
    dU[n:2 * n] += momentum_forces(state, thermo, dx)
    zeta_heat = kappa_f * grad_theta**2 / theta_f**2
    return dU, zeta_heat


def state_from_conserved(U: np.ndarray, n: int, cfg: SimConfig, t: float, theta_guess=None
                         ) -> tuple[np.ndarray, TypeIIState]:
    rho = U[:n]
    low = rho < cfg.rho_floor
    if np.any(low):
        change = np.where(low, cfg.rho_floor - rho, 0.0)
        bad = change > 1e-8 * np.maximum(np.abs(rho).sum(axis=0), cfg.rho_floor)
        if np.any(bad):
            cell = int(np.argmax(bad.any(axis=0)))
            raise StepFailure(f"density floor exceeded at t={t:.6g}, cell {cell}")
        U = U.copy()
        U[:n] = np.maximum(rho, cfg.rho_floor)
        rho = U[:n]
    vel = U[n:2 * n] / rho
    e_int = U[-1] - 0.5 * np.sum(U[n:2 * n] * vel, axis=0)
    try:
        theta = solve_temperature(cfg.model, rho, e_int, cfg.box, theta_guess)
    except NoTemperatureRoot as exc:
        raise StepFailure(f"temperature recovery failed at t={t:.6g}: {exc}") from exc
    return U, TypeIIState(rho.copy(), vel, theta)


def friction_substep(U: np.ndarray, theta: np.ndarray, dt: float, cfg: SimConfig) -> np.ndarray:
    """Backward-Euler relaxation of the species velocities in every cell.

    Solves ``(diag(rho) + (dt theta / eps) K) v' = rho v`` with ``theta``
    frozen, restores the cell momentum exactly and keeps ``E`` unchanged.
    """
    n = cfg.model.n
    if n == 1:
        return U.copy()
    if not dt > 0 or not cfg.eps > 0:
        raise ValueError("friction substep needs dt > 0 and eps > 0")
    rho = U[:n]
    mom = U[n:2 * n]
    K = _friction_matrix(rho, cfg.friction)
    A = (dt * theta / cfg.eps)[:, None, None] * K
    idx = np.arange(n)
    A[:, idx, idx] += rho.T
    vel = np.linalg.solve(A, mom.T[..., None])[..., 0].T
    total = rho.sum(axis=0)
    vel += (mom.sum(axis=0) - np.sum(rho * vel, axis=0)) / total
    out = U.copy()
    out[n:2 * n] = rho * vel
    return out


def well_prepared_init(initial: MixtureState, grid: Grid1D, cfg: SimConfig) -> TypeIIState:
    """Species velocities ``v + u_i`` with ``u_i`` from the cell-centred friction solve."""
    rho, theta = initial.rho, initial.theta
    v = np.broadcast_to(np.asarray(initial.v, dtype=float), theta.shape)
    n = rho.shape[0]
    if cfg.eps == 0 or n == 1:
        return TypeIIState(rho.copy(), np.tile(v, (n, 1)), theta.copy())
    thermo = eval_thermo(cfg.model, rho, theta)
    dx = grid.dx
    forces = driving_forces(_centered(thermo.p, dx), _centered(thermo.mu / theta, dx),
                            _centered(1 / theta, dx), rho, theta, thermo, cfg.eps)
    u, _ = solve_velocities(build_system(rho, theta, cfg.friction), forces)
    return TypeIIState(rho.copy(), v + u, theta.copy())


def stable_dt_type2(state: TypeIIState, grid: Grid1D, cfg: SimConfig) -> float:
    """Explicit limit of the transport and conduction part only."""
    lam = float(np.max(np.max(np.abs(state.vel), axis=0)
                       + sound_speed(cfg.model, state.rho, state.theta)))
    dt = grid.dx / lam
    if cfg.model.kappa0 > 0:
        kappa = cfg.model.kappa(state.rho, state.theta)
        rho_cv = cfg.model.rho_c_v(state.rho, state.theta)
        dt = min(dt, grid.dx**2 * float(np.min(rho_cv / kappa)) / 2)
    return cfg.cfl * dt


def entropy_production_type2(state: TypeIIState, zeta_heat: np.ndarray, cfg: SimConfig):
    """Face heat-conduction part and cell friction part of the production."""
    u = state.vel - state.v
    return zeta_heat, friction_production(state.rho, state.theta, u, cfg.friction, cfg.eps)


def run_type2(cfg: SimConfig, grid: Grid1D, initial: TypeIIState) -> RunResult:
    """Advance the stiff system; ``cfg.scheme`` picks the coupling of the stages.

    ``imex``: ``U1 = Fr(U + dt L(U), dt)``, then
    ``U_new = Fr((U + U1 + dt L(U1)) / 2, dt / 2)``.  The friction solve
    closes every stage, so the relaxed velocity differences stay at their
    quasi-steady values even for ``dt >> eps``.

    ``strang``: half friction step, Heun step of the transport, half friction step.
    """
    model = cfg.model
    n = model.n
    state = TypeIIState(initial.rho.copy(), initial.vel.copy(), initial.theta.copy())
    thermo = eval_thermo(model, state.rho, state.theta)
    U = conserved(state, thermo)
    diag = DiagnosticSeries(diagnostic_header(n))
    snapshots = [Snapshot(0, 0.0, state, U.copy())]
    checks = dict(min_zeta=np.inf, max_step_drift=0.0, max_friction_momentum=0.0,
                  max_friction_energy=0.0)
    scale = np.abs(U).sum(axis=-1)
    t, step = 0.0, 0

    def fr(Ua, theta, h, t_now):
        out = friction_substep(Ua, theta, h, cfg)
        mom_a, mom_b = Ua[n:2 * n].sum(axis=0), out[n:2 * n].sum(axis=0)
        ref = np.abs(Ua[n:2 * n]).sum(axis=0) + 1e-300
        checks["max_friction_momentum"] = max(checks["max_friction_momentum"],
                                              float(np.max(np.abs(mom_b - mom_a) / ref)))
        checks["max_friction_energy"] = max(checks["max_friction_energy"],
                                            float(np.max(np.abs(out[-1] - Ua[-1]))))
        return state_from_conserved(out, n, cfg, t_now, theta)

    while True:
        dU, zeta_heat = rhs_nonstiff(state, grid, cfg, thermo)
        z_heat, z_fric = entropy_production_type2(state, zeta_heat, cfg)
        checks["min_zeta"] = min(checks["min_zeta"], float(z_heat.min()), float(z_fric.min()))
        finished = (t >= cfg.t_end * (1 - 1e-12)
                    or (cfg.max_steps is not None and step >= cfg.max_steps))
        dt = 0.0
        if not finished:
            limit = stable_dt_type2(state, grid, cfg)
            if cfg.dt is None:
                dt = limit
            else:
                dt = cfg.dt
                if dt > limit / cfg.cfl:
                    raise StepFailure(f"fixed dt {dt:.3e} exceeds the stability limit at t={t:.6g}")
            dt = min(dt, cfg.t_end - t)
        diag.rows.append([t, dt, *(U.sum(axis=-1)[:n] * grid.dx),
                          float(U[n:2 * n].sum() * grid.dx), float(U[-1].sum() * grid.dx),
                          float(thermo.rho_eta.sum() * grid.dx),
                          float((z_heat.sum() + z_fric.sum()) * grid.dx),
                          float(state.theta.min()), float(state.theta.max())])
        if finished:
            break
        try:
            if cfg.scheme == "imex":
                Ua, sa = state_from_conserved(U + dt * dU, n, cfg, t, state.theta)
                U1, s1 = fr(Ua, sa.theta, dt, t)
                dU1, _ = rhs_nonstiff(s1, grid, cfg)
                Ub, sb = state_from_conserved(0.5 * U + 0.5 * (U1 + dt * dU1), n, cfg, t + dt,
                                              s1.theta)
                U_new, state = fr(Ub, sb.theta, 0.5 * dt, t + dt)
            else:
                Ua, sa = fr(U, state.theta, 0.5 * dt, t)
                dUa, _ = rhs_nonstiff(sa, grid, cfg)
                U1, s1 = state_from_conserved(Ua + dt * dUa, n, cfg, t, sa.theta)
                dU1, _ = rhs_nonstiff(s1, grid, cfg)
                Ub, sb = state_from_conserved(0.5 * Ua + 0.5 * (U1 + dt * dU1), n, cfg, t + dt,
                                              s1.theta)
                U_new, state = fr(Ub, sb.theta, 0.5 * dt, t + dt)
        except StepFailure:
            raise
        except MixflowError as exc:
            raise StepFailure(f"step failed at t={t:.6g}: {exc}") from exc
        sums_new = np.r_[U_new[:n].sum(axis=-1), U_new[n:2 * n].sum(), U_new[-1].sum()]
        sums_old = np.r_[U[:n].sum(axis=-1), U[n:2 * n].sum(), U[-1].sum()]
        ref = np.r_[scale[:n], scale[n:2 * n].sum(), scale[-1]]
        checks["max_step_drift"] = max(checks["max_step_drift"],
                                       float(np.max(np.abs(sums_new - sums_old) / ref)))
        U = U_new
        thermo = eval_thermo(model, state.rho, state.theta)
        t += dt
        step += 1
        done = (t >= cfg.t_end * (1 - 1e-12)
                or (cfg.max_steps is not None and step >= cfg.max_steps))
        if step % cfg.snapshot_every == 0 or done:
            snapshots.append(Snapshot(step, t, state, U.copy()))
    return RunResult(grid, diag, snapshots, checks)


def mixture_conserved(U2: np.ndarray, n: int) -> np.ndarray:
    """Collapse a stacked state to ``(rho_1..rho_n, sum_i m_i, E)``."""
    return np.concatenate([U2[:n], U2[n:2 * n].sum(axis=0)[None], U2[-1:]], axis=0)
