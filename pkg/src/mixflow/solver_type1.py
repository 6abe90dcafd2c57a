"""Explicit finite-volume solver for the mixture system with a single velocity.

First-order Rusanov fluxes for the hyperbolic part, two-point face gradients
for heat conduction and Maxwell-Stefan diffusion, and Heun (SSP-RK2) time
stepping on a periodic grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from mixflow.constitutive import AdmissibleBox, MixtureModel, ThermoEval, eval_thermo
from mixflow.errors import MixflowError, NoTemperatureRoot, StepFailure
from mixflow.euler_core import (
    ConservedState, MixtureState, conserved_from_primitive, physical_flux,
    primitive_from_conserved, sound_speed,
)
from mixflow.maxwell_stefan import (
    FrictionCoeffs, build_system, driving_forces, friction_production, solve_velocities,
)

DIAGNOSTIC_FIELDS = ("entropy", "entropy_production", "min_theta", "max_theta")


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid on ``[0, 2 pi)``."""

    n_cells: int

    def __post_init__(self):
        if self.n_cells < 8:
            raise ValueError("need at least 8 cells")

    @property
    def dx(self) -> float:
        return 2 * np.pi / self.n_cells

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx


@dataclass(frozen=True)
class SimConfig:
    model: MixtureModel
    friction: FrictionCoeffs
    eps: float
    t_end: float
    cfl: float = 0.4
    snapshot_every: int = 10
    max_steps: int | None = None
    dt: float | None = None
    box: AdmissibleBox = field(default_factory=AdmissibleBox)
    rho_floor: float = 1e-10
    scheme: str = "imex"

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.friction.n != self.model.n:
            raise ValueError("friction matrix and model disagree on the species count")
        if self.scheme not in ("imex", "strang"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass
class Snapshot:
    step: int
    t: float
    state: MixtureState
    U: np.ndarray


@dataclass
class DiagnosticSeries:
    header: list
    rows: list = field(default_factory=list)

    def array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float)

    def column(self, name: str) -> np.ndarray:
        return self.array()[:, self.header.index(name)]


@dataclass
class RunResult:
    grid: Grid1D
    diagnostics: DiagnosticSeries
    snapshots: list
    checks: dict


def diagnostic_header(n: int) -> list:
    return (["t", "dt"] + [f"mass_{i + 1}" for i in range(n)]
            + ["momentum", "energy", "entropy", "entropy_production", "min_theta", "max_theta"])


@dataclass
class FaceData:
    """Face quantities shared by the right-hand side and the diagnostics."""

    rho: np.ndarray
    theta: np.ndarray
    thermo: ThermoEval
    grad_theta: np.ndarray
    u: np.ndarray
    d: np.ndarray
    zeta_heat: np.ndarray
    zeta_ms: np.ndarray
    dissipation: np.ndarray
    constraint: float

    @property
    def zeta(self):
        return self.zeta_heat + self.zeta_ms


def _right(a):
    return np.roll(a, -1, axis=-1)


def face_data(prim: MixtureState, thermo: ThermoEval, grid: Grid1D, cfg: SimConfig) -> FaceData:
    """Arithmetic-mean face states and two-point gradients; MS solve per face."""
    rho, theta = prim.rho, prim.theta
    dx = grid.dx
    rho_f = 0.5 * (rho + _right(rho))
    theta_f = 0.5 * (theta + _right(theta))
    te_f = eval_thermo(cfg.model, rho_f, theta_f)
    grad_theta = (_right(theta) - theta) / dx
    n = rho.shape[0]
    if cfg.eps > 0 and n > 1:
        mu_t = thermo.mu / theta
        forces = driving_forces(
            (_right(thermo.p) - thermo.p) / dx,
            (_right(mu_t) - mu_t) / dx,
            (1 / _right(theta) - 1 / theta) / dx,
            rho_f, theta_f, te_f, cfg.eps)
        u, diss = solve_velocities(build_system(rho_f, theta_f, cfg.friction), forces)
        d = forces.d
        zeta_ms = friction_production(rho_f, theta_f, u, cfg.friction, cfg.eps)
        flux = rho_f * u
        scale = np.max(np.abs(flux))
        constraint = float(np.max(np.abs(flux.sum(axis=0)))) / scale if scale > 0 else 0.0
    else:
        u = np.zeros_like(rho_f)
        d = np.zeros_like(rho_f)
        diss = zeta_ms = np.zeros_like(theta_f)
        constraint = 0.0
    zeta_heat = te_f.kappa * grad_theta**2 / theta_f**2
    return FaceData(rho_f, theta_f, te_f, grad_theta, u, d, zeta_heat, zeta_ms, diss, constraint)


def rhs(prim: MixtureState, grid: Grid1D, cfg: SimConfig, thermo: ThermoEval | None = None):
    """Time derivative of the stacked conserved variables and the face data."""
    model = cfg.model
    if thermo is None:
        thermo = eval_thermo(model, prim.rho, prim.theta)
    U = conserved_from_primitive(prim, thermo).stack()
    F = physical_flux(prim, thermo).stack()
    lam = np.abs(prim.v) + sound_speed(model, prim.rho, prim.theta)
    lam_f = np.maximum(lam, _right(lam))
    flux = 0.5 * (F + _right(F)) - 0.5 * lam_f * (_right(U) - U)

    faces = face_data(prim, thermo, grid, cfg)
    n = model.n
    flux[:n] += faces.rho * faces.u
    flux[-1] += -faces.thermo.kappa * faces.grad_theta + np.sum(faces.thermo.h_partial * faces.u, axis=0)
    return -(flux - np.roll(flux, 1, axis=-1)) / grid.dx, faces


def diffusion_matrix(model: MixtureModel, friction: FrictionCoeffs, eps: float, rho, theta):
    """Frozen-coefficient diffusion matrix acting on ``(rho_1..rho_n, theta)``.

    Returned with the cell axis first, shape ``(N, n+1, n+1)``.
    """
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    n = rho.shape[0]
    te = eval_thermo(model, rho, theta)
    der = model.derivatives(rho, theta)
    total = rho.sum(axis=0)
    N = theta.size
    B = np.zeros((N, n + 1, n + 1))
    if eps > 0 and n > 1:
        c = rho / total
        D = np.zeros((n, n + 1, N))
        D[:, :n] = -c[:, None] * der.p_rho[None, :] + rho[:, None] * der.hess_rho
        D[:, n] = (-c * der.p_theta + rho * der.mu_theta
                   - rho * te.mu / theta + te.h_partial / theta)
        D = D - c[:, None] * D.sum(axis=0)[None]
        D = np.moveaxis(D, -1, 0)  # (N, n, n+1)
        sysm = build_system(rho, theta, friction)
        sq = np.sqrt(rho).T
        A = (sq[:, :, None] * sysm.M_bd / sq[:, None, :]) @ D
        A *= (eps / (total * theta))[:, None, None]
        B[:, :n] = A
        B[:, n] = np.einsum("ci,cik->ck", (te.h_partial / rho).T, A)
    B[:, n, n] += te.kappa
    T = np.zeros((N, n + 1, n + 1))
    T[:, np.arange(n), np.arange(n)] = 1.0
    T[:, n, :n] = (te.mu - theta * der.mu_theta).T
    T[:, n, n] = -theta * der.rho_psi_tt
    return np.linalg.solve(T, B)


def stable_dt(prim: MixtureState, grid: Grid1D, cfg: SimConfig, cfl: float | None = None) -> float:
    """``cfl * min(dx / lambda_max, dx^2 / (2 nu_max))``."""
    cfl = cfg.cfl if cfl is None else cfl
    lam = float(np.max(np.abs(prim.v) + sound_speed(cfg.model, prim.rho, prim.theta)))
    dt = grid.dx / lam
    if cfg.eps > 0 or cfg.model.kappa0 > 0:
        K = diffusion_matrix(cfg.model, cfg.friction, cfg.eps, prim.rho, prim.theta)
        nu = float(np.max(np.abs(np.linalg.eigvals(K))))
        if nu > 0:
            dt = min(dt, grid.dx**2 / (2 * nu))
    return cfl * dt


def admissible_primitive(U: np.ndarray, n: int, cfg: SimConfig, t: float, theta_guess=None
                         ) -> tuple[np.ndarray, MixtureState]:
    """Floor tiny densities and recover primitives, or raise :class:`StepFailure`."""
    m = U[:n]
    low = m < cfg.rho_floor
    if np.any(low):
        total = np.abs(m).sum(axis=0)
        change = np.where(low, cfg.rho_floor - m, 0.0)
        bad = change > 1e-8 * np.maximum(total, cfg.rho_floor)
        if np.any(bad):
            cell = int(np.argmax(bad.any(axis=0)))
            raise StepFailure(f"density floor exceeded at t={t:.6g}, cell {cell}")
        U = U.copy()
        U[:n] = np.maximum(m, cfg.rho_floor)
    try:
        prim = primitive_from_conserved(ConservedState.unstack(U), cfg.model, cfg.box, theta_guess)
    except NoTemperatureRoot as exc:
        raise StepFailure(f"temperature recovery failed at t={t:.6g}: {exc}") from exc
    return U, prim


def totals_row(t, dt, U, grid, entropy, production, theta):
    sums = U.sum(axis=-1) * grid.dx
    return [t, dt, *sums, entropy, production, float(theta.min()), float(theta.max())]


def run(cfg: SimConfig, grid: Grid1D, initial: MixtureState) -> RunResult:
    """Integrate to ``cfg.t_end`` (or ``cfg.max_steps``) with Heun's method."""
    model = cfg.model
    n = model.n
    thermo = eval_thermo(model, initial.rho, initial.theta)
    prim = MixtureState(initial.rho.copy(), np.asarray(initial.v, float).copy(),
                        initial.theta.copy())
    U = conserved_from_primitive(prim, thermo).stack()
    diag = DiagnosticSeries(diagnostic_header(n))
    snapshots = [Snapshot(0, 0.0, prim, U.copy())]
    checks = dict(min_zeta=np.inf, max_constraint=0.0, max_step_drift=0.0)
    t, step = 0.0, 0
    total0 = np.abs(U).sum(axis=-1)
    while True:
        dU, faces = rhs(prim, grid, cfg, thermo)
        checks["min_zeta"] = min(checks["min_zeta"], float(faces.zeta.min()))
        checks["max_constraint"] = max(checks["max_constraint"], faces.constraint)
        finished = (t >= cfg.t_end * (1 - 1e-12)
                    or (cfg.max_steps is not None and step >= cfg.max_steps))
        dt = 0.0
        if not finished:
            limit = stable_dt(prim, grid, cfg)
            if cfg.dt is None:
                dt = limit
            else:
                dt = cfg.dt
                if dt > limit / cfg.cfl:
                    raise StepFailure(f"fixed dt {dt:.3e} exceeds the stability limit at t={t:.6g}")
            dt = min(dt, cfg.t_end - t)
        diag.rows.append(totals_row(t, dt, U, grid, float(thermo.rho_eta.sum() * grid.dx),
                                    float(faces.zeta.sum() * grid.dx), prim.theta))
        if finished:
            break

        try:
            U1, prim1 = admissible_primitive(U + dt * dU, n, cfg, t, prim.theta)
            dU1, _ = rhs(prim1, grid, cfg)
            U_new, prim = admissible_primitive(0.5 * U + 0.5 * (U1 + dt * dU1), n, cfg, t + dt,
                                               prim1.theta)
        except StepFailure:
            raise
        except MixflowError as exc:
            raise StepFailure(f"step failed at t={t:.6g}: {exc}") from exc
        drift = np.abs(U_new.sum(axis=-1) - U.sum(axis=-1)) / np.maximum(total0, 1e-300)
        checks["max_step_drift"] = max(checks["max_step_drift"], float(drift.max()))
        U = U_new
        thermo = eval_thermo(model, prim.rho, prim.theta)
        t += dt
        step += 1
        done = (t >= cfg.t_end * (1 - 1e-12)
                or (cfg.max_steps is not None and step >= cfg.max_steps))
        if step % cfg.snapshot_every == 0 or done:
            snapshots.append(Snapshot(step, t, prim, U.copy()))
    return RunResult(grid, diag, snapshots, checks)


@dataclass
class EntropyResidual:
    field: np.ndarray
    max_norm: float
    l1_norm: float


def _entropy_terms(prim: MixtureState, grid: Grid1D, cfg: SimConfig):
    thermo = eval_thermo(cfg.model, prim.rho, prim.theta)
    faces = face_data(prim, thermo, grid, cfg)
    q = thermo.rho_eta * prim.v
    te = faces.thermo
    g = te.h_partial - faces.rho * te.mu
    flux = (0.5 * (q + _right(q)) - te.kappa * faces.grad_theta / faces.theta
            + np.sum(g * faces.u, axis=0) / faces.theta)
    div = (flux - np.roll(flux, 1)) / grid.dx
    zeta_cell = 0.5 * (faces.zeta + np.roll(faces.zeta, 1))
    return thermo.rho_eta, div - zeta_cell


def entropy_residual(first: Snapshot, second: Snapshot, grid: Grid1D, cfg: SimConfig
                     ) -> EntropyResidual:
    """Discrete residual of the entropy balance between two consecutive snapshots.

    Spatial terms are averaged over both time levels.
    """
    dt = second.t - first.t
    if not dt > 0:
        raise ValueError("snapshots must be ordered in time")
    s0, r0 = _entropy_terms(first.state, grid, cfg)
    s1, r1 = _entropy_terms(second.state, grid, cfg)
    res = (s1 - s0) / dt + 0.5 * (r0 + r1)
    return EntropyResidual(res, float(np.max(np.abs(res))), float(np.sum(np.abs(res)) * grid.dx))


def with_dt(cfg: SimConfig, dt: float | None) -> SimConfig:
    return replace(cfg, dt=dt)
