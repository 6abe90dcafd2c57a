"""Conserved and primitive variables, fluxes, wave speeds and structure checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mixflow.constitutive import (
    FD_STEP, AdmissibleBox, MixtureModel, ThermoEval, check_positive,
)
from mixflow.errors import NonHyperbolicState, NoTemperatureRoot, StructureViolation


@dataclass
class MixtureState:
    """Primitive variables ``(rho_1..rho_n, v, theta)``."""

    rho: np.ndarray
    v: np.ndarray
    theta: np.ndarray

    @property
    def density(self):
        return np.sum(self.rho, axis=0)


@dataclass
class ConservedState:
    """Partial masses, momentum and total energy."""

    m: np.ndarray
    mom: np.ndarray
    E: np.ndarray

    def stack(self) -> np.ndarray:
        return np.concatenate([self.m, self.mom[None], self.E[None]], axis=0)

    @classmethod
    def unstack(cls, a: np.ndarray) -> ConservedState:
        return cls(m=a[:-2], mom=a[-2], E=a[-1])


def conserved_from_primitive(state: MixtureState, thermo: ThermoEval) -> ConservedState:
    rho = np.asarray(state.rho, dtype=float)
    total = rho.sum(axis=0)
    v = np.asarray(state.v, dtype=float)
    mom = total * v
    return ConservedState(m=rho.copy(), mom=mom, E=thermo.rho_e + 0.5 * mom * v)


def solve_temperature(model: MixtureModel, rho, e_int, box: AdmissibleBox = AdmissibleBox(),
                      theta_guess=None, rtol: float = 1e-12, max_iter: int = 100):
    """Invert ``rho e(rho, theta) = e_int`` for ``theta`` on ``[delta/10, 10 M]``.

    Newton iteration safeguarded by a shrinking bracket; steps that leave the
    bracket fall back to bisection.
    """
    rho = np.asarray(rho, dtype=float)
    e_int = np.asarray(e_int, dtype=float)
    if np.any(~(e_int > 0)):
        k = np.unravel_index(int(np.argmax(~(e_int > 0))), e_int.shape)
        raise NoTemperatureRoot(f"non-positive internal energy at index {k}")
    lo = np.full(e_int.shape, box.delta / 10)
    hi = np.full(e_int.shape, 10 * box.M)
    f_lo = model.rho_e(rho, lo) - e_int
    f_hi = model.rho_e(rho, hi) - e_int
    bad = ~((f_lo <= 0) & (f_hi >= 0))
    if np.any(bad):
        k = np.unravel_index(int(np.argmax(bad)), e_int.shape)
        raise NoTemperatureRoot(f"temperature root not bracketed in "
                                f"[{lo.flat[0]:g}, {hi.flat[0]:g}] at index {k}")
    if theta_guess is None:
        theta = 0.5 * (lo + hi)
    else:
        theta = np.clip(np.broadcast_to(np.asarray(theta_guess, dtype=float), e_int.shape), lo, hi)
    for _ in range(max_iter):
        f = model.rho_e(rho, theta) - e_int
        lo = np.where(f < 0, theta, lo)
        hi = np.where(f > 0, theta, hi)
        slope = model.rho_c_v(rho, theta)
        step = theta - f / slope
        inside = (step > lo) & (step < hi)
        new = np.where(inside, step, 0.5 * (lo + hi))
        new = np.where(f == 0, theta, new)
        done = np.abs(new - theta) <= rtol * np.abs(theta)
        theta = new
        if np.all(done):
            return theta
    raise NoTemperatureRoot("temperature iteration did not converge")


def primitive_from_conserved(c: ConservedState, model: MixtureModel,
                             box: AdmissibleBox = AdmissibleBox(), theta_guess=None
                             ) -> MixtureState:
    m = np.asarray(c.m, dtype=float)
    check_positive(m, 1.0)
    total = m.sum(axis=0)
    v = c.mom / total
    e_int = c.E - 0.5 * c.mom * v
    theta = solve_temperature(model, m, e_int, box, theta_guess)
    return MixtureState(rho=m.copy(), v=v, theta=theta)


def physical_flux(state: MixtureState, thermo: ThermoEval) -> ConservedState:
    rho = np.asarray(state.rho, dtype=float)
    v = np.asarray(state.v, dtype=float)
    total = rho.sum(axis=0)
    E = thermo.rho_e + 0.5 * total * v**2
    return ConservedState(m=rho * v, mom=total * v**2 + thermo.p, E=(E + thermo.p) * v)


def sound_speed(model: MixtureModel, rho, theta):
    """``sqrt((1/rho) sum_i rho_i p_{rho_i} + theta p_theta^2 / (c_v rho^2))``."""
    rho, theta = check_positive(rho, theta)
    total = rho.sum(axis=0)
    der = model.derivatives(rho, theta)
    rho_cv = -theta * der.rho_psi_tt
    radicand = np.sum(rho * der.p_rho, axis=0) / total + theta * der.p_theta**2 / (rho_cv * total)
    if np.any(~(radicand > 0)):
        raise NonHyperbolicState("sound speed radicand is not positive")
    return np.sqrt(radicand)


def max_wave_speed(state: MixtureState, model: MixtureModel):
    return np.abs(state.v) + sound_speed(model, state.rho, state.theta)


# structure of the 1-D system in the variables U = (rho_1..rho_n, v, theta)

def _split(model, U):
    n = model.n
    return U[:n], U[n], U[n + 1]


def conserved_map(model, U):
    rho, v, theta = _split(model, U)
    total = rho.sum()
    return np.concatenate([rho, [total * v, model.rho_e(rho, theta) + 0.5 * total * v**2]])


def flux_map(model, U):
    rho, v, theta = _split(model, U)
    total = rho.sum()
    p = model.pressure(rho, theta)
    E = model.rho_e(rho, theta) + 0.5 * total * v**2
    return np.concatenate([rho * v, [total * v**2 + p, (E + p) * v]])


def entropy_pair(model, U):
    rho, v, theta = _split(model, U)
    H = model.rho_psi_theta(rho, theta)  # -rho eta
    return np.array([H, H * v])


def multiplier(model, U):
    rho, v, theta = _split(model, U)
    mu = model.chemical_potentials(rho, theta)
    return np.concatenate([(mu - 0.5 * v**2) / theta, [v / theta, -1.0 / theta]])


def _steps(model, U, scale):
    n = model.n
    h = scale * (1.0 + np.abs(U))
    # positive variables use relative steps so small densities stay resolved
    pos = np.r_[np.arange(n), n + 1]
    h[pos] = scale * np.abs(U[pos])
    return h


def fd_jacobian(f, U, h, order: int = 2):
    cols = []
    for k in range(U.size):
        e = np.zeros_like(U)
        e[k] = h[k]
        if order == 2:
            cols.append((f(U + e) - f(U - e)) / (2 * h[k]))
        else:
            cols.append((8 * (f(U + e) - f(U - e)) - (f(U + 2 * e) - f(U - 2 * e)))
                        / (12 * h[k]))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class StructureReport:
    n_states: int
    max_entropy_residual: float
    max_flux_residual: float
    max_asymmetry: float
    min_symmetrizer_eig: float
    max_block_residual: float
    max_speed_error: float
    min_det_ratio: float

    def check(self, fd_tol: float = 1e-6, sym_tol: float = 1e-10, speed_tol: float = 1e-8):
        if self.max_entropy_residual > fd_tol:
            raise StructureViolation(f"grad H = G grad A residual {self.max_entropy_residual:.3e}")
        if self.max_flux_residual > fd_tol:
            raise StructureViolation(f"grad Q = G grad F residual {self.max_flux_residual:.3e}")
        if self.max_asymmetry > sym_tol:
            raise StructureViolation(f"symmetrizer asymmetry {self.max_asymmetry:.3e}")
        if not self.min_symmetrizer_eig > 0:
            raise StructureViolation("symmetrizer is not positive definite")
        if self.max_speed_error > speed_tol:
            raise StructureViolation(f"wave speed mismatch {self.max_speed_error:.3e}")
        if not self.min_det_ratio > 0:
            raise StructureViolation("det grad A is not positive")


def structure_at(model: MixtureModel, U: np.ndarray, fd_step: float = FD_STEP) -> dict:
    """All structure residuals at one state ``U = (rho, v, theta)``."""
    n = model.n
    rho, v, theta = _split(model, U)
    total = rho.sum()
    h = _steps(model, U, fd_step)
    JA = fd_jacobian(lambda u: conserved_map(model, u), U, h)
    JF = fd_jacobian(lambda u: flux_map(model, u), U, h)
    JHQ = fd_jacobian(lambda u: entropy_pair(model, u), U, h)
    G = multiplier(model, U)

    def rel(lhs, terms):
        return float(np.max(np.abs(lhs - terms.sum(axis=0)))
                     / max(np.max(np.abs(terms).sum(axis=0)), 1e-300))

    res_H = rel(JHQ[0], G[:, None] * JA)
    res_Q = rel(JHQ[1], G[:, None] * JF)

    # symmetrizer grad^2 H - G . grad^2 A, assembled as grad A^T grad G
    h4 = _steps(model, U, 1e-3)
    JA4 = fd_jacobian(lambda u: conserved_map(model, u), U, h4, order=4)
    JG4 = fd_jacobian(lambda u: multiplier(model, u), U, h4, order=4)
    S = JA4.T @ JG4
    asym = float(np.max(np.abs(S - S.T)) / np.max(np.abs(S)))
    min_eig = float(np.linalg.eigvalsh(0.5 * (S + S.T)).min())
    der = model.derivatives(rho, theta)
    block = np.zeros_like(S)
    block[:n, :n] = der.hess_rho / theta
    block[n, n] = total / theta
    block[n + 1, n + 1] = -der.rho_psi_tt / theta  # rho c_v / theta^2
    block_res = float(np.max(np.abs(S - block)) / np.max(np.abs(block)))

    JF4 = fd_jacobian(lambda u: flux_map(model, u), U, h4, order=4)
    lam = np.linalg.eigvals(np.linalg.solve(JA4, JF4))
    c = float(sound_speed(model, rho, theta))
    expected = np.sort(np.r_[np.full(n, v), v - c, v + c])
    speed_err = float(np.max(np.abs(np.sort(lam.real) - expected)) + np.max(np.abs(lam.imag)))

    rho_cv = -theta * der.rho_psi_tt
    det_ratio = float(np.linalg.det(JA) / (total * rho_cv))
    return dict(entropy=res_H, flux=res_Q, asym=asym, eig=min_eig, block=block_res,
                speed=speed_err, det=det_ratio)


def structure_check(model: MixtureModel, box: AdmissibleBox, n_states: int,
                    rng: np.random.Generator, fd_step: float = FD_STEP,
                    v_max: float = 2.0, raise_on_fail: bool = True) -> StructureReport:
    """Verify the entropy pair, symmetrizer and wave speeds at random states."""
    rho, theta = box.sample(rng, model.n, n_states)
    v = rng.uniform(-v_max, v_max, size=n_states)
    rows = [structure_at(model, np.r_[rho[:, k], v[k], theta[k]], fd_step)
            for k in range(n_states)]
    report = StructureReport(
        n_states=n_states,
        max_entropy_residual=max(r["entropy"] for r in rows),
        max_flux_residual=max(r["flux"] for r in rows),
        max_asymmetry=max(r["asym"] for r in rows),
        min_symmetrizer_eig=min(r["eig"] for r in rows),
        max_block_residual=max(r["block"] for r in rows),
        max_speed_error=max(r["speed"] for r in rows),
        min_det_ratio=min(r["det"] for r in rows),
    )
    if raise_on_fail:
        report.check()
    return report
