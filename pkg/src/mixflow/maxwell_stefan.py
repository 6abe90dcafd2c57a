"""Constrained Maxwell-Stefan friction system and its Bott-Duffin inverse.

Densities are species-first, ``(n, ...)``; assembled matrices carry the
batch axes first and the ``n x n`` block last so they feed straight into
``numpy.linalg``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from mixflow.constitutive import ThermoEval
from mixflow.errors import NonPositiveState, SingularSystem

RHO_FLOOR = 1e-10
COND_LIMIT = 1e14


@dataclass(frozen=True)
class FrictionCoeffs:
    """Symmetric binary friction coefficients; the diagonal is ignored."""

    b: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError("b must be a square matrix")
        n = b.shape[0]
        for i in range(n):
            for j in range(i + 1, n):
                if b[i, j] != b[j, i]:
                    raise ValueError(f"b is not symmetric at ({i + 1},{j + 1})")
                if not b[i, j] > 0:
                    raise ValueError(f"b must be positive at ({i + 1},{j + 1})")
        np.fill_diagonal(b, 0.0)
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_upper(cls, values, n: int) -> FrictionCoeffs:
        """Build from the strictly upper triangle listed row by row."""
        values = np.asarray(values, dtype=float).ravel()
        if values.size != n * (n - 1) // 2:
            raise ValueError(f"expected {n * (n - 1) // 2} friction coefficients, got {values.size}")
        b = np.zeros((n, n))
        b[np.triu_indices(n, 1)] = values
        return cls(b + b.T)

    @classmethod
    def uniform(cls, n: int, value: float = 1.0) -> FrictionCoeffs:
        return cls(value * (np.ones((n, n)) - np.eye(n)))

    @property
    def n(self) -> int:
        return self.b.shape[0]

    @property
    def mu(self) -> float:
        """Coercivity constant of ``M``: the smallest off-diagonal entry."""
        if self.n < 2:
            return 0.0
        return float(self.b[~np.eye(self.n, dtype=bool)].min())

    @property
    def lam(self) -> float:
        """Coercivity constant of the Bott-Duffin inverse."""
        off = ~np.eye(self.n, dtype=bool)
        return 1.0 / (2.0 * float(np.sum(self.b[off] + 1.0))) if self.n > 1 else np.inf


@dataclass(frozen=True)
class MsSystem:
    M: np.ndarray
    P_L: np.ndarray
    M_bd: np.ndarray
    rho: np.ndarray
    theta: np.ndarray


@dataclass(frozen=True)
class DrivingForces:
    """Driving forces per unit ``eps``; ``drift`` is the removed ``sum_i d_i``."""

    d: np.ndarray
    eps: float
    drift: np.ndarray | float = 0.0


def _species_last(a):
    return np.moveaxis(np.asarray(a, dtype=float), 0, -1)


def floor_densities(rho, floor: float = RHO_FLOOR):
    rho = np.asarray(rho, dtype=float)
    if not np.all(rho > 0):
        raise NonPositiveState("partial densities must be positive")
    return np.maximum(rho, floor)


def build_system(rho, theta, b: FrictionCoeffs, check: bool = True) -> MsSystem:
    """Assemble ``M``, the projection ``P_L`` and ``M_bd = P_L (M P_L + P_perp)^-1``."""
    rho = floor_densities(rho)
    theta = np.asarray(theta, dtype=float)
    if not np.all(theta > 0):
        raise NonPositiveState("temperature must be positive")
    r = _species_last(rho)
    n = r.shape[-1]
    total = r.sum(axis=-1, keepdims=True)
    c = r / total
    sc = np.sqrt(c)
    M = -sc[..., :, None] * sc[..., None, :] * b.b
    idx = np.arange(n)
    M[..., idx, idx] = c @ b.b  # sum_k c_k b_ik, diagonal of b is zero
    eye = np.eye(n)
    P_L = eye - sc[..., :, None] * sc[..., None, :]
    A = M @ P_L + (eye - P_L)
    try:
        A_inv = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("friction system is singular") from exc
    if check:
        # 1-norm condition number from the explicit inverse
        cond = np.linalg.norm(A, 1, axis=(-2, -1)) * np.linalg.norm(A_inv, 1, axis=(-2, -1))
        if np.any(~np.isfinite(cond) | (cond > COND_LIMIT)):
            raise SingularSystem(f"condition number {np.max(cond):.3e} exceeds {COND_LIMIT:.0e}")
    M_bd = P_L @ A_inv
    return MsSystem(M=M, P_L=P_L, M_bd=M_bd, rho=rho, theta=theta)


def driving_forces(grad_p, grad_mu_over_theta, grad_inv_theta, rho, theta,
                   thermo: ThermoEval, eps: float) -> DrivingForces:
    """Forces ``-(rho_i/rho) p' + rho_i theta (mu_i/theta)' - theta h_i (1/theta)'``.

    The finite-difference remainder of ``sum_i d_i`` is removed with
    mass-fraction weights.
    """
    rho = np.asarray(rho, dtype=float)
    if not np.all(rho > 0) or not np.all(np.asarray(theta) > 0):
        raise NonPositiveState("driving forces need a positive state")
    c = rho / rho.sum(axis=0)
    d = (-c * grad_p + rho * theta * np.asarray(grad_mu_over_theta)
         - theta * thermo.h_partial * grad_inv_theta)
    drift = d.sum(axis=0)
    return DrivingForces(d=d - c * drift, eps=float(eps), drift=drift)


def solve_velocities(system: MsSystem, forces: DrivingForces):
    """Diffusional velocities and the dissipation ``-(1/theta) sum_i u_i d_i``."""
    if forces.eps == 0:
        u = np.zeros_like(forces.d)
        return u, np.zeros(u.shape[1:])
    rho = system.rho
    sq = np.sqrt(rho)
    total = rho.sum(axis=0)
    w = _species_last(forces.eps * forces.d / sq)
    y = np.einsum("...ij,...j->...i", system.M_bd, w)
    u = -np.moveaxis(y, -1, 0) / (sq * total * system.theta)
    # remove the rounding remainder of the mass constraint
    u = u - np.sum(rho * u, axis=0) / total
    dissipation = -np.sum(u * forces.d, axis=0) / system.theta
    return u, dissipation


def friction_force(rho, theta, u, b: FrictionCoeffs):
    """``-sum_j b_ij theta rho_i rho_j (u_i - u_j)`` per species."""
    rho = np.asarray(rho, dtype=float)
    K = _friction_matrix(rho, b)
    return -theta * np.moveaxis(np.einsum("...ij,...j->...i", K, _species_last(u)), -1, 0)


def _friction_matrix(rho, b: FrictionCoeffs):
    """``K_ij = -b_ij rho_i rho_j`` off the diagonal, rows summing to zero."""
    r = _species_last(rho)
    K = -r[..., :, None] * r[..., None, :] * b.b
    n = r.shape[-1]
    idx = np.arange(n)
    K[..., idx, idx] = r * (r @ b.b)
    return K


def friction_production(rho, theta, u, b: FrictionCoeffs, eps: float):
    """Entropy production ``(1/(2 eps)) sum_ij b_ij rho_i rho_j (u_i - u_j)^2``.

    Written as a sum of squares so it is non-negative in floating point.
    """
    if eps == 0:
        return np.zeros(np.shape(u)[1:])
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    n = rho.shape[0]
    total = np.zeros(rho.shape[1:])
    for i in range(n):
        for j in range(i + 1, n):
            total = total + b.b[i, j] * rho[i] * rho[j] * (u[i] - u[j]) ** 2
    return total / eps


def constrained_residual(rho, theta, u, b: FrictionCoeffs, forces: DrivingForces):
    """Residual of the original system and of the mass constraint."""
    f = friction_force(rho, theta, u, b)
    res = f - forces.eps * forces.d
    return res, np.sum(rho * u, axis=0)


@dataclass(frozen=True)
class MsSuiteReport:
    n_systems: int
    n_z: int
    min_margin_M: float
    min_margin_bd: float
    max_residual: float
    max_constraint: float
    max_oracle_diff: float
    bd_counterexamples: int
    runtime_seconds: float

    @property
    def passed(self) -> bool:
        return (self.min_margin_M >= -1e-12 and self.min_margin_bd >= -1e-12
                and self.max_residual <= 1e-10 and self.max_oracle_diff <= 1e-12
                and self.max_constraint <= 1e-12)


def property_suite(n_systems: int, n_z: int, rng: np.random.Generator,
                   n_range=(2, 5)) -> MsSuiteReport:
    """Random-system check of coercivity, solvability and the dense oracle.

    Systems draw ``rho_i, b_ij, theta`` uniformly from ``[0.1, 10]``.
    """
    start = time.perf_counter()
    ns = rng.integers(n_range[0], n_range[1] + 1, size=n_systems)
    worst = dict(mM=np.inf, mbd=np.inf, res=0.0, con=0.0, orc=0.0, bad=0)
    for n in np.unique(ns):
        m = int(np.sum(ns == n))
        rho = rng.uniform(0.1, 10.0, size=(n, m))
        theta = rng.uniform(0.1, 10.0, size=m)
        iu = np.triu_indices(n, 1)
        bvals = rng.uniform(0.1, 10.0, size=(m, iu[0].size))
        b_all = np.zeros((m, n, n))
        b_all[:, iu[0], iu[1]] = bvals
        b_all = b_all + np.swapaxes(b_all, 1, 2)
        for k in range(m):
            coeffs = FrictionCoeffs(b_all[k])
            sysk = build_system(rho[:, k], theta[k], coeffs)
            z = rng.standard_normal((n_z, n))
            z /= np.linalg.norm(z, axis=1, keepdims=True)
            pz2 = np.sum((z @ sysk.P_L) ** 2, axis=1)
            qM = np.einsum("zi,ij,zj->z", z, sysk.M, z)
            qbd = np.einsum("zi,ij,zj->z", z, sysk.M_bd, z)
            worst["mM"] = min(worst["mM"], float(np.min(qM - coeffs.mu * pz2)))
            mbd = qbd - coeffs.lam * pz2
            worst["bad"] += int(np.sum(mbd < -1e-12))
            worst["mbd"] = min(worst["mbd"], float(np.min(mbd)))

            d = rng.standard_normal(n)
            d -= rho[:, k] / rho[:, k].sum() * d.sum()
            forces = DrivingForces(d=d, eps=1.0)
            u, _ = solve_velocities(sysk, forces)
            res, con = constrained_residual(rho[:, k], theta[k], u, coeffs, forces)
            scale = max(1.0, float(np.linalg.norm(d)))
            worst["res"] = max(worst["res"], float(np.linalg.norm(res)) / scale)
            flux = np.abs(rho[:, k] * u).max()
            worst["con"] = max(worst["con"], abs(float(con)) / max(flux, 1e-300))

            # dense oracle: (M P_L + P_perp) z = w, x = P_L z
            w = z.T
            A = sysk.M @ sysk.P_L + (np.eye(n) - sysk.P_L)
            x = sysk.P_L @ np.linalg.solve(A, w)
            diff = np.abs(sysk.M_bd @ w - x).max() / max(1.0, np.abs(x).max())
            worst["orc"] = max(worst["orc"], float(diff))
    return MsSuiteReport(
        n_systems=n_systems,
        n_z=n_z,
        min_margin_M=worst["mM"],
        min_margin_bd=worst["mbd"],
        max_residual=worst["res"],
        max_constraint=worst["con"],
        max_oracle_diff=worst["orc"],
        bd_counterexamples=worst["bad"],
        runtime_seconds=time.perf_counter() - start,
    )
