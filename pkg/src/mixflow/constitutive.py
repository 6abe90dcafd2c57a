"""Thermodynamic closure for a multicomponent mixture with a common temperature.

Arrays are species-first: a density field has shape ``(n, ...)`` and the
temperature has the trailing shape ``(...)``.  Every function broadcasts over
the trailing axes so the same code serves single states and whole grids.
"""

from __future__ import annotations

import copy
import itertools
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from mixflow.errors import HypothesisViolated, NonPositiveState

FD_STEP = 1e-5


@dataclass(frozen=True)
class SpeciesParams:
    """Gas constants ``R`` and constant heat capacities ``c`` per species."""

    R: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        R = np.atleast_1d(np.asarray(self.R, dtype=float))
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if R.ndim != 1 or R.shape != c.shape or R.size < 1:
            raise ValueError("R and c must be 1-D arrays of equal length >= 1")
        if np.any(R <= 0) or np.any(c <= 0):
            raise ValueError("R_i and c_i must be positive")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.R.size


@dataclass(frozen=True)
class AdmissibleBox:
    """Bounds ``delta <= rho, theta <= M`` on the total density and temperature."""

    delta: float = 0.1
    M: float = 10.0

    def __post_init__(self):
        if not 0 < self.delta < self.M:
            raise ValueError("need 0 < delta < M")

    def sample(self, rng: np.random.Generator, n: int, size: int):
        """Draw ``size`` states with each ``rho_i`` in ``[delta/n, M/n]``.

        The per-species range keeps the total density inside ``[delta, M]``.
        """
        rho = rng.uniform(self.delta / n, self.M / n, size=(n, size))
        theta = rng.uniform(self.delta, self.M, size=size)
        return rho, theta

    def corners(self, n: int):
        lo, hi = self.delta / n, self.M / n
        pts = np.array(list(itertools.product(*([(lo, hi)] * n + [(self.delta, self.M)]))))
        return pts[:, :n].T.copy(), pts[:, n].copy()


@dataclass(frozen=True)
class ThermoEval:
    """Constitutive quantities at one or many states."""

    rho_psi: np.ndarray
    mu: np.ndarray
    rho_eta: np.ndarray
    rho_e: np.ndarray
    p: np.ndarray
    p_partial: np.ndarray
    e_partial: np.ndarray
    h_partial: np.ndarray
    c_v: np.ndarray
    kappa: np.ndarray


@dataclass(frozen=True)
class ThermoDerivatives:
    """Second derivatives of the free energy and the pressure sensitivities."""

    hess_rho: np.ndarray  # (rho psi)_{rho_i rho_j}, shape (n, n, ...)
    mu_theta: np.ndarray  # (mu_i)_theta
    rho_psi_tt: np.ndarray  # (rho psi)_{theta theta}
    p_rho: np.ndarray
    p_theta: np.ndarray


@dataclass(frozen=True)
class RelativeQuantities:
    J: np.ndarray
    p_rel: np.ndarray
    neg_rho_eta_rel: np.ndarray
    I: np.ndarray


def check_positive(rho, theta):
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if not (np.all(rho > 0) and np.all(theta > 0)):
        raise NonPositiveState("densities and temperature must be positive")
    return rho, theta


class MixtureModel(ABC):
    """Free energy ``rho psi(rho_1..rho_n, theta)`` with its derivatives.

    Subclasses provide the free energy and its derivatives; partial pressures
    and energies are only defined for simple mixtures.
    """

    def __init__(self, params: SpeciesParams, kappa0: float = 0.0,
                 kappa_law: str = "constant"):
        if kappa0 < 0:
            raise ValueError("kappa0 must be non-negative")
        if kappa_law not in ("constant", "linear"):
            raise ValueError(f"unknown kappa law {kappa_law!r}")
        self.params = params
        self.kappa0 = float(kappa0)
        self.kappa_law = kappa_law

    @property
    def n(self) -> int:
        return self.params.n

    def kappa(self, rho, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kappa_law == "linear":
            return self.kappa0 * theta
        return np.full_like(theta, self.kappa0)

    def with_kappa(self, kappa0: float) -> MixtureModel:
        if kappa0 < 0:
            raise ValueError("kappa0 must be non-negative")
        clone = copy.copy(self)
        clone.kappa0 = float(kappa0)
        return clone

    @abstractmethod
    def rho_psi(self, rho, theta): ...

    @abstractmethod
    def chemical_potentials(self, rho, theta): ...

    @abstractmethod
    def rho_psi_theta(self, rho, theta): ...

    @abstractmethod
    def derivatives(self, rho, theta) -> ThermoDerivatives: ...

    @abstractmethod
    def partial_quantities(self, rho, theta):
        """Return ``(p_i, e_i)``."""

    def rho_e(self, rho, theta):
        return self.rho_psi(rho, theta) - theta * self.rho_psi_theta(rho, theta)

    def rho_c_v(self, rho, theta):
        """Heat capacity per volume, ``rho c_v = -theta (rho psi)_{theta theta}``."""
        return -theta * self.derivatives(rho, theta).rho_psi_tt

    def pressure(self, rho, theta):
        return np.sum(rho * self.chemical_potentials(rho, theta), axis=0) - self.rho_psi(rho, theta)

    def evaluate(self, rho, theta) -> ThermoEval:
        rho_psi = self.rho_psi(rho, theta)
        rho_eta = -self.rho_psi_theta(rho, theta)
        p_i, e_i = self.partial_quantities(rho, theta)
        return ThermoEval(
            rho_psi=rho_psi,
            mu=self.chemical_potentials(rho, theta),
            rho_eta=rho_eta,
            rho_e=rho_psi + theta * rho_eta,
            p=np.sum(p_i, axis=0),
            p_partial=p_i,
            e_partial=e_i,
            h_partial=rho * e_i + p_i,
            c_v=-theta * self.derivatives(rho, theta).rho_psi_tt / np.sum(rho, axis=0),
            kappa=self.kappa(rho, theta),
        )


class SimpleMixture(MixtureModel):
    """Mixture whose free energy is ``sum_i rho_i psi_i(rho_i, theta)``.

    Only :meth:`species_psi` is required; species derivatives fall back to
    centered differences.
    """

    @abstractmethod
    def species_psi(self, rho, theta):
        """Specific free energies ``psi_i(rho_i, theta)``, shape ``(n, ...)``."""

    def species_derivatives(self, rho, theta):
        """Return ``psi, psi_r, psi_t, psi_rr, psi_rt, psi_tt`` per species."""
        rho = np.asarray(rho, dtype=float)
        theta = np.asarray(theta, dtype=float)
        hr = FD_STEP * (1.0 + np.abs(rho))
        ht = FD_STEP * (1.0 + np.abs(theta))
        f = self.species_psi
        psi = f(rho, theta)
        f_rp, f_rm = f(rho + hr, theta), f(rho - hr, theta)
        f_tp, f_tm = f(rho, theta + ht), f(rho, theta - ht)
        psi_r = (f_rp - f_rm) / (2 * hr)
        psi_t = (f_tp - f_tm) / (2 * ht)
        psi_rr = (f_rp - 2 * psi + f_rm) / hr**2
        psi_tt = (f_tp - 2 * psi + f_tm) / ht**2
        psi_rt = (f(rho + hr, theta + ht) - f(rho + hr, theta - ht)
                  - f(rho - hr, theta + ht) + f(rho - hr, theta - ht)) / (4 * hr * ht)
        return psi, psi_r, psi_t, psi_rr, psi_rt, psi_tt

    def rho_psi(self, rho, theta):
        return np.sum(rho * self.species_psi(rho, theta), axis=0)

    def chemical_potentials(self, rho, theta):
        psi, psi_r = self.species_derivatives(rho, theta)[:2]
        return psi + rho * psi_r

    def rho_psi_theta(self, rho, theta):
        psi_t = self.species_derivatives(rho, theta)[2]
        return np.sum(rho * psi_t, axis=0)

    def partial_quantities(self, rho, theta):
        psi, psi_r, psi_t = self.species_derivatives(rho, theta)[:3]
        return rho**2 * psi_r, psi - theta * psi_t

    def evaluate(self, rho, theta) -> ThermoEval:
        psi, psi_r, psi_t, _, _, psi_tt = self.species_derivatives(rho, theta)
        rho_psi = np.sum(rho * psi, axis=0)
        rho_eta = -np.sum(rho * psi_t, axis=0)
        p_i = rho**2 * psi_r
        e_i = psi - theta * psi_t
        return ThermoEval(
            rho_psi=rho_psi,
            mu=psi + rho * psi_r,
            rho_eta=rho_eta,
            rho_e=rho_psi + theta * rho_eta,
            p=np.sum(p_i, axis=0),
            p_partial=p_i,
            e_partial=e_i,
            h_partial=rho * e_i + p_i,
            c_v=-theta * np.sum(rho * psi_tt, axis=0) / np.sum(rho, axis=0),
            kappa=self.kappa(rho, theta),
        )

    def rho_e(self, rho, theta):
        psi, _, psi_t = self.species_derivatives(rho, theta)[:3]
        return np.sum(rho * (psi - theta * psi_t), axis=0)

    def rho_c_v(self, rho, theta):
        return -theta * np.sum(rho * self.species_derivatives(rho, theta)[5], axis=0)

    def derivatives(self, rho, theta) -> ThermoDerivatives:
        rho = np.asarray(rho, dtype=float)
        _, psi_r, psi_t, psi_rr, psi_rt, psi_tt = self.species_derivatives(rho, theta)
        n = rho.shape[0]
        mu_r = 2 * psi_r + rho * psi_rr
        hess = np.zeros((n, n) + rho.shape[1:])
        idx = np.arange(n)
        hess[idx, idx] = mu_r
        mu_t = psi_t + rho * psi_rt
        rho_psi_tt = np.sum(rho * psi_tt, axis=0)
        rho_eta = -np.sum(rho * psi_t, axis=0)
        return ThermoDerivatives(
            hess_rho=hess,
            mu_theta=mu_t,
            rho_psi_tt=rho_psi_tt,
            p_rho=rho * mu_r,
            p_theta=rho_eta + np.sum(rho * mu_t, axis=0),
        )


class IdealGasMixture(SimpleMixture):
    """Mixture of ideal gases with constant heat capacities.

    ``psi_i = R_i theta log rho_i - c_i theta log theta``.
    """

    def _coeffs(self, rho):
        shape = (-1,) + (1,) * (np.ndim(rho) - 1)
        return self.params.R.reshape(shape), self.params.c.reshape(shape)

    def species_psi(self, rho, theta):
        R, c = self._coeffs(rho)
        return R * theta * np.log(rho) - c * theta * np.log(theta)

    def species_derivatives(self, rho, theta):
        rho = np.asarray(rho, dtype=float)
        theta = np.asarray(theta, dtype=float)
        R, c = self._coeffs(rho)
        log_r, log_t = np.log(rho), np.log(theta)
        psi = R * theta * log_r - c * theta * log_t
        psi_r = R * theta / rho
        psi_t = R * log_r - c * (log_t + 1.0)
        psi_rr = -R * theta / rho**2
        psi_rt = R / rho
        psi_tt = np.broadcast_to(-c / theta, rho.shape)
        return psi, psi_r, psi_t, psi_rr, psi_rt, psi_tt


def eval_thermo(model: MixtureModel, rho, theta) -> ThermoEval:
    """Evaluate every constitutive output at ``(rho, theta)``."""
    rho, theta = check_positive(rho, theta)
    return model.evaluate(rho, theta)


def relative_quantities(model: MixtureModel, omega, omega_bar, v=0.0, v_bar=0.0
                        ) -> RelativeQuantities:
    """Relative free energy, pressure, and entropy of ``omega`` w.r.t. ``omega_bar``.

    ``omega`` is a pair ``(rho, theta)``; velocities may be scalars or arrays
    with the trailing shape.
    """
    rho, theta = check_positive(*omega)
    rho_b, theta_b = check_positive(*omega_bar)
    drho = rho - rho_b
    dtheta = theta - theta_b

    rho_eta = -model.rho_psi_theta(rho, theta)
    rho_e = model.rho_psi(rho, theta) + theta * rho_eta
    rho_eta_b = -model.rho_psi_theta(rho_b, theta_b)
    rho_e_b = model.rho_psi(rho_b, theta_b) + theta_b * rho_eta_b
    mu_b = model.chemical_potentials(rho_b, theta_b)
    J = rho_e - rho_e_b - np.sum(mu_b * drho, axis=0) - theta_b * (rho_eta - rho_eta_b)

    der_b = model.derivatives(rho_b, theta_b)
    p = model.pressure(rho, theta)
    p_b = model.pressure(rho_b, theta_b)
    p_rel = p - p_b - np.sum(der_b.p_rho * drho, axis=0) - der_b.p_theta * dtheta
    # (rho eta)_{rho_j} = -(mu_j)_theta and (rho eta)_theta = -(rho psi)_{theta theta}
    eta_rel = (-rho_eta + rho_eta_b - np.sum(der_b.mu_theta * drho, axis=0)
               - der_b.rho_psi_tt * dtheta)

    dv = np.asarray(v, dtype=float) - np.asarray(v_bar, dtype=float)
    I = 0.5 * np.sum(rho, axis=0) * dv**2 + J
    return RelativeQuantities(J=J, p_rel=p_rel, neg_rho_eta_rel=eta_rel, I=I)


@dataclass(frozen=True)
class ConsistencyReport:
    """Relative finite-difference residuals of thermodynamic identities."""

    mu_theta: float
    gradient_balance: float
    pressure_rho: float
    pressure_theta: float

    @property
    def worst(self) -> float:
        return max(self.mu_theta, self.gradient_balance, self.pressure_rho,
                   self.pressure_theta)


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / (1.0 + np.abs(b))))


def consistency_residuals(model: MixtureModel, rho, theta, fd_step: float = FD_STEP,
                          direction=None) -> ConsistencyReport:
    """Check thermodynamic identities at one state by centered differences.

    ``direction`` is a tangent ``(drho, dtheta)`` defining the 1-D field
    ``s -> (rho + s drho, theta + s dtheta)`` along which the gradient
    balance ``sum_i [rho_i mu_i' + (h_i - rho_i mu_i) theta'/theta] = p'`` is
    tested.  The default direction perturbs every variable.
    """
    rho, theta = check_positive(rho, theta)
    rho = rho.reshape(-1)
    theta = float(theta)
    n = rho.size
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    ht = fd_step * (1 + abs(theta))
    hr = fd_step * (1 + np.abs(rho))

    mu = model.chemical_potentials(rho, theta)
    mu_t = (model.chemical_potentials(rho, theta + ht)
            - model.chemical_potentials(rho, theta - ht)) / (2 * ht)
    rho_e_r = np.empty(n)
    p_r = np.empty(n)
    mu_r = np.empty((n, n))  # mu_r[j, i] = d mu_j / d rho_i
    for i in range(n):
        e = np.zeros(n)
        e[i] = hr[i]
        rho_e_r[i] = (model.rho_e(rho + e, theta) - model.rho_e(rho - e, theta)) / (2 * hr[i])
        p_r[i] = (model.pressure(rho + e, theta) - model.pressure(rho - e, theta)) / (2 * hr[i])
        mu_r[:, i] = (model.chemical_potentials(rho + e, theta)
                      - model.chemical_potentials(rho - e, theta)) / (2 * hr[i])
    res_a = _rel(mu_t, (mu - rho_e_r) / theta)

    p_t = (model.pressure(rho, theta + ht) - model.pressure(rho, theta - ht)) / (2 * ht)
    rho_eta = -model.rho_psi_theta(rho, theta)
    res_c_rho = _rel(p_r, rho @ mu_r)
    res_c_theta = _rel(p_t, rho_eta + rho @ mu_t)

    if direction is None:
        drho = 0.1 * rho * np.where(np.arange(n) % 2, -1.0, 1.0)
        dtheta = 0.1 * theta
    else:
        drho, dtheta = np.asarray(direction[0], dtype=float), float(direction[1])
    s = fd_step

    def along(t):
        r, th = rho + t * drho, theta + t * dtheta
        return (model.chemical_potentials(r, th), th, model.pressure(r, th))

    mu_p, th_p, p_p = along(s)
    mu_m, th_m, p_m = along(-s)
    p_i, e_i = model.partial_quantities(rho, theta)
    h = rho * e_i + p_i
    lhs = np.sum(rho * (mu_p - mu_m)) + np.sum(h - rho * mu) * (th_p - th_m) / theta
    rhs = p_p - p_m
    scale = 1.0 + abs(model.pressure(rho, theta)) * max(np.max(np.abs(drho) / rho), abs(dtheta) / theta)
    res_b = float(abs(lhs - rhs) / (2 * s) / scale)
    return ConsistencyReport(res_a, res_b, res_c_rho, res_c_theta)


@dataclass(frozen=True)
class HypothesisReport:
    n_samples: int
    min_hessian_eig: float
    min_c_v: float
    max_rho_psi_tt: float
    alpha: float  # sup of the energy-weighted enthalpy ratio
    simple_mixture_residual: float


def hessian_and_hypotheses(model: MixtureModel, box: AdmissibleBox, n_samples: int,
                           rng: np.random.Generator) -> HypothesisReport:
    """Sample the box and verify convexity, positivity of ``c_v``, and ``alpha``.

    Raises :class:`HypothesisViolated` naming the first failed condition.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rho, theta = box.sample(rng, model.n, n_samples)
    th = eval_thermo(model, rho, theta)
    der = model.derivatives(rho, theta)
    eig = np.linalg.eigvalsh(np.moveaxis(der.hess_rho, (0, 1), (-2, -1)))
    min_eig = eig.min(axis=-1)

    def fail(cond, mask):
        k = int(np.argmax(mask))
        raise HypothesisViolated(
            f"{cond} fails at rho={rho[:, k].tolist()}, theta={theta[k]!r}")

    if np.any(min_eig <= 0):
        fail("positive definite (rho psi)_rho_rho", min_eig <= 0)
    if np.any(th.c_v <= 0):
        fail("c_v > 0", th.c_v <= 0)
    if np.any(der.rho_psi_tt >= 0):
        fail("(rho psi)_theta_theta < 0", der.rho_psi_tt >= 0)

    g = th.h_partial - rho * th.mu
    ratio = np.sum(g**2 / rho, axis=0) / (th.rho_e + 1.0)

    simple_res = 0.0
    if isinstance(model, SimpleMixture):
        psi_t = SimpleMixture.species_derivatives(model, rho, theta)[2]
        ref = -theta * rho * psi_t
        simple_res = float(np.max(np.abs(g - ref) / (1.0 + np.abs(ref))))
        if simple_res > 1e-6:
            fail("h_j - rho_j mu_j = -theta rho_j (psi_j)_theta",
                 np.any(np.abs(g - ref) / (1.0 + np.abs(ref)) > 1e-6, axis=0))
    return HypothesisReport(
        n_samples=n_samples,
        min_hessian_eig=float(min_eig.min()),
        min_c_v=float(th.c_v.min()),
        max_rho_psi_tt=float(der.rho_psi_tt.max()),
        alpha=float(ratio.max()),
        simple_mixture_residual=simple_res,
    )


def energy_hessian_bounds(model: MixtureModel, rho, theta):
    """Lower convexity bound of ``rho e`` in ``(rho_i, rho eta)`` and the
    Lipschitz constant of ``(rho_i, rho eta) -> (rho_i, theta)``.

    Returns per-state ``(min_eig, lipschitz_sq)``.
    """
    der = model.derivatives(rho, theta)
    n = rho.shape[0]
    m = rho.shape[1:]
    # Jacobian of (mu, theta) and of (rho, rho eta), both w.r.t. (rho, theta)
    dgrad = np.zeros((n + 1, n + 1) + m)
    dgrad[:n, :n] = der.hess_rho
    dgrad[:n, n] = der.mu_theta
    dgrad[n, n] = 1.0
    dphi = np.zeros((n + 1, n + 1) + m)
    dphi[np.arange(n), np.arange(n)] = 1.0
    dphi[n, :n] = -der.mu_theta
    dphi[n, n] = -der.rho_psi_tt
    a = np.moveaxis(dgrad, (0, 1), (-2, -1))
    b = np.moveaxis(dphi, (0, 1), (-2, -1))
    binv = np.linalg.inv(b)
    hess = a @ binv
    hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
    min_eig = np.linalg.eigvalsh(hess)[..., 0]
    lip = np.linalg.norm(binv, ord=2, axis=(-2, -1)) ** 2
    return min_eig, lip


@dataclass(frozen=True)
class LemmaReport:
    n_pairs: int
    c1: float
    min_J: float
    min_margin: float  # min of J - c1 |omega - omega_bar|^2
    sup_p_ratio: float
    sup_eta_ratio: float
    extra: dict = field(default_factory=dict)


def lemma_scan(model: MixtureModel, box: AdmissibleBox, n_pairs: int,
               rng: np.random.Generator) -> LemmaReport:
    """Scan random state pairs for the quadratic bounds on the relative quantities."""
    n = model.n
    rho, theta = box.sample(rng, n, n_pairs)
    rho_b, theta_b = box.sample(rng, n, n_pairs)
    rq = relative_quantities(model, (rho, theta), (rho_b, theta_b))
    dist2 = np.sum((rho - rho_b) ** 2, axis=0) + (theta - theta_b) ** 2

    # the convexity constant is taken over samples, box corners and the pairs
    probe_r, probe_t = box.sample(rng, n, n_pairs)
    cr, ct = box.corners(n)
    probe_r = np.concatenate([probe_r, cr, rho, rho_b], axis=1)
    probe_t = np.concatenate([probe_t, ct, theta, theta_b])
    min_eig, lip = energy_hessian_bounds(model, probe_r, probe_t)
    c1 = 0.5 * float(min_eig.min()) / float(lip.max())

    if np.any(rq.J <= 0):
        k = int(np.argmin(rq.J))
        raise HypothesisViolated(
            f"J > 0 fails at rho={rho[:, k].tolist()}, theta={theta[k]!r}")
    return LemmaReport(
        n_pairs=n_pairs,
        c1=c1,
        min_J=float(rq.J.min()),
        min_margin=float(np.min(rq.J - c1 * dist2)),
        sup_p_ratio=float(np.max(np.abs(rq.p_rel) / rq.J)),
        sup_eta_ratio=float(np.max(np.abs(rq.neg_rho_eta_rel) / rq.J)),
        extra={"min_J_over_dist2": float(np.min(rq.J / dist2))},
    )
