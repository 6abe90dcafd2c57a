import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixflow.constitutive import (
    AdmissibleBox, IdealGasMixture, SimpleMixture, SpeciesParams, consistency_residuals,
    eval_thermo, hessian_and_hypotheses, lemma_scan, relative_quantities,
)
from mixflow.errors import HypothesisViolated, NonPositiveState

LN2 = np.log(2.0)


def ideal(R, c, **kw):
    return IdealGasMixture(SpeciesParams(R, c), **kw)


class FdIdealGas(SimpleMixture):
    """Same free energy as the ideal gas, but only ``psi_i`` is supplied."""

    def species_psi(self, rho, theta):
        R = self.params.R.reshape((-1,) + (1,) * (np.ndim(rho) - 1))
        c = self.params.c.reshape(R.shape)
        return R * theta * np.log(rho) - c * theta * np.log(theta)


class NonConvexGas(SimpleMixture):
    """Free energy with a concave density dependence."""

    def species_psi(self, rho, theta):
        return -rho * theta - theta * np.log(theta)


def test_unit_state():
    th = eval_thermo(ideal([1, 1], [1, 1]), np.array([1.0, 1.0]), 1.0)
    assert th.rho_psi == pytest.approx(0.0, abs=1e-15)
    assert th.p == pytest.approx(2.0)
    assert th.rho_e == pytest.approx(2.0)
    assert th.rho_eta == pytest.approx(2.0)
    assert th.c_v == pytest.approx(1.0)
    np.testing.assert_allclose(th.mu, [1, 1])
    np.testing.assert_allclose(th.p_partial, [1, 1])
    np.testing.assert_allclose(th.e_partial, [1, 1])
    np.testing.assert_allclose(th.h_partial, [2, 2])


def test_two_species_hand_values():
    th = eval_thermo(ideal([1, 0.5], [1.5, 1]), np.array([2.0, 1.0]), 2.0)
    assert th.rho_psi == pytest.approx(-4 * LN2, rel=1e-14)
    assert th.p == pytest.approx(5.0, rel=1e-14)
    assert th.rho_e == pytest.approx(8.0, rel=1e-14)
    np.testing.assert_allclose(th.mu, [2 - LN2, 1 - 2 * LN2], rtol=1e-14)
    assert th.rho_eta == pytest.approx(4 + 2 * LN2, rel=1e-14)
    gibbs_duhem = th.rho_psi + th.p - np.sum(np.array([2.0, 1.0]) * th.mu)
    assert abs(gibbs_duhem) <= 1e-12 * (1 + th.p)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.05, 20), min_size=3, max_size=3),
       st.floats(0.05, 20),
       st.lists(st.floats(0.1, 5), min_size=6, max_size=6))
def test_identities_random_states(rho, theta, coeffs):
    model = ideal(coeffs[:3], coeffs[3:])
    rho = np.array(rho)
    th = eval_thermo(model, rho, theta)
    assert abs(th.p - th.p_partial.sum()) <= 1e-12 * (1 + abs(th.p))
    assert abs(th.rho_e - np.sum(rho * th.e_partial)) <= 1e-12 * (1 + abs(th.rho_e))
    gd = th.rho_psi + th.p - np.sum(rho * th.mu)
    assert abs(gd) <= 1e-12 * (1 + abs(th.p) + np.sum(np.abs(rho * th.mu)))
    assert th.rho_e == pytest.approx(th.rho_psi + theta * th.rho_eta, rel=1e-12, abs=1e-12)


def test_rejects_non_positive_state():
    with pytest.raises(NonPositiveState):
        eval_thermo(ideal([1, 1], [1, 1]), np.array([1.0, 0.0]), 1.0)
    with pytest.raises(NonPositiveState):
        eval_thermo(ideal([1, 1], [1, 1]), np.array([1.0, 1.0]), -1.0)


def test_species_params_validation():
    with pytest.raises(ValueError):
        SpeciesParams([1, 2], [1])
    with pytest.raises(ValueError):
        SpeciesParams([1, -2], [1, 1])


def test_fd_fallback_matches_closed_form():
    params = SpeciesParams([1, 0.5, 2], [1.5, 1, 2.5])
    rng = np.random.default_rng(3)
    rho, theta = AdmissibleBox().sample(rng, 3, 20)
    a = eval_thermo(IdealGasMixture(params), rho, theta)
    b = eval_thermo(FdIdealGas(params), rho, theta)
    for name in ("rho_psi", "mu", "rho_eta", "p", "p_partial", "e_partial"):
        np.testing.assert_allclose(getattr(b, name), getattr(a, name), rtol=1e-6, atol=1e-6)
    # second differences lose about half the digits
    np.testing.assert_allclose(b.c_v, a.c_v, rtol=1e-4)


def test_relative_quantities_coincident():
    model = ideal([1, 2], [1, 3])
    w = (np.array([1.0, 2.0]), 1.5)
    rq = relative_quantities(model, w, w, 0.3, 0.3)
    for val in (rq.J, rq.p_rel, rq.neg_rho_eta_rel, rq.I):
        assert val == pytest.approx(0.0, abs=1e-13)


def test_relative_free_energy_temperature_change():
    model = ideal([1, 1], [1, 1])
    rq = relative_quantities(model, (np.array([1.0, 1.0]), 1.1), (np.array([1.0, 1.0]), 1.0))
    assert rq.J == pytest.approx(2 * (-np.log(1.1) + 0.1), rel=1e-12)


def test_relative_pressure_hand_value():
    model = ideal([1, 1], [1, 1])
    rq = relative_quantities(model, (np.array([1.2, 1.0]), 1.1), (np.array([1.0, 1.0]), 1.0))
    assert rq.p_rel == pytest.approx(0.02, rel=1e-12)


def test_relative_entropy_kinetic_part():
    model = ideal([1, 1], [1, 1])
    w = (np.array([1.0, 2.0]), 1.0)
    rq = relative_quantities(model, w, w, 1.5, 1.0)
    assert rq.I == pytest.approx(0.5 * 3.0 * 0.25, rel=1e-13)


def test_relative_free_energy_isothermal_closed_form():
    # at equal temperatures J = theta sum_i R_i (rho_i log(rho_i/rho_bar_i) - rho_i + rho_bar_i)
    model = ideal([1, 0.5], [1.5, 1])
    rho, rho_b, theta = np.array([1.3, 0.7]), np.array([1.0, 1.1]), 1.4
    rq = relative_quantities(model, (rho, theta), (rho_b, theta))
    ref = theta * np.sum(np.array([1, 0.5]) * (rho * np.log(rho / rho_b) - rho + rho_b))
    assert rq.J == pytest.approx(ref, rel=1e-12)


def test_consistency_ideal_gas():
    model = ideal([1, 0.5, 2], [1.5, 1, 2.5])
    rep = consistency_residuals(model, np.array([0.5, 1.2, 2.0]), 1.7, 1e-5)
    assert rep.worst <= 1e-6


def test_consistency_single_species():
    rep = consistency_residuals(ideal([1], [2]), np.array([1.3]), 0.8, 1e-5)
    assert rep.gradient_balance <= 1e-6


def test_consistency_constant_field_exact():
    rep = consistency_residuals(ideal([1, 2], [1, 1]), np.array([1.0, 1.0]), 1.0, 1e-5,
                                direction=(np.zeros(2), 0.0))
    assert rep.gradient_balance == 0.0


def test_hypotheses_ideal_gas():
    model = ideal([1, 0.5, 2], [1.5, 1, 2.5])
    rep = hessian_and_hypotheses(model, AdmissibleBox(), 500, np.random.default_rng(0))
    assert rep.min_hessian_eig > 0
    assert rep.min_c_v > 0
    assert rep.max_rho_psi_tt < 0
    assert rep.simple_mixture_residual <= 1e-8


def test_enthalpy_gap_unit_state():
    rho = np.array([1.0, 1.0])
    th = eval_thermo(ideal([1, 1], [1, 1]), rho, 1.0)
    g = th.h_partial - rho * th.mu
    np.testing.assert_allclose(g, [1.0, 1.0], rtol=1e-14)
    assert np.sum(g**2 / rho) / (th.rho_e + 1) == pytest.approx(2 / 3)


def test_hypothesis_violation_reported():
    model = NonConvexGas(SpeciesParams([1, 1], [1, 1]))
    with pytest.raises(HypothesisViolated, match="rho psi"):
        hessian_and_hypotheses(model, AdmissibleBox(), 10, np.random.default_rng(0))


def test_lemma_scan_bounds():
    model = ideal([1, 0.5, 2], [1.5, 1, 2.5])
    rep = lemma_scan(model, AdmissibleBox(), 2000, np.random.default_rng(1))
    assert rep.min_J > 0
    assert rep.c1 > 0
    assert rep.min_margin >= 0
    assert np.isfinite(rep.sup_p_ratio) and np.isfinite(rep.sup_eta_ratio)


def test_kappa_laws():
    rho, theta = np.ones((2, 3)), np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(ideal([1, 1], [1, 1], kappa0=0.5).kappa(rho, theta), 0.5)
    np.testing.assert_allclose(
        ideal([1, 1], [1, 1], kappa0=0.5, kappa_law="linear").kappa(rho, theta), 0.5 * theta)
    with pytest.raises(ValueError):
        ideal([1, 1], [1, 1], kappa0=-1)
