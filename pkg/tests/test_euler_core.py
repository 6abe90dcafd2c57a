import numpy as np
import pytest

from mixflow.constitutive import (
    AdmissibleBox, IdealGasMixture, SimpleMixture, SpeciesParams, eval_thermo,
)
from mixflow.errors import NonHyperbolicState, NonPositiveState, NoTemperatureRoot
from mixflow.euler_core import (
    ConservedState, MixtureState, conserved_from_primitive, max_wave_speed, multiplier,
    physical_flux, primitive_from_conserved, sound_speed, structure_at, structure_check,
)

UNIT = IdealGasMixture(SpeciesParams([1, 1], [1, 1]))


def state(rho, v, theta):
    return MixtureState(np.asarray(rho, float), np.asarray(v, float), np.asarray(theta, float))


def test_conserved_unit_state():
    s = state([1.0, 1.0], 1.0, 1.0)
    c = conserved_from_primitive(s, eval_thermo(UNIT, s.rho, s.theta))
    np.testing.assert_allclose(c.m, [1, 1])
    assert c.mom == pytest.approx(2.0)
    assert c.E == pytest.approx(3.0)


def test_energy_at_rest_is_internal():
    s = state([0.3, 2.0], 0.0, 1.7)
    th = eval_thermo(UNIT, s.rho, s.theta)
    assert conserved_from_primitive(s, th).E == th.rho_e


def test_inverse_closed_form():
    c = ConservedState(np.array([1.0, 1.0]), np.array(2.0), np.array(3.0))
    p = primitive_from_conserved(c, UNIT)
    assert p.theta == pytest.approx(1.0, rel=1e-13)
    assert p.v == pytest.approx(1.0)


def test_zero_internal_energy_has_no_root():
    c = ConservedState(np.array([1.0, 1.0]), np.array(2.0), np.array(1.0))
    with pytest.raises(NoTemperatureRoot):
        primitive_from_conserved(c, UNIT)


def test_roundtrip_random():
    model = IdealGasMixture(SpeciesParams([1, 0.5, 2], [1.5, 1, 2.5]))
    rng = np.random.default_rng(0)
    rho, theta = AdmissibleBox().sample(rng, 3, 1000)
    v = rng.uniform(-3, 3, 1000)
    s = MixtureState(rho, v, theta)
    c = conserved_from_primitive(s, eval_thermo(model, rho, theta))
    back = primitive_from_conserved(c, model)
    assert np.max(np.abs(back.theta - theta) / theta) <= 1e-11
    assert np.max(np.abs(back.v - v)) <= 1e-11
    np.testing.assert_array_equal(back.rho, rho)


def test_flux_at_rest():
    s = state([1.0, 2.0], 0.0, 1.5)
    th = eval_thermo(UNIT, s.rho, s.theta)
    f = physical_flux(s, th)
    np.testing.assert_array_equal(f.m, 0.0)
    assert f.E == 0.0
    assert f.mom == th.p


def test_flux_unit_state():
    s = state([1.0, 1.0], 1.0, 1.0)
    f = physical_flux(s, eval_thermo(UNIT, s.rho, s.theta))
    np.testing.assert_allclose(f.m, [1, 1])
    assert f.mom == pytest.approx(4.0)
    assert f.E == pytest.approx(5.0)


def test_flux_galilean_split():
    rng = np.random.default_rng(1)
    rho, theta = rng.uniform(0.5, 2, (2, 10)), rng.uniform(0.5, 2, 10)
    v = rng.uniform(-2, 2, 10)
    th = eval_thermo(UNIT, rho, theta)
    moving = MixtureState(rho, v, theta)
    f = physical_flux(moving, th)
    f0 = physical_flux(MixtureState(rho, 0 * v, theta), th)
    U = conserved_from_primitive(moving, th)
    np.testing.assert_allclose(f.m - f0.m, U.m * v, atol=1e-12)
    np.testing.assert_allclose(f.mom - f0.mom, U.mom * v, atol=1e-12)
    np.testing.assert_allclose(f.E - f0.E, (U.E + th.p) * v, atol=1e-12)


def test_single_species_sound_speed():
    model = IdealGasMixture(SpeciesParams([1], [1]))
    assert max_wave_speed(state([[1.0]], [0.0], [1.0]), model) == pytest.approx(np.sqrt(2), rel=1e-14)
    rng = np.random.default_rng(2)
    R, cv = 0.7, 1.9
    model = IdealGasMixture(SpeciesParams([R], [cv]))
    rho, theta = rng.uniform(0.1, 10, (1, 50)), rng.uniform(0.1, 10, 50)
    gamma = 1 + R / cv
    np.testing.assert_allclose(sound_speed(model, rho, theta), np.sqrt(gamma * R * theta),
                               rtol=1e-12)


def test_two_species_wave_speed():
    s = state([1.0, 1.0], 0.0, 1.0)
    assert max_wave_speed(s, UNIT) == pytest.approx(np.sqrt(2), rel=1e-14)
    s = state([1.0, 1.0], 3.0, 1.0)
    assert max_wave_speed(s, UNIT) == pytest.approx(3 + np.sqrt(2), rel=1e-14)


class TensileGas(SimpleMixture):
    """Pressure decreasing in density; the sound speed radicand is ``-theta/2``."""

    def species_psi(self, rho, theta):
        return -theta * np.log(rho) - 2 * theta * np.log(theta)


def test_non_hyperbolic_rejected():
    model = TensileGas(SpeciesParams([1], [2]))
    with pytest.raises(NonHyperbolicState):
        sound_speed(model, np.array([1.0]), 1.0)
    with pytest.raises(NonPositiveState):
        sound_speed(UNIT, np.array([1.0, -1.0]), 1.0)


def test_multiplier_velocity_shift():
    U = np.r_[1.0, 2.0, 0.5, 1.3]
    U2 = U.copy()
    U2[2] = -0.7
    G1, G2 = multiplier(UNIT, U), multiplier(UNIT, U2)
    np.testing.assert_allclose(G2[:2] - G1[:2], -0.5 * (0.7**2 - 0.5**2) / 1.3, atol=1e-14)


def test_symmetrizer_unit_state_eigenvalue():
    r = structure_at(UNIT, np.r_[1.0, 1.0, 0.0, 1.0])
    assert r["eig"] == pytest.approx(1.0, rel=1e-6)
    assert r["det"] == pytest.approx(1.0, rel=1e-8)


def test_structure_random_states():
    model = IdealGasMixture(SpeciesParams([1, 0.5, 2], [1.5, 1, 2.5]))
    rep = structure_check(model, AdmissibleBox(), 20, np.random.default_rng(5))
    assert rep.max_entropy_residual <= 1e-6
    assert rep.max_flux_residual <= 1e-6
    assert rep.max_asymmetry <= 1e-10
    assert rep.min_symmetrizer_eig > 0
    assert rep.max_speed_error <= 1e-8
    assert rep.max_block_residual <= 1e-8
    assert rep.min_det_ratio == pytest.approx(1.0, rel=1e-6)
