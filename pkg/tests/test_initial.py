import numpy as np
import pytest

from mixflow.constitutive import IdealGasMixture, SpeciesParams
from mixflow.initial import InitialCondition
from mixflow.solver_type1 import Grid1D

MODEL = IdealGasMixture(SpeciesParams([1, 0.5, 2], [1.5, 1, 2.5]))
X = Grid1D(64).x


def test_rest_state_is_pressure_balanced():
    s = InitialCondition("rest").build(X, MODEL)
    p = MODEL.pressure(s.rho, s.theta)
    np.testing.assert_allclose(p, p[0], rtol=1e-14)
    assert np.ptp(s.rho[0]) > 0
    np.testing.assert_array_equal(s.v, 0.0)


def test_smooth_defaults():
    s = InitialCondition("smooth").build(X, MODEL)
    np.testing.assert_allclose(s.v, 0.1 * np.sin(X))
    np.testing.assert_allclose(s.theta, 1 + 0.1 * np.cos(X))
    assert np.all(s.rho > 0)


def test_gaussian_is_periodic():
    s = InitialCondition("gaussian", {"center": 0.0}).build(X, MODEL)
    np.testing.assert_allclose(s.rho[:, 0], s.rho[:, -1], rtol=1e-12)


def test_unknown_kind_and_params():
    with pytest.raises(ValueError):
        InitialCondition("shock")
    with pytest.raises(ValueError):
        InitialCondition("uniform", {"width": 1})
    with pytest.raises(ValueError):
        InitialCondition("uniform", {"rho": [1, 2]}).build(X, MODEL)
