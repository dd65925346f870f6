import numpy as np
import pytest

from slowssep.paths import ControlPath, DensityProfile, MassPath


def test_control_interpolation_and_cover():
    G = ControlPath(np.array([0.0, 1.0, 2.0]), np.array([0.0, 2.0, 2.0]))
    assert G(0.5) == pytest.approx(1.0)
    assert G(1.7) == pytest.approx(2.0)
    assert G.covers(0.0, 2.0)
    assert not G.covers(0.0, 2.5)
    assert not G.is_zero()
    assert ControlPath.zero(3.0).is_zero()


def test_control_rejects_bad_grids():
    with pytest.raises(ValueError):
        ControlPath(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        ControlPath(np.array([0.0, 1.0]), np.array([1.0, np.inf]))
    with pytest.raises(ValueError):
        ControlPath(np.array([0.0, 1.0]), np.array([1.0]))


def test_mass_path_bounds_and_deriv():
    t = np.linspace(0.0, 1.0, 101)
    a = MassPath(t, 0.5 + 0.3 * t ** 2)
    # second-order differences recover the derivative of a quadratic
    assert np.allclose(a.deriv(), 0.6 * t, atol=1e-10)
    with pytest.raises(ValueError):
        MassPath(t, 0.5 + t)          # exceeds 1


def test_mass_path_restriction_rebases():
    t = np.linspace(0.0, 2.0, 21)
    a = MassPath(t, 0.25 * t)
    sub = a.restricted(0.5, 1.5)
    assert sub.t[0] == 0.0 and sub.t[-1] == pytest.approx(1.0)
    assert sub(0.0) == pytest.approx(0.125)
    assert sub(1.0) == pytest.approx(0.375)


def test_density_profile_mesh():
    rho = DensityProfile.from_function(lambda x: x, cells=10)
    assert rho.cells == 10
    assert rho.mass() == pytest.approx(0.5, abs=1e-12)
    assert np.allclose(rho.widths, 0.1)
    with pytest.raises(ValueError):
        DensityProfile(np.array([0.5]), edges=np.array([0.0, 0.7]))
