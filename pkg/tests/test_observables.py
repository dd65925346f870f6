import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowssep.observables import (EmpiricalMeasure, block_density,
                                  pair_with_test, total_mass)


def measure(bits, N=None):
    bits = np.asarray(bits, dtype=np.uint8)
    return EmpiricalMeasure(bits, N or bits.size + 1)


def test_total_mass_counts_particles():
    e = measure([1, 0, 1, 1, 0, 0, 0])
    assert total_mass(e) == pytest.approx(3 / 8)


def test_pairing_with_constant_is_mass():
    e = measure([1, 1, 0, 0, 1])
    assert pair_with_test(e, lambda x: np.ones_like(x)) == \
        pytest.approx(total_mass(e))


def test_pairing_places_atoms_at_x_over_N():
    e = measure([0, 1, 0, 0])      # one particle at site 2, N = 5
    assert pair_with_test(e, lambda x: x) == pytest.approx(2 / 25)


@given(st.lists(st.integers(0, 1), min_size=3, max_size=40),
       st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=50, deadline=None)
def test_pairing_is_linear(bits, c1, c2):
    e = measure(bits)
    f = lambda x: np.sin(3 * x)
    g = lambda x: x ** 2
    lhs = pair_with_test(e, lambda x: c1 * f(x) + c2 * g(x))
    rhs = c1 * pair_with_test(e, f) + c2 * pair_with_test(e, g)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_block_density_partitions_and_averages():
    e = measure([1, 1, 1, 0, 0, 0])
    rho = block_density(e, 2)
    assert np.allclose(rho.values, [1.0, 0.0])
    assert rho.edges[0] == 0.0 and rho.edges[-1] == 1.0
    # mass of the profile matches the occupied fraction of sites
    assert rho.mass() == pytest.approx(0.5)


def test_block_density_validates_cells():
    e = measure([1, 0, 1])
    with pytest.raises(ValueError):
        block_density(e, 0)
    with pytest.raises(ValueError):
        block_density(e, 4)


def test_measure_validation():
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.array([0, 2, 0], dtype=np.uint8), 4)
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros(3, dtype=np.uint8), 5)
