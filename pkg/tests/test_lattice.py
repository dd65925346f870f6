import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowssep.lattice import (EventKind, SimParams, TimeScale,
                              change_of_measure_log_weight, simulate,
                              transition_rates)
from slowssep.paths import ControlPath


def params(N=6, alpha=0.2, beta=0.8, scale=TimeScale.ACCELERATED,
           horizon=0.5, tilt=None, seed=0):
    return SimParams(N, alpha, beta, scale, horizon, tilt, seed)


def test_param_validation():
    with pytest.raises(ValueError):
        params(N=2)
    with pytest.raises(ValueError):
        params(alpha=0.0)
    with pytest.raises(ValueError):
        params(beta=1.0)
    with pytest.raises(ValueError):
        params(horizon=-1.0)
    with pytest.raises(ValueError):
        params(tilt=ControlPath.constant(1.0, 0.2), horizon=0.5)


def test_gamma_and_speeds():
    p = params(N=10)
    assert p.gamma == pytest.approx(0.5)
    assert p.bulk_rate == 1000.0 and p.boundary_factor == 10.0
    pd = params(N=10, scale=TimeScale.DIFFUSIVE)
    assert pd.bulk_rate == 100.0 and pd.boundary_factor == 1.0


def test_transition_rates_table():
    p = params(N=5, alpha=0.3, beta=0.7)
    occ = np.array([1, 0, 0, 1], dtype=np.uint8)
    rt = transition_rates(occ, p)
    assert np.allclose(rt.bond_rates, [125.0, 0.0, 125.0])
    assert rt.left == pytest.approx(5 * 0.7)     # occupied: removal at 1-alpha
    assert rt.right == pytest.approx(5 * 0.3)    # occupied: removal at 1-beta
    assert rt.total == pytest.approx(250.0 + 3.5 + 1.5)


def test_transition_rates_tilted():
    g = math.log(2.0)
    p = params(N=5, alpha=0.3, beta=0.7,
               tilt=ControlPath.constant(g, 0.5))
    occ = np.zeros(4, dtype=np.uint8)
    rt = transition_rates(occ, p, t=0.1)
    assert rt.left == pytest.approx(5 * 0.3 * 2.0)
    assert rt.right == pytest.approx(5 * 0.7 * 2.0)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_exclusion_preserved(seed):
    p = params(N=6, horizon=0.2, seed=seed)
    traj = simulate(p, np.array([1, 0, 1, 0, 1], dtype=np.uint8))
    assert set(np.unique(traj.final)) <= {0, 1}
    # swaps conserve the particle number; flips change it by one
    flips = sum(1 for e in traj.events if e.kind is not EventKind.SWAP)
    assert abs(int(traj.final.sum()) - 3) <= flips


def test_observer_sees_right_continuous_states():
    p = params(N=5, horizon=0.3, seed=3)
    seen = []
    simulate(p, np.zeros(4, dtype=np.uint8),
             observer=lambda t, occ: seen.append((t, occ.sum())),
             observer_times=np.linspace(0.0, 0.3, 7))
    assert len(seen) == 7
    assert seen[0] == (0.0, 0)


def test_untilted_weight_is_zero():
    p = params(seed=11)
    traj = simulate(p, np.zeros(5, dtype=np.uint8))
    assert traj.log_weight == 0.0


def test_weight_recompute_matches_online():
    T = 0.4
    G = ControlPath(np.array([0.0, T / 2, T]), np.array([0.5, -0.3, 1.0]))
    for seed in range(5):
        p = params(N=5, horizon=T, tilt=G, seed=seed)
        traj = simulate(p, np.array([0, 1, 0, 1], dtype=np.uint8))
        recomputed = change_of_measure_log_weight(traj, G)
        assert recomputed == pytest.approx(traj.log_weight, abs=1e-12)


def test_weight_mean_one_small_system():
    # E[exp(log dP/dP^G)] = 1 under the tilted law
    T = 0.5
    G = ControlPath.constant(math.log(2.0), T)
    w = []
    for seed in range(400):
        p = params(N=4, alpha=0.4, beta=0.6, horizon=T, tilt=G, seed=seed)
        w.append(math.exp(simulate(p, np.zeros(3, dtype=np.uint8)).log_weight))
    mean = np.mean(w)
    se = np.std(w, ddof=1) / math.sqrt(len(w))
    assert abs(mean - 1.0) < 4 * se


def test_simulation_is_deterministic_in_seed():
    p = params(seed=42, horizon=0.3)
    t1 = simulate(p, np.zeros(5, dtype=np.uint8))
    t2 = simulate(p, np.zeros(5, dtype=np.uint8))
    assert np.array_equal(t1.final, t2.final)
    assert [e.time for e in t1.events] == [e.time for e in t2.events]
