"""Empirical measure, total mass, and coarse-grained density profiles."""

from dataclasses import dataclass

import numpy as np

from .paths import DensityProfile


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Atomic measure placing mass 1/N at x/N for each occupied site."""

    site_values: np.ndarray
    N: int

    def __post_init__(self):
        occ = np.asarray(self.site_values, dtype=np.uint8)
        if occ.shape != (self.N - 1,):
            raise ValueError("need N-1 site values")
        if np.any(occ > 1):
            raise ValueError("occupations must be 0 or 1")
        object.__setattr__(self, "site_values", occ)


def total_mass(e):
    """Particle count divided by N (the pairing with F = 1)."""
    return float(e.site_values.sum()) / e.N


def pair_with_test(e, F):
    """(1/N) sum_x eta(x) F(x/N) for a test function F on [0, 1]."""
    x = np.arange(1, e.N) / e.N
    vals = np.asarray(F(x), dtype=float)
    return float(np.sum(e.site_values * vals)) / e.N


def block_density(e, cells):
    """Coarse-grain the configuration into ``cells`` contiguous blocks.

    Blocks partition the N-1 sites as evenly as possible; each cell
    value is the occupied fraction of its block.
    """
    nsites = e.N - 1
    if not 1 <= cells <= nsites:
        raise ValueError("cells must satisfy 1 <= cells <= N-1")
    bounds = np.round(np.linspace(0, nsites, cells + 1)).astype(int)
    occ = e.site_values
    vals = np.array([occ[a:b].mean() for a, b in zip(bounds[:-1], bounds[1:])])
    edges = bounds / nsites
    return DensityProfile(vals, edges)
