"""Scalar paths on time grids and density profiles on spatial meshes.

MassPath and ControlPath are piecewise-linear functions of time on a
strictly increasing grid; DensityProfile holds cell-averaged densities
on a partition of [0, 1].
"""

from dataclasses import dataclass, field

import numpy as np


def _as_grid(t):
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("time grid needs at least two nodes")
    if not np.all(np.diff(t) > 0):
        raise ValueError("time grid must be strictly increasing")
    return t


@dataclass(frozen=True)
class ControlPath:
    """Piecewise-linear real-valued control G(t) on [t[0], t[-1]]."""

    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", _as_grid(self.t))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.shape != self.t.shape:
            raise ValueError("grid and values must have equal length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("control values must be finite")

    @classmethod
    def constant(cls, value, horizon):
        return cls(np.array([0.0, horizon]), np.array([value, value]))

    @classmethod
    def zero(cls, horizon):
        return cls.constant(0.0, horizon)

    def __call__(self, s):
        return np.interp(s, self.t, self.values)

    def covers(self, t0, t1, tol=1e-12):
        return self.t[0] <= t0 + tol and self.t[-1] >= t1 - tol

    def is_zero(self):
        return bool(np.all(self.values == 0.0))

    def slopes(self):
        return np.diff(self.values) / np.diff(self.t)

    def shifted(self, t0):
        """Restriction to [t0, end], re-based at time 0."""
        return type(self)(*_restrict(self.t, self.values, t0))


@dataclass(frozen=True)
class MassPath:
    """Mass trajectory a(t) in [0, 1]; optional pointwise derivative."""

    t: np.ndarray
    values: np.ndarray
    derivative: np.ndarray | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "t", _as_grid(self.t))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.shape != self.t.shape:
            raise ValueError("grid and values must have equal length")
        if np.any(self.values < -1e-12) or np.any(self.values > 1 + 1e-12):
            raise ValueError("mass values must lie in [0, 1]")
        if self.derivative is not None:
            d = np.asarray(self.derivative, dtype=float)
            if d.shape != self.t.shape:
                raise ValueError("derivative must match the grid")
            object.__setattr__(self, "derivative", d)

    def __call__(self, s):
        return np.interp(s, self.t, self.values)

    @property
    def horizon(self):
        return float(self.t[-1] - self.t[0])

    def deriv(self):
        """Supplied derivative, or second-order finite differences
        (central inside, one-sided at the endpoints)."""
        if self.derivative is not None:
            return self.derivative
        return np.gradient(self.values, self.t, edge_order=2)

    def restricted(self, t0, t1):
        """Sub-path on [t0, t1], re-based at time 0."""
        tt, vv = _restrict(self.t, self.values, t0, t1)
        dd = None
        if self.derivative is not None:
            _, dd = _restrict(self.t, self.derivative, t0, t1)
        return MassPath(tt, vv, dd)


def _restrict(t, v, t0, t1=None):
    if t1 is None:
        t1 = t[-1]
    if t0 < t[0] - 1e-12 or t1 > t[-1] + 1e-12 or t1 <= t0:
        raise ValueError("restriction window outside the grid")
    inner = t[(t > t0 + 1e-12) & (t < t1 - 1e-12)]
    tt = np.concatenate(([t0], inner, [t1]))
    vv = np.interp(tt, t, v)
    return tt - t0, vv


@dataclass(frozen=True)
class DensityProfile:
    """Cell-averaged density on a partition of [0, 1]."""

    values: np.ndarray
    edges: np.ndarray | None = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("profile needs at least one cell")
        if np.any(v < -1e-12) or np.any(v > 1 + 1e-12):
            raise ValueError("density values must lie in [0, 1]")
        object.__setattr__(self, "values", v)
        if self.edges is None:
            object.__setattr__(self, "edges", np.linspace(0.0, 1.0, v.size + 1))
        else:
            e = np.asarray(self.edges, dtype=float)
            if e.shape != (v.size + 1,) or not np.all(np.diff(e) > 0):
                raise ValueError("edges must be increasing with len(values)+1 entries")
            if abs(e[0]) > 1e-12 or abs(e[-1] - 1.0) > 1e-12:
                raise ValueError("cells must partition [0, 1]")
            object.__setattr__(self, "edges", e)

    @classmethod
    def constant(cls, value, cells=1):
        return cls(np.full(cells, float(value)))

    @classmethod
    def from_function(cls, f, cells):
        """Cell averages by midpoint sampling of a smooth density."""
        edges = np.linspace(0.0, 1.0, cells + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        return cls(np.asarray(f(mid), dtype=float), edges)

    @property
    def cells(self):
        return self.values.size

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def mass(self):
        return float(np.sum(self.values * self.widths))
