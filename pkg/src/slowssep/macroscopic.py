"""Reference solvers for the limiting equations.

The total mass of the accelerated process follows
dm/dt = -2 (m - gamma) (closed form m(t) = gamma + (m0-gamma) e^{-2t});
under a boundary control G it follows
dm/dt = 2 gamma (1-m) e^{G} - 2 (1-gamma) m e^{-G}.
On the diffusive scale the density solves the heat equation with
Neumann (reflecting) boundary conditions; its L2 distance to the mean
decays at rate 2*pi^2 (twice the smallest nonzero Neumann eigenvalue
of -d^2/dx^2 on [0,1]).
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

LAMBDA1 = np.pi ** 2  # smallest nonzero Neumann eigenvalue on [0, 1]


class OdeMethod(Enum):
    CLOSED_FORM = "closed_form"
    RK4 = "rk4"


@dataclass(frozen=True)
class OdeSolution:
    t: np.ndarray
    values: np.ndarray
    method: OdeMethod

    def __call__(self, s):
        return np.interp(s, self.t, self.values)


@dataclass(frozen=True)
class PdeSolution:
    t: np.ndarray
    x: np.ndarray            # cell centers
    values: np.ndarray       # shape (len(t), len(x))
    widths: np.ndarray

    def mass(self):
        return self.values @ self.widths

    def l2_to_mean(self):
        dev = self.values - self.mass()[:, None]
        return np.sqrt((dev ** 2) @ self.widths)


def _check_mass_args(m0, gamma):
    if not 0.0 <= m0 <= 1.0:
        raise ValueError("initial mass must lie in [0, 1]")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")


def mass_ode(m0, gamma, t):
    """Relaxation of the total mass: gamma + (m0-gamma) e^{-2t}."""
    _check_mass_args(m0, gamma)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    out = gamma + (m0 - gamma) * np.exp(-2.0 * t)
    return float(out) if out.ndim == 0 else out


def tilted_vector_field(m, gamma, g):
    return 2.0 * gamma * (1.0 - m) * np.exp(g) \
        - 2.0 * (1.0 - gamma) * m * np.exp(-g)


def tilted_fixed_point(gamma, g):
    """Root of the constant-control vector field in [0, 1]."""
    w = gamma * np.exp(g)
    return w / (w + (1.0 - gamma) * np.exp(-g))


def tilted_mass_ode(m0, gamma, G, grid, tol=1e-8):
    """Integrate the controlled mass equation on the given grid.

    Classical RK4 with uniform substeps, halved until two successive
    refinements agree to ``tol`` in sup norm.
    """
    _check_mass_args(m0, gamma)
    grid = np.asarray(grid, dtype=float)
    if not G.covers(grid[0], grid[-1]):
        raise ValueError("control must cover the integration window")
    if not np.all(np.isfinite(G.values)):
        raise ValueError("control values must be finite")

    def sweep(nsub):
        vals = np.empty_like(grid)
        vals[0] = m0
        m = m0
        for i in range(grid.size - 1):
            h = (grid[i + 1] - grid[i]) / nsub
            t = grid[i]
            for _ in range(nsub):
                k1 = tilted_vector_field(m, gamma, G(t))
                k2 = tilted_vector_field(m + 0.5 * h * k1, gamma, G(t + 0.5 * h))
                k3 = tilted_vector_field(m + 0.5 * h * k2, gamma, G(t + 0.5 * h))
                k4 = tilted_vector_field(m + h * k3, gamma, G(t + h))
                m = m + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                t += h
            vals[i + 1] = m
        return vals

    nsub = max(1, int(np.ceil(4 * np.max(np.diff(grid)))))
    prev = sweep(nsub)
    for _ in range(20):
        nsub *= 2
        cur = sweep(nsub)
        if np.max(np.abs(cur - prev)) < tol:
            return OdeSolution(grid, np.clip(cur, 0.0, 1.0), OdeMethod.RK4)
        prev = cur
    raise RuntimeError("RK4 refinement did not reach the requested tolerance")


def heat_neumann(rho0, t_end, dt=None, store_every=1):
    """Heat equation on [0,1] with reflecting (Neumann) boundaries.

    Cell-centered second-order differences with ghost cells;
    Crank-Nicolson stepping (unconditionally stable, mass-conserving).
    """
    vals = rho0.values
    M = vals.size
    if M < 3:
        raise ValueError("mesh too coarse: need at least 3 cells")
    w = rho0.widths
    if np.max(w) - np.min(w) > 1e-12:
        raise ValueError("heat solver requires a uniform mesh")
    h = w[0]
    if dt is None:
        dt = max(t_end / 2000.0, 0.25 * h * h)
    nsteps = max(1, int(np.ceil(t_end / dt)))
    dt = t_end / nsteps

    main = np.full(M, -2.0)
    main[0] = main[-1] = -1.0          # ghost-cell reflection
    off = np.ones(M - 1)
    L = sp.diags([off, main, off], [-1, 0, 1], format="csc") / (h * h)
    eye = sp.identity(M, format="csc")
    solve = spla.factorized((eye - 0.5 * dt * L).tocsc())
    B = (eye + 0.5 * dt * L).tocsr()

    out = [vals.copy()]
    times = [0.0]
    u = vals.copy()
    for i in range(1, nsteps + 1):
        u = solve(B @ u)
        if i % store_every == 0 or i == nsteps:
            out.append(u.copy())
            times.append(i * dt)
    centers = rho0.centers
    return PdeSolution(np.array(times), centers, np.array(out), w)


def decay_check(sol):
    """Least-squares exponential rate of || rho(t) - mean ||^2.

    Returns (rate, residual): the fitted slope magnitude of
    log ||rho(t)-mean||^2 against t, and the rms fit residual.
    """
    d2 = sol.l2_to_mean() ** 2
    if np.sqrt(d2[0]) < 1e-12:
        raise ValueError("initial profile is flat: nothing to fit")
    keep = d2 > max(1e-24, d2[0] * 1e-20)
    t = sol.t[keep]
    y = np.log(d2[keep])
    if t.size < 3 or (y[0] - y[-1]) < 2.0:
        raise ValueError("solution span too short: need at least one e-fold")
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return -float(coef[0]), resid
