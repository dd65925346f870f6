"""Large-deviations calculus for the total-mass trajectories.

The dynamical cost of a mass path a on [0, T] is the supremum over
smooth controls G of the linear functional

    J(a, G) = a_T G_T - a_0 G_0 - int da/ds... (boundary form)
            = a_T G_T - a_0 G_0 - int G' a ds - int A_G(a) ds,

with A_G(a) = 2 gamma (1-a)(e^G - 1) + 2 (1-gamma) a (e^{-G} - 1).
For twice-differentiable paths bounded away from 0 and 1 the supremum
is attained at the explicit control

    H = log( (a' + sqrt(a'^2 + 16 gamma (1-gamma) a (1-a)))
             / (4 gamma (1-a)) ),

the unique solution of a' = 2 gamma (1-a) e^H - 2 (1-gamma) a e^{-H}.
The quasi-potential (cheapest cost to drive the mass from gamma to m
over any horizon) equals the entropy
S(m) = m log(m/gamma) + (1-m) log((1-m)/(1-gamma)).
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .paths import ControlPath, MassPath


class RateMethod(Enum):
    QUADRATURE = "quadrature"
    CLOSED_FORM_H = "closed_form_h"
    NUMERIC_SUP = "numeric_sup"
    APPENDIX_FORMULA = "appendix_formula"
    FORMULA = "formula"


@dataclass(frozen=True)
class RateReport:
    value: float
    method: RateMethod
    error_estimate: float | None = None
    control: ControlPath | None = None
    meta: dict = field(default_factory=dict)


def _check_gamma(gamma):
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")


def eval_A_G(a, G, gamma):
    """2 gamma (1-a)(e^G - 1) + 2 (1-gamma) a (e^{-G} - 1)."""
    _check_gamma(gamma)
    a = np.asarray(a, dtype=float)
    if np.any(a < -1e-12) or np.any(a > 1 + 1e-12):
        raise ValueError("mass argument must lie in [0, 1]")
    out = (2.0 * gamma * (1.0 - a) * np.expm1(G)
           + 2.0 * (1.0 - gamma) * a * np.expm1(-np.asarray(G, dtype=float)))
    return float(out) if out.ndim == 0 else out


def _union_grid(a, G):
    if abs(a.t[0] - G.t[0]) > 1e-9 or abs(a.t[-1] - G.t[-1]) > 1e-9:
        raise ValueError("path and control grids must span the same window")
    t = np.union1d(a.t, G.t)
    # drop near-duplicates produced by the union
    keep = np.concatenate(([True], np.diff(t) > 1e-13))
    return t[keep]


def _j_terms(t, av, gv, gamma):
    boundary = av[-1] * gv[-1] - av[0] * gv[0]
    # int G' a ds, exact for piecewise-linear a and G
    int_dg_a = float(np.sum(np.diff(gv) * 0.5 * (av[:-1] + av[1:])))
    ag = eval_A_G(av, gv, gamma)
    int_ag = float(np.trapezoid(ag, t))
    return boundary - int_dg_a - int_ag


def eval_J(a, G, gamma):
    """Quadrature of J(a, G) on the common grid refinement.

    The error estimate comes from halving the quadrature mesh of the
    nonlinear integral (the remaining terms are exact for
    piecewise-linear inputs).
    """
    _check_gamma(gamma)
    t = _union_grid(a, G)
    coarse = _j_terms(t, a(t), G(t), gamma)
    t2 = np.sort(np.concatenate([t, 0.5 * (t[:-1] + t[1:])]))
    fine = _j_terms(t2, a(t2), G(t2), gamma)
    return RateReport(value=fine, method=RateMethod.QUADRATURE,
                      error_estimate=abs(fine - coarse) / 3.0,
                      meta={"nodes": t2.size})


def optimal_control_values(a, da, gamma):
    """Pointwise maximizing control for given mass values and slopes."""
    disc = da * da + 16.0 * gamma * (1.0 - gamma) * a * (1.0 - a)
    return np.log((da + np.sqrt(disc)) / (4.0 * gamma * (1.0 - a)))


def closed_form_H(a, gamma, residual_tol=1e-10):
    """The control turning the path a into the tilted-flow solution.

    Requires the path to stay strictly inside (0, 1).  The defining
    relation a' = 2 gamma (1-a) e^H - 2 (1-gamma) a e^{-H} is verified
    at every node.
    """
    _check_gamma(gamma)
    av = a.values
    if np.min(av) <= 0.0 or np.max(av) >= 1.0:
        raise ValueError("path touches {0, 1}: optimal control is singular")
    da = a.deriv()
    hv = optimal_control_values(av, da, gamma)
    resid = np.abs(2.0 * gamma * (1.0 - av) * np.exp(hv)
                   - 2.0 * (1.0 - gamma) * av * np.exp(-hv) - da)
    worst = float(np.max(resid))
    if worst > residual_tol * max(1.0, float(np.max(np.abs(da)))):
        raise ArithmeticError(f"control residual {worst:.3e} exceeds tolerance")
    return ControlPath(a.t, hv)


def eval_I_closed(a, gamma):
    """Cost I(a) evaluated at the closed-form maximizing control."""
    H = closed_form_H(a, gamma)
    rep = eval_J(a, H, gamma)
    return RateReport(value=rep.value, method=RateMethod.CLOSED_FORM_H,
                      error_estimate=rep.error_estimate, control=H,
                      meta=rep.meta)


def _sup_node_coefficients(t, av):
    """Linear coefficients c_k of the discrete objective and trapezoid
    weights w_k; c_k / w_k is the induced finite-difference slope."""
    h = np.diff(t)
    c = np.empty_like(av)
    c[0] = (av[1] - av[0]) / 2.0
    c[-1] = (av[-1] - av[-2]) / 2.0
    c[1:-1] = (av[2:] - av[:-2]) / 2.0
    w = np.empty_like(av)
    w[0] = h[0] / 2.0
    w[-1] = h[-1] / 2.0
    w[1:-1] = (h[:-1] + h[1:]) / 2.0
    return c, w


def _discrete_objective(t, av, gv, gamma):
    return _j_terms(t, av, gv, gamma)


def sup_I_numeric(a, gamma, basis_size=None, initial_mass=None,
                  grad_tol=1e-9, max_iter=200):
    """Maximize J(a, .) over piecewise-linear controls.

    The default basis puts one hat function at every path node; the
    objective is then concave and separable across nodes, and damped
    Newton ascent converges in a couple of iterations.  A mismatch with
    ``initial_mass`` (when given) returns +inf, matching the
    conditional rate convention.
    """
    _check_gamma(gamma)
    if initial_mass is not None and abs(a.values[0] - initial_mass) > 1e-12:
        return RateReport(value=math.inf, method=RateMethod.NUMERIC_SUP,
                          meta={"reason": "initial mass mismatch"})
    t = a.t
    av = a.values
    if basis_size is not None and basis_size + 1 < t.size:
        return _sup_coarse_basis(a, gamma, basis_size, grad_tol, max_iter)

    if a.derivative is not None:
        # integrate the boundary and dG terms by parts:
        # J = int (G a' - A_G) ds, so with an analytic slope the
        # nodewise maximizer is exactly the closed-form control
        _, w = _sup_node_coefficients(t, av)
        d = a.derivative
        c = w * d
        by_parts = True
    else:
        c, w = _sup_node_coefficients(t, av)
        d = c / w
        by_parts = False
    interior = (av > 0.0) & (av < 1.0)
    if np.any(~interior & (((av <= 0.0) & (d <= 0.0)) |
                           ((av >= 1.0) & (d >= 0.0)))):
        return RateReport(value=math.inf, method=RateMethod.NUMERIC_SUP,
                          meta={"reason": "unbounded direction at the boundary"})
    g = np.where(interior, optimal_control_values(np.clip(av, 1e-300, 1.0), d, gamma), 0.0)
    # nodes at av == 0 or 1 have one-sided exponentials with explicit roots
    at0 = av <= 0.0
    at1 = av >= 1.0
    if np.any(at0):
        g[at0] = np.log(d[at0] / (2.0 * gamma))
    if np.any(at1):
        g[at1] = -np.log(-d[at1] / (2.0 * (1.0 - gamma)))

    def grad(gv):
        return c - w * (2.0 * gamma * (1.0 - av) * np.exp(gv)
                        - 2.0 * (1.0 - gamma) * av * np.exp(-gv))

    it = 0
    gr = grad(g)
    while np.max(np.abs(gr)) > grad_tol:
        if it >= max_iter:
            raise ArithmeticError(
                f"ascent stalled with gradient norm {np.max(np.abs(gr)):.3e}")
        hess = w * (2.0 * gamma * (1.0 - av) * np.exp(g)
                    + 2.0 * (1.0 - gamma) * av * np.exp(-g))
        g = g + gr / hess
        gr = grad(g)
        it += 1

    if by_parts:
        value = float(np.sum(w * (g * d - eval_A_G(av, g, gamma))))
    else:
        value = _discrete_objective(t, av, g, gamma)
    return RateReport(value=value, method=RateMethod.NUMERIC_SUP,
                      control=ControlPath(t, g),
                      meta={"iterations": it,
                            "grad_norm": float(np.max(np.abs(gr)))})


def _sup_coarse_basis(a, gamma, basis_size, grad_tol, max_iter):
    from scipy import optimize, sparse

    t = a.t
    av = a.values
    tb = np.linspace(t[0], t[-1], basis_size + 1)
    tr = np.union1d(t, tb)
    ar = a(tr)
    # interpolation matrix from basis nodes to the refined grid
    idx = np.clip(np.searchsorted(tb, tr, side="right") - 1, 0, basis_size - 1)
    lam = (tr - tb[idx]) / (tb[idx + 1] - tb[idx])
    rows = np.repeat(np.arange(tr.size), 2)
    cols = np.stack([idx, idx + 1], axis=1).ravel()
    data = np.stack([1.0 - lam, lam], axis=1).ravel()
    P = sparse.csr_matrix((data, (rows, cols)), shape=(tr.size, basis_size + 1))

    c, w = _sup_node_coefficients(tr, ar)
    lin = P.T @ c

    def neg_obj_grad(g):
        gv = P @ g
        val = _discrete_objective(tr, ar, gv, gamma)
        gr = lin - P.T @ (w * (2.0 * gamma * (1.0 - ar) * np.exp(gv)
                               - 2.0 * (1.0 - gamma) * ar * np.exp(-gv)))
        return -val, -gr

    res = optimize.minimize(neg_obj_grad, np.zeros(basis_size + 1),
                            jac=True, method="L-BFGS-B",
                            options={"maxiter": max_iter, "gtol": grad_tol,
                                     "ftol": 1e-16})
    gnorm = float(np.max(np.abs(res.jac)))
    if gnorm > max(grad_tol, 1e-7):
        raise ArithmeticError(f"coarse-basis ascent stalled (grad {gnorm:.3e})")
    return RateReport(value=-float(res.fun), method=RateMethod.NUMERIC_SUP,
                      control=ControlPath(tb, res.x),
                      meta={"iterations": int(res.nit), "grad_norm": gnorm})


def _xlogx(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def entropy_S(m, gamma):
    """m log(m/gamma) + (1-m) log((1-m)/(1-gamma)), with 0 log 0 = 0."""
    _check_gamma(gamma)
    m = np.asarray(m, dtype=float)
    if np.any(m < -1e-12) or np.any(m > 1 + 1e-12):
        raise ValueError("mass must lie in [0, 1]")
    m = np.clip(m, 0.0, 1.0)
    out = (_xlogx(m) - m * math.log(gamma)
           + _xlogx(1.0 - m) - (1.0 - m) * math.log(1.0 - gamma))
    out = np.maximum(out, 0.0)        # exact at m = gamma up to rounding
    return float(out) if out.ndim == 0 else out


def appendix_cost(m, a_T1, gamma):
    """Closed-form cost of the time-reversed relaxation from a_T1 to m.

    Along that path the optimal control is H = log((1-g) a / (g (1-a)))
    and the Lagrangian A_H vanishes identically, so the cost reduces to
    the exact line integral int_{a_T1}^{m} H(u) du:

        m lg(m) - a_T1 lg(a_T1) + log((1-m)/(1-a_T1)),

    with lg(x) = log((1-g) x / (g (1-x))).  Converges to the entropy
    S(m) as a_T1 -> gamma.
    """
    _check_gamma(gamma)
    if not (0.0 < m < 1.0 and 0.0 < a_T1 < 1.0):
        raise ValueError("arguments must lie strictly inside (0, 1)")

    def lg(x):
        return math.log((1.0 - gamma) * x / (gamma * (1.0 - x)))

    return m * lg(m) - a_T1 * lg(a_T1) + math.log((1.0 - m) / (1.0 - a_T1))


def relaxation_path(m0, gamma, times):
    """Zero-cost solution of da/dt = -2 (a - gamma), analytic slope."""
    t = np.asarray(times, dtype=float)
    vals = gamma + (m0 - gamma) * np.exp(-2.0 * t)
    return MassPath(t, vals, derivative=-2.0 * (vals - gamma))


def reversed_relaxation_path(m, gamma, T1, n=4001):
    """The relaxation path from m run backwards: ends at m at time T1."""
    t = np.linspace(0.0, T1, n)
    vals = gamma + (m - gamma) * np.exp(-2.0 * (T1 - t))
    return MassPath(t, vals, derivative=2.0 * (vals - gamma))


def anti_relaxation_control(path, gamma):
    """log((1-gamma) a / (gamma (1-a))) along a path: the optimal control
    of the reversed relaxation, with zero pointwise Lagrangian A_H."""
    av = path.values
    if np.min(av) <= 0.0 or np.max(av) >= 1.0:
        raise ValueError("path touches {0, 1}")
    return ControlPath(path.t, np.log((1.0 - gamma) * av / (gamma * (1.0 - av))))


def quasi_potential_V(m, gamma, mode="formula", n=4001):
    """Quasi-potential of the mass dynamics relative to gamma.

    ``formula`` returns the entropy S(m).  ``numeric_inf`` builds the
    near-optimal escape trajectory (a short linear bridge from gamma
    followed by the time-reversed relaxation reaching m), evaluates its
    cost at the closed-form control, and minimizes over the reversal
    horizon; the result decreases to S(m).
    """
    _check_gamma(gamma)
    if mode == "formula":
        return RateReport(value=float(entropy_S(m, gamma)),
                          method=RateMethod.FORMULA)
    if mode != "numeric_inf":
        raise ValueError(f"unknown mode {mode!r}")
    if not 0.0 < m < 1.0:
        raise ValueError("numeric mode needs m strictly inside (0, 1)")

    def cost(T1):
        a_T1 = gamma + (m - gamma) * math.exp(-2.0 * T1)
        kappa = a_T1 - gamma
        total = 0.0
        if abs(kappa) > 1e-15:
            tb = np.linspace(0.0, 1.0, n)
            bridge = MassPath(tb, gamma + kappa * tb,
                              derivative=np.full(n, kappa))
            total += eval_I_closed(bridge, gamma).value
        if abs(m - gamma) > 1e-15:
            total += eval_I_closed(
                reversed_relaxation_path(m, gamma, T1, n), gamma).value
        return total

    horizons = [0.5, 1.0, 2.0, 4.0, 6.0]
    costs = [cost(T1) for T1 in horizons]
    best = int(np.argmin(costs))
    lo = horizons[max(best - 1, 0)]
    hi = horizons[best + 1] if best + 1 < len(horizons) else horizons[-1] * 1.5
    # golden-section refinement in log-horizon
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a_, b_ = math.log(lo), math.log(hi)
    x1 = b_ - phi * (b_ - a_)
    x2 = a_ + phi * (b_ - a_)
    f1, f2 = cost(math.exp(x1)), cost(math.exp(x2))
    for _ in range(25):
        if f1 <= f2:
            b_, x2, f2 = x2, x1, f1
            x1 = b_ - phi * (b_ - a_)
            f1 = cost(math.exp(x1))
        else:
            a_, x1, f1 = x1, x2, f2
            x2 = a_ + phi * (b_ - a_)
            f2 = cost(math.exp(x2))
    value = min(min(costs), f1, f2)
    return RateReport(value=value, method=RateMethod.NUMERIC_SUP,
                      meta={"horizon": math.exp((a_ + b_) / 2.0)})


def profile_potential_W(rho, gamma):
    """Static quasi-potential of a density profile: the cell-weighted
    integral of the entropy density against gamma."""
    _check_gamma(gamma)
    vals = np.clip(rho.values, 0.0, 1.0)
    dens = (_xlogx(vals) - vals * math.log(gamma)
            + _xlogx(1.0 - vals) - (1.0 - vals) * math.log(1.0 - gamma))
    return float(np.sum(dens * rho.widths))
