"""Verification harnesses tying the particle system to the macroscopic
theory: hydrodynamic convergence of the mass and the profile, exact
small-lattice stationary analysis, and rare-event probability
estimation (naive and importance-sampled) against the large-deviations
rates.

Every experiment returns an ExperimentResult carrying uniform CSV rows
(experiment, N, t_or_m, estimate, ci_lo, ci_hi, reference, seed) and a
JSON-serializable summary.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import __version__
from .ensemble import run_mass_ensemble, run_profile_ensemble
from .lattice import SimParams, TimeScale
from .macroscopic import heat_neumann, mass_ode, tilted_mass_ode
from .paths import ControlPath, DensityProfile
from .ratefunc import entropy_S, quasi_potential_V

CSV_COLUMNS = ("experiment", "N", "t_or_m", "estimate",
               "ci_lo", "ci_hi", "reference", "seed")

SUMMARY_SCHEMA_VERSION = 1

_Z95 = 1.959963984540054


@dataclass
class ExperimentResult:
    name: str
    rows: list                    # tuples matching CSV_COLUMNS
    summary: dict
    warnings: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in self.rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")

    def summary_payload(self, config=None):
        payload = {"schema_version": SUMMARY_SCHEMA_VERSION,
                   "library_version": __version__,
                   "experiment": self.name,
                   "summary": self.summary,
                   "warnings": self.warnings}
        if config is not None:
            payload["config"] = config
        return payload


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _mean_ci(samples):
    m = float(np.mean(samples))
    if len(samples) < 2:
        return m, m, m
    se = float(np.std(samples, ddof=1) / math.sqrt(len(samples)))
    return m, m - _Z95 * se, m + _Z95 * se


def wilson_ci(hits, n):
    """95% Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    z2 = _Z95 * _Z95
    p = hits / n
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = _Z95 * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    lo = 0.0 if hits == 0 else max(0.0, center - half)
    hi = 1.0 if hits == n else min(1.0, center + half)
    return lo, hi


# ---------------------------------------------------------------------------
# exact stationary analysis
# ---------------------------------------------------------------------------

@dataclass
class StationaryDistribution:
    """Exact stationary law over the 2^(N-1) configurations."""

    N: int
    probs: np.ndarray
    residual: float

    @property
    def sites(self):
        return self.N - 1

    def mass_marginal(self):
        """Probability vector over particle counts k = 0..N-1."""
        n = self.sites
        states = np.arange(1 << n, dtype=np.int64)
        pop = np.zeros(1 << n, dtype=np.int64)
        for bit in range(n):
            pop += (states >> bit) & 1
        return np.bincount(pop, weights=self.probs, minlength=self.N)

    def site_means(self):
        n = self.sites
        states = np.arange(1 << n, dtype=np.int64)
        return np.array([float(self.probs @ ((states >> x) & 1))
                         for x in range(n)])


def _build_generator(N, alpha, beta):
    """Sparse generator over bit-coded configurations.

    Scaled by the bulk rate (swaps at rate 1 per unequal bond, boundary
    flips at rate 1/N^2): the stationary vector is scale-invariant and
    both time scales share it, since the accelerated generator is N
    times the diffusive one.
    """
    n = N - 1
    nstates = 1 << n
    states = np.arange(nstates, dtype=np.int64)
    b = 1.0 / (N * N)

    rows, cols, data = [], [], []
    for x in range(n - 1):
        differs = ((states >> x) ^ (states >> (x + 1))) & 1 == 1
        src = states[differs]
        rows.append(src)
        cols.append(src ^ (1 << x) ^ (1 << (x + 1)))
        data.append(np.ones(src.size))
    for site, r in ((0, alpha), (n - 1, beta)):
        bit = 1 << site
        occ = (states >> site) & 1
        rows.append(states)
        cols.append(states ^ bit)
        data.append(np.where(occ == 1, b * (1.0 - r), b * r))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.concatenate(data)
    Q = sp.coo_matrix((data, (rows, cols)), shape=(nstates, nstates)).tocsr()
    Q = Q - sp.diags(np.asarray(Q.sum(axis=1)).ravel())
    return Q.tocsr()


def exact_stationary(N, alpha, beta):
    """Exact stationary distribution via a sparse direct solve.

    The balance equations mu Q = 0 are solved with one equation replaced
    by the normalization sum(mu) = 1; the dropped equation is recovered
    and checked through the reported residual ||mu Q||_inf.
    """
    if not (0.0 < alpha < 1.0 and 0.0 < beta < 1.0):
        raise ValueError("reservoir parameters must lie in (0, 1)")
    if N - 1 > 20:
        raise ValueError("state space 2^(N-1) too large: need N-1 <= 20")
    Q = _build_generator(N, alpha, beta)
    nstates = Q.shape[0]
    rhs = np.zeros(nstates)
    rhs[-1] = 1.0
    if nstates <= 1 << 12:
        A = Q.T.tolil()
        A[nstates - 1, :] = 1.0
        mu = spla.spsolve(A.tocsc(), rhs)
    else:
        # direct LU fills in badly on the hypercube-like state graph;
        # use incomplete-LU-preconditioned GMRES on the rank-one
        # bordered system (A + e 1^T) mu = e, which pins sum(mu) = 1
        A = Q.T.tocsc()
        ilu = spla.spilu(A, drop_tol=1e-4, fill_factor=10)
        op = spla.LinearOperator(
            (nstates, nstates), matvec=lambda v: A @ v + rhs * v.sum())
        mu, info = spla.gmres(op, rhs, rtol=1e-14, atol=1e-14,
                              restart=100, maxiter=50,
                              M=spla.LinearOperator((nstates, nstates),
                                                    ilu.solve))
        if info != 0:
            raise ArithmeticError("stationary solve did not converge")
    mu = np.maximum(mu, 0.0)
    mu /= mu.sum()
    residual = float(np.max(np.abs(mu @ Q)))
    if residual > 1e-10:
        raise ArithmeticError(f"stationary residual {residual:.3e} too large")
    return StationaryDistribution(N=N, probs=mu, residual=residual)


def static_rate_estimate(dists, m):
    """Finite-size static rates -(1/N) log mu_ss(m_hat near m).

    The mass window {k : |k/N - m| <= 1/(2N)} holds at most one
    attainable count.  Returns the per-N sequence, a 1/N-extrapolated
    limit, and the entropy reference.
    """
    if len(dists) < 3:
        raise ValueError("need at least three lattice sizes")
    gammas = set()
    rates = {}
    for d in dists:
        k = int(round(m * d.N))
        if abs(k / d.N - m) > 0.5 / d.N + 1e-12:
            raise ValueError(f"no attainable mass within 1/(2N) of {m} at N={d.N}")
        p = float(d.mass_marginal()[k])
        if p <= 0.0:
            raise ValueError(f"empty probability window at N={d.N}")
        rates[d.N] = -math.log(p) / d.N
    ns = np.array(sorted(rates), dtype=float)
    rs = np.array([rates[n] for n in ns])
    # rate_N ~ rate_inf + a log(N)/N + b/N: the log term carries the
    # sqrt(N) prefactor of the count marginal
    A = np.vstack([np.ones_like(ns), np.log(ns) / ns, 1.0 / ns]).T
    coef, *_ = np.linalg.lstsq(A, rs, rcond=None)
    return {"N": ns.astype(int).tolist(), "rate": rs.tolist(),
            "extrapolated": float(coef[0]),
            "log_coeff": float(coef[1]), "inv_coeff": float(coef[2])}


# ---------------------------------------------------------------------------
# hydrodynamics of the mass and of the profile
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative description of one verification run."""

    which: str
    params: SimParams
    replicas: int = 100
    grid: np.ndarray | None = None
    initial: object = "empty"
    m_star: float | None = None        # rare-event threshold
    sup_mode: bool = False             # running-sup event instead of endpoint
    cells: int = 16                    # profile coarse-graining

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.m_star is not None and not 0.0 <= self.m_star <= 1.0:
            raise ValueError("event threshold must lie in [0, 1]")


def _default_grid(spec, points=31):
    if spec.grid is not None:
        return np.asarray(spec.grid, dtype=float)
    return np.linspace(0.0, spec.params.horizon, points)


def _initial_mass(spec):
    initial = spec.initial
    if isinstance(initial, str):
        return 0.0 if initial == "empty" else (spec.params.sites / spec.params.N)
    if isinstance(initial, tuple):
        return float(initial[1])
    occ = np.asarray(initial)
    return float(occ.sum()) / spec.params.N


def hydro_mass_experiment(spec):
    """Replica mean of the mass against the relaxation ODE."""
    p = spec.params
    if p.time_scale is not TimeScale.ACCELERATED:
        raise ValueError("mass hydrodynamics lives on the accelerated scale")
    grid = _default_grid(spec)
    ens = run_mass_ensemble(p, spec.initial, spec.replicas, grid)
    ref = mass_ode(_initial_mass(spec), p.gamma, grid)
    mean = ens.mean_mass()
    se = ens.stderr_mass()
    rows = [("hydro-mass", p.N, float(t), float(mn),
             float(mn - _Z95 * s), float(mn + _Z95 * s), float(r), p.seed)
            for t, mn, s, r in zip(grid, mean, se, np.atleast_1d(ref))]
    disc = float(np.max(np.abs(mean - ref)))
    summary = {"N": p.N, "replicas": spec.replicas,
               "sup_discrepancy": disc,
               "max_stderr": float(se.max()), "kernel": ens.kernel}
    return ExperimentResult("hydro-mass", rows, summary)


def tilted_hydro_experiment(spec):
    """Replica mean of the mass under a boundary tilt against the
    controlled ODE."""
    p = spec.params
    if p.tilt is None:
        raise ValueError("tilted hydrodynamics needs a control")
    grid = _default_grid(spec)
    ens = run_mass_ensemble(p, spec.initial, spec.replicas, grid)
    sol = tilted_mass_ode(_initial_mass(spec), p.gamma, p.tilt, grid)
    mean = ens.mean_mass()
    se = ens.stderr_mass()
    rows = [("tilted-hydro", p.N, float(t), float(mn),
             float(mn - _Z95 * s), float(mn + _Z95 * s), float(r), p.seed)
            for t, mn, s, r in zip(grid, mean, se, sol.values)]
    summary = {"N": p.N, "replicas": spec.replicas,
               "endpoint_mean": float(mean[-1]),
               "endpoint_reference": float(sol.values[-1]),
               "endpoint_stderr": float(se[-1]),
               "sup_discrepancy": float(np.max(np.abs(mean - sol.values)))}
    return ExperimentResult("tilted-hydro", rows, summary)


def hydro_profile_experiment(spec):
    """Coarse-grained occupation profile on the diffusive scale against
    the Neumann heat equation started from the same initial profile."""
    p = spec.params
    if p.time_scale is not TimeScale.DIFFUSIVE:
        raise ValueError("profile hydrodynamics lives on the diffusive scale")
    grid = _default_grid(spec, points=5)
    ens = run_profile_ensemble(p, spec.initial, spec.replicas, grid)

    # reference: heat flow of the block-averaged initial profile
    occ0 = np.asarray(spec.initial, dtype=float) if not isinstance(spec.initial, str) \
        else (np.zeros(p.sites) if spec.initial == "empty" else np.ones(p.sites))
    cells = spec.cells
    prof0 = _block_average(occ0, cells)
    pde = heat_neumann(DensityProfile(prof0), grid[-1],
                       dt=grid[-1] / 4000.0, store_every=1)

    # CSV rows carry the per-time sup-over-cells discrepancy (one number
    # per snapshot); the full profiles live in the JSON summary
    rows = []
    profiles = {}
    se = math.sqrt(0.25 / (spec.replicas * max(1, p.sites // cells)))
    sup_disc = 0.0
    for i, t in enumerate(grid):
        sim_cells = _block_average(ens.mean_profile[i], cells)
        j = int(np.argmin(np.abs(pde.t - t)))
        ref_cells = pde.values[j]
        disc = float(np.max(np.abs(sim_cells - ref_cells)))
        sup_disc = max(sup_disc, disc)
        rows.append(("hydro-profile", p.N, float(t), disc,
                     max(0.0, disc - _Z95 * se), disc + _Z95 * se,
                     0.0, p.seed))
        profiles[f"{t:.6g}"] = {"simulated": sim_cells.tolist(),
                                "reference": ref_cells.tolist()}
    summary = {"N": p.N, "replicas": spec.replicas, "cells": cells,
               "sup_cell_discrepancy": sup_disc,
               "cell_stderr": se, "profiles": profiles}
    return ExperimentResult("hydro-profile", rows, summary)


def _block_average(values, cells):
    bounds = np.round(np.linspace(0, len(values), cells + 1)).astype(int)
    return np.array([np.mean(values[a:b]) for a, b in zip(bounds[:-1], bounds[1:])])


def stationary_mc_experiment(spec):
    """Monte Carlo sample of the stationary mass: run each replica past
    several relaxation times and record the endpoint mass."""
    p = spec.params
    grid = np.array([p.horizon])
    ens = run_mass_ensemble(p, spec.initial, spec.replicas, grid)
    samples = ens.masses[:, -1]
    mean, lo, hi = _mean_ci(samples)
    rows = [("stationary-mc", p.N, float(p.horizon), mean, lo, hi,
             p.gamma, p.seed)]
    summary = {"N": p.N, "replicas": spec.replicas, "mean_mass": mean,
               "ci": [lo, hi], "reference_gamma": p.gamma,
               "count_histogram": np.bincount(
                   ens.final_count, minlength=p.N).tolist()}
    warnings = []
    if p.horizon < 2.0:
        warnings.append("horizon shorter than ~4 relaxation times; "
                        "endpoint sample may not be stationary")
    return ExperimentResult("stationary-mc", rows, summary, warnings)


# ---------------------------------------------------------------------------
# rare events
# ---------------------------------------------------------------------------

def _event_hits(ens, spec, N):
    threshold = spec.m_star * N - 1e-9
    if spec.sup_mode:
        return ens.sup_count >= threshold
    return ens.final_count >= threshold


def rare_event_naive(spec):
    """Direct Monte Carlo estimate of P(m_hat_T >= m*).

    Reports a Wilson binomial CI and the finite-size rate
    -(1/N) log p_hat, with the quasi-potential as the asymptotic
    reference (valid once the horizon dominates the relaxation time).
    """
    p = spec.params
    if spec.m_star is None:
        raise ValueError("rare-event experiments need an event threshold")
    warnings = []
    apriori = math.exp(-p.N * float(entropy_S(spec.m_star, p.gamma))) \
        if spec.m_star > p.gamma else 1.0
    if spec.replicas * apriori < 10.0:
        warnings.append(
            f"planner: expected hits ~ {spec.replicas * apriori:.2g} < 10 "
            f"(a priori rate S(m*) = {entropy_S(spec.m_star, p.gamma):.4f}); "
            "increase replicas or use importance sampling")
    ens = run_mass_ensemble(p, spec.initial, spec.replicas,
                            np.array([p.horizon]))
    hits = int(np.sum(_event_hits(ens, spec, p.N)))
    phat = hits / spec.replicas
    lo, hi = wilson_ci(hits, spec.replicas)
    if hits == 0:
        warnings.append("zero hits: one-sided CI only")
        rate = math.inf
    else:
        rate = -math.log(phat) / p.N
    vref = quasi_potential_V(spec.m_star, p.gamma, "formula").value \
        if spec.m_star > p.gamma else 0.0
    rows = [("rare-naive", p.N, spec.m_star, phat, lo, hi,
             math.exp(-p.N * vref), p.seed)]
    summary = {"N": p.N, "replicas": spec.replicas, "hits": hits,
               "probability": phat, "ci": [lo, hi],
               "rate": rate, "reference_rate": vref,
               "sup_mode": spec.sup_mode, "kernel": ens.kernel}
    return ExperimentResult("rare-naive", rows, summary, warnings)


def rare_event_is(spec, control=None):
    """Importance-sampled estimate of P(m_hat_T >= m*) under a boundary
    tilt, reweighted by the exact change-of-measure factor.

    The estimator mean(exp(logW) 1{event}) over tilted replicas is
    unbiased; with the zero control it coincides with the naive
    estimator replica by replica.
    """
    p = spec.params
    if spec.m_star is None:
        raise ValueError("rare-event experiments need an event threshold")
    G = control if control is not None else (
        p.tilt if p.tilt is not None else ControlPath.zero(p.horizon))
    params = SimParams(p.N, p.alpha, p.beta, p.time_scale, p.horizon,
                       G, p.seed)
    warnings = []
    if not G.is_zero():
        sol = tilted_mass_ode(_initial_mass(spec), p.gamma, G,
                              np.linspace(0.0, p.horizon, 201))
        if spec.m_star > p.gamma and float(sol.values[-1]) < spec.m_star - 0.02:
            warnings.append(
                f"control drives the mass ODE to {sol.values[-1]:.3f}, "
                f"short of the target {spec.m_star}")
    ens = run_mass_ensemble(params, spec.initial, spec.replicas,
                            np.array([p.horizon]))
    hit = _event_hits(ens, spec, p.N)
    w = np.exp(ens.log_weights) * hit
    phat = float(w.mean())
    se = float(w.std(ddof=1) / math.sqrt(spec.replicas)) if spec.replicas > 1 else 0.0
    lo, hi = max(0.0, phat - _Z95 * se), phat + _Z95 * se
    nhit = int(hit.sum())
    if nhit > 0:
        wh = np.exp(ens.log_weights[hit])
        ess = float(wh.sum() ** 2 / np.sum(wh ** 2))
    else:
        ess = 0.0
        warnings.append("zero hits under the tilted law")
    if 0 < ess < 10.0:
        warnings.append(f"effective sample size {ess:.1f} < 10: "
                        "weight degeneracy, estimate unreliable")
    # variance-reduction factor versus naive at matched replica count
    var_is = float(w.var(ddof=1)) if spec.replicas > 1 else math.nan
    var_naive = phat * (1.0 - phat)
    vrf = var_naive / var_is if var_is > 0 else math.inf
    rate = -math.log(phat) / p.N if phat > 0 else math.inf
    vref = quasi_potential_V(spec.m_star, p.gamma, "formula").value \
        if spec.m_star > p.gamma else 0.0
    rows = [("rare-is", p.N, spec.m_star, phat, lo, hi,
             math.exp(-p.N * vref), p.seed)]
    summary = {"N": p.N, "replicas": spec.replicas, "hits": nhit,
               "probability": phat, "ci": [lo, hi], "rate": rate,
               "reference_rate": vref, "ess": ess,
               "variance_reduction_factor": vrf, "kernel": ens.kernel}
    return ExperimentResult("rare-is", rows, summary, warnings)
