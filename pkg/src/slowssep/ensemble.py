"""Batched replica drivers around the compiled kernels.

Each replica owns a deterministic RNG substream derived from
(seed, replica index), so ensembles are bit-reproducible regardless of
batch size or thread count.  Untilted runs on lattices with at most 64
interior sites route to the bitboard uniformization kernel; everything
else (tilts, large lattices, profile snapshots) uses the array-based
next-event kernel.  Both sample the same chain exactly, so the routing
only affects speed.

The environment variable SLOWSSEP_THREADS caps the number of worker
threads fanning replicas out (the kernels release the GIL); the default
is 1.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._kernels import _run_bitboard, _run_gillespie

_ZGRID = np.array([0.0, 1.0])
_ZVALS = np.zeros(2)


def thread_count():
    """Worker threads for replica fan-out, capped by SLOWSSEP_THREADS."""
    raw = os.environ.get("SLOWSSEP_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"SLOWSSEP_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ValueError("SLOWSSEP_THREADS must be >= 1")
    return n


def replica_streams(seed, replica):
    """(kernel seed, numpy Generator) for one replica; stable in both args."""
    ss = np.random.SeedSequence([np.uint32(seed & 0xFFFFFFFF), seed >> 32,
                                 replica])
    kid, gen = ss.spawn(2)
    kernel_seed = np.uint64(kid.generate_state(1, np.uint64)[0])
    return kernel_seed, np.random.Generator(np.random.PCG64(gen))


def draw_initial(initial, nsites, rng):
    """Materialize an initial configuration.

    ``initial`` is an explicit 0/1 array (shared by all replicas), the
    string ``"empty"`` or ``"full"``, or ``("product", density)`` for an
    i.i.d. Bernoulli profile drawn per replica.
    """
    if isinstance(initial, str):
        if initial == "empty":
            return np.zeros(nsites, dtype=np.uint8)
        if initial == "full":
            return np.ones(nsites, dtype=np.uint8)
        raise ValueError(f"unknown initial condition {initial!r}")
    if isinstance(initial, tuple):
        kind, dens = initial
        if kind != "product" or not 0.0 <= dens <= 1.0:
            raise ValueError(f"unknown initial condition {initial!r}")
        return (rng.random(nsites) < dens).astype(np.uint8)
    occ = np.asarray(initial, dtype=np.uint8)
    if occ.shape != (nsites,) or np.any(occ > 1):
        raise ValueError("initial configuration must be 0/1 with N-1 sites")
    return occ.copy()


@dataclass
class MassEnsemble:
    """Replica-resolved mass observations of one experiment."""

    grid: np.ndarray
    masses: np.ndarray        # (replicas, len(grid)), values of m_hat
    final_count: np.ndarray   # particle number at the horizon
    sup_count: np.ndarray     # running max of the particle number
    log_weights: np.ndarray   # log dP/dP^G per replica (0 when untilted)
    kernel: str

    @property
    def replicas(self):
        return self.masses.shape[0]

    def mean_mass(self):
        return self.masses.mean(axis=0)

    def stderr_mass(self):
        return self.masses.std(axis=0, ddof=1) / np.sqrt(self.replicas)


def _wants_bitboard(params):
    untilted = params.tilt is None or params.tilt.is_zero()
    return untilted and params.sites <= 64


def run_mass_ensemble(params, initial, replicas, grid):
    """Sample ``replicas`` independent trajectories, recording the mass
    on ``grid`` plus endpoint and running-max particle counts."""
    if replicas < 1:
        raise ValueError("need at least one replica")
    grid = np.asarray(grid, dtype=float)
    if grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("observation grid must be increasing")
    if grid[0] < 0 or grid[-1] > params.horizon + 1e-12:
        raise ValueError("observation grid must lie inside [0, horizon]")

    masses = np.empty((replicas, grid.size))
    final_count = np.empty(replicas, dtype=np.int64)
    sup_count = np.empty(replicas, dtype=np.int64)
    log_weights = np.zeros(replicas)
    use_bitboard = _wants_bitboard(params)

    if use_bitboard:
        worker = _bitboard_range
        kernel = "bitboard"
    else:
        worker = _gillespie_range
        kernel = "gillespie"

    nthreads = thread_count()
    if nthreads == 1 or replicas < 2 * nthreads:
        worker(params, initial, grid, 0, replicas,
               masses, final_count, sup_count, log_weights)
    else:
        bounds = np.linspace(0, replicas, nthreads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            futs = [pool.submit(worker, params, initial, grid, lo, hi,
                                masses, final_count, sup_count, log_weights)
                    for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
            for f in futs:
                f.result()
    return MassEnsemble(grid, masses, final_count, sup_count,
                        log_weights, kernel)


def _bitboard_range(params, initial, grid, lo, hi,
                    masses, final_count, sup_count, log_weights):
    nsites = params.sites
    T = params.horizon
    alpha, beta = params.alpha, params.beta
    b = params.boundary_factor
    swap_total = params.bulk_rate * (nsites - 1)
    # constant thinning bounds; the boundary speed factor cancels in the
    # acceptance probabilities
    cl = max(alpha, 1.0 - alpha)
    cr = max(beta, 1.0 - beta)
    rate_l, rate_r = b * cl, b * cr
    p_ins_l, p_rem_l = alpha / cl, (1.0 - alpha) / cl
    p_ins_r, p_rem_r = beta / cr, (1.0 - beta) / cr

    for r in range(lo, hi):
        kseed, rng = replica_streams(params.seed, r)
        occ = draw_initial(initial, nsites, rng)
        word = np.uint64(0)
        for x in range(nsites):
            if occ[x]:
                word |= np.uint64(1) << np.uint64(x)
        tl = rng.uniform(0.0, T, rng.poisson(rate_l * T))
        tr = rng.uniform(0.0, T, rng.poisson(rate_r * T))
        # stable sort keeps grid records after same-time proposals, so
        # grid samples see the right-continuous state
        times = np.concatenate([tl, tr, grid])
        kinds = np.concatenate([np.zeros(tl.size, np.int8),
                                np.ones(tr.size, np.int8),
                                np.full(grid.size, 2, np.int8)])
        order = np.argsort(times, kind="stable")
        times = times[order]
        kinds = kinds[order]
        win = rng.poisson(swap_total * np.diff(times, prepend=0.0))
        gm = masses[r]
        _, k, kmax = _run_bitboard(word, int(occ.sum()), nsites,
                                   float(params.N), times, kinds,
                                   win.astype(np.int64),
                                   p_ins_l, p_rem_l, p_ins_r, p_rem_r,
                                   kseed, gm)
        final_count[r] = k
        sup_count[r] = kmax


def _gillespie_range(params, initial, grid, lo, hi,
                     masses, final_count, sup_count, log_weights,
                     profile_sum=None):
    nsites = params.sites
    tilt = params.tilt
    tilted = tilt is not None and not tilt.is_zero()
    tg = tilt.t if tilted else _ZGRID
    gv = tilt.values if tilted else _ZVALS
    take_snaps = profile_sum is not None
    snaps = np.zeros((grid.size if take_snaps else 1,
                      nsites if take_snaps else 1), dtype=np.uint8)
    for r in range(lo, hi):
        kseed, rng = replica_streams(params.seed, r)
        occ = draw_initial(initial, nsites, rng)
        gm = masses[r]
        k, logw = _run_gillespie(occ, float(params.N), params.alpha,
                                 params.beta, params.bulk_rate,
                                 params.boundary_factor, params.horizon,
                                 grid, tg, gv, tilted, kseed,
                                 gm, snaps, take_snaps)
        final_count[r] = k
        # the array kernel does not track the running max; use the grid
        sup_count[r] = int(round(gm.max() * params.N))
        log_weights[r] = logw
        if take_snaps:
            profile_sum += snaps


@dataclass
class ProfileEnsemble:
    grid: np.ndarray
    mean_profile: np.ndarray  # (len(grid), N-1) replica-mean occupation
    masses: np.ndarray
    replicas: int


def run_profile_ensemble(params, initial, replicas, grid):
    """Replica-mean site occupation profile on an observation grid."""
    grid = np.asarray(grid, dtype=float)
    masses = np.empty((replicas, grid.size))
    final_count = np.empty(replicas, dtype=np.int64)
    sup_count = np.empty(replicas, dtype=np.int64)
    log_weights = np.zeros(replicas)

    nthreads = thread_count()
    if nthreads == 1 or replicas < 2 * nthreads:
        sums = [np.zeros((grid.size, params.sites))]
        _gillespie_range(params, initial, grid, 0, replicas,
                         masses, final_count, sup_count, log_weights,
                         profile_sum=sums[0])
    else:
        bounds = np.linspace(0, replicas, nthreads + 1).astype(int)
        sums = [np.zeros((grid.size, params.sites))
                for _ in range(nthreads)]
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            futs = [pool.submit(_gillespie_range, params, initial, grid,
                                lo, hi, masses, final_count, sup_count,
                                log_weights, s)
                    for (lo, hi), s in zip(zip(bounds[:-1], bounds[1:]), sums)
                    if hi > lo]
            for f in futs:
                f.result()
    mean_profile = sum(sums) / replicas
    return ProfileEnsemble(grid, mean_profile, masses, replicas)
