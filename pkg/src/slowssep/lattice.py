"""Exact continuous-time simulation of the exclusion process with slow
boundary reservoirs.

Interior sites x = 1, ..., N-1 carry at most one particle.  Neighbouring
occupations swap at rate N^2 (diffusive clock) or N^3 (accelerated
clock) per unequal bond; the boundary sites flip against reservoirs
with parameters alpha (left) and beta (right), at speed factor 1
(diffusive) or N (accelerated).  An optional control G(t) multiplies
boundary insertion rates by e^{G} and removal rates by e^{-G}; the
corresponding exponential-martingale log-weight is accumulated so
tilted samples can be reweighted to the untilted law.

The simulator in this module is a plain-Python reference used by the
unit tests and for small systems; the compiled kernels in
``slowssep.ensemble`` sample the identical chain for heavy replica
work.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .paths import ControlPath


class TimeScale(Enum):
    DIFFUSIVE = "diffusive"      # N^2 bulk, O(1) boundary
    ACCELERATED = "accelerated"  # N^3 bulk, N boundary


class EventKind(Enum):
    SWAP = "swap"
    FLIP_LEFT = "flip_left"
    FLIP_RIGHT = "flip_right"


@dataclass(frozen=True)
class SimParams:
    N: int
    alpha: float
    beta: float
    time_scale: TimeScale = TimeScale.ACCELERATED
    horizon: float = 1.0
    tilt: ControlPath | None = None
    seed: int = 0

    def __post_init__(self):
        if self.N < 3:
            raise ValueError("need N >= 3 so that both boundary sites exist")
        if not (0.0 < self.alpha < 1.0 and 0.0 < self.beta < 1.0):
            raise ValueError("reservoir parameters must lie in (0, 1)")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if self.tilt is not None and not self.tilt.covers(0.0, self.horizon):
            raise ValueError("tilt control must cover [0, horizon]")

    @property
    def gamma(self):
        return (self.alpha + self.beta) / 2.0

    @property
    def bulk_rate(self):
        n = self.N
        return float(n * n * n if self.time_scale is TimeScale.ACCELERATED
                     else n * n)

    @property
    def boundary_factor(self):
        return float(self.N if self.time_scale is TimeScale.ACCELERATED
                     else 1)

    @property
    def sites(self):
        return self.N - 1


def validate_configuration(occ, params):
    occ = np.asarray(occ, dtype=np.uint8)
    if occ.shape != (params.sites,):
        raise ValueError(f"configuration must have {params.sites} sites")
    if np.any(occ > 1):
        raise ValueError("occupation numbers must be 0 or 1")
    return occ


@dataclass(frozen=True)
class EventRecord:
    time: float
    kind: EventKind
    site: int                      # left site of the swapped bond, or the flipped site
    log_weight_increment: float = 0.0


@dataclass(frozen=True)
class RateTable:
    bond_rates: np.ndarray         # per-bond swap rate, bonds x = 1..N-2
    left: float
    right: float

    @property
    def total(self):
        return float(self.bond_rates.sum() + self.left + self.right)


@dataclass
class Trajectory:
    params: SimParams
    initial: np.ndarray
    events: list = field(default_factory=list)
    final: np.ndarray | None = None
    log_weight: float = 0.0
    observed: list = field(default_factory=list)   # (time, configuration copy)


def transition_rates(config, params, t=0.0):
    """Rate table of the generator at configuration ``config`` and time t."""
    occ = validate_configuration(config, params)
    if t < -1e-12 or t > params.horizon + 1e-12:
        raise ValueError("time outside [0, horizon]")
    s = params.bulk_rate
    b = params.boundary_factor
    bond_rates = s * (occ[:-1] != occ[1:]).astype(float)
    if params.tilt is not None:
        g = float(params.tilt(t))
    else:
        g = 0.0
    eg, emg = math.exp(g), math.exp(-g)
    left = b * (params.alpha * eg * (1 - occ[0]) +
                (1 - params.alpha) * emg * occ[0])
    right = b * (params.beta * eg * (1 - occ[-1]) +
                 (1 - params.beta) * emg * occ[-1])
    return RateTable(bond_rates, float(left), float(right))


def _int_exp_pl(G, t0, t1, sign):
    """Exact integral of exp(sign*G(s)) over [t0, t1], G piecewise linear."""
    if t1 <= t0:
        return 0.0
    knots = G.t[(G.t > t0) & (G.t < t1)]
    ts = np.concatenate(([t0], knots, [t1]))
    ga = sign * G(ts[:-1])
    gb = sign * G(ts[1:])
    dt = np.diff(ts)
    slope = gb - ga
    flat = np.abs(slope) < 1e-14
    out = np.where(flat,
                   np.exp(0.5 * (ga + gb)) * dt,
                   (np.exp(gb) - np.exp(ga)) * dt / np.where(flat, 1.0, slope))
    return float(out.sum())


def simulate(params, initial, observer=None, observer_times=None):
    """Sample one trajectory of the chain; exact next-event scheme.

    The observer callback, when given, is invoked as
    ``observer(t, configuration)`` at each requested grid time with the
    right-continuous state.  Returns a Trajectory whose ``log_weight``
    is log dP/dP^G along the realized path (0 when untilted).
    """
    occ = validate_configuration(initial, params).copy()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(params.seed)))
    T = params.horizon
    tilt = params.tilt
    tilted = tilt is not None and not tilt.is_zero()
    G = tilt if tilted else ControlPath.zero(T)

    grid = np.asarray(observer_times, dtype=float) if observer_times is not None \
        else np.empty(0)
    gi = 0
    traj = Trajectory(params=params, initial=occ.copy())

    def emit(up_to, inclusive=True):
        # right-continuous sampling: a grid time equal to an event time
        # sees the post-event state
        nonlocal gi
        while gi < grid.size and (grid[gi] <= up_to if inclusive
                                  else grid[gi] < up_to):
            snap = occ.copy()
            traj.observed.append((float(grid[gi]), snap))
            if observer is not None:
                observer(float(grid[gi]), snap)
            gi += 1

    alpha, beta = params.alpha, params.beta
    b = params.boundary_factor
    nsites = params.sites
    logw_jumps = 0.0
    wint = 0.0
    t_coeff = 0.0

    def coeffs():
        c_ins = alpha * (1 - occ[0]) + beta * (1 - occ[-1])
        c_rem = (1 - alpha) * occ[0] + (1 - beta) * occ[-1]
        return c_ins, c_rem

    c_ins, c_rem = coeffs()

    def flush(up_to):
        # integrate the compensator over [t_coeff, up_to] with the current
        # (still valid) coefficients; call before mutating a boundary site
        nonlocal wint, t_coeff
        if tilted:
            dt = up_to - t_coeff
            wint += c_ins * (_int_exp_pl(G, t_coeff, up_to, 1.0) - dt)
            wint += c_rem * (_int_exp_pl(G, t_coeff, up_to, -1.0) - dt)
        t_coeff = up_to

    # constant thinning bounds for the boundary channels make the scheme
    # exact for time-dependent tilts
    if tilted:
        emax = math.exp(float(np.max(G.values)))
        eminv = math.exp(-float(np.min(G.values)))
        bl = b * max(alpha * emax, (1 - alpha) * eminv)
        br = b * max(beta * emax, (1 - beta) * eminv)
    else:
        bl = b * max(alpha, 1 - alpha)
        br = b * max(beta, 1 - beta)

    s = params.bulk_rate
    emit(0.0)
    t = 0.0
    while True:
        active = np.flatnonzero(occ[:-1] != occ[1:])
        total = s * active.size + bl + br
        dt = rng.exponential(1.0 / total)
        if t + dt > T:
            emit(T)
            break
        t = t + dt
        emit(t, inclusive=False)
        u = rng.random() * total
        if u < s * active.size:
            x = int(active[int(u / s)])
            touches_boundary = x == 0 or x == nsites - 2
            if touches_boundary:
                flush(t)
            occ[x], occ[x + 1] = occ[x + 1], occ[x]
            if touches_boundary:
                c_ins, c_rem = coeffs()
            traj.events.append(EventRecord(t, EventKind.SWAP, x + 1))
        else:
            left = u < s * active.size + bl
            site = 0 if left else nsites - 1
            r = alpha if left else beta
            bound = bl if left else br
            gt = float(G(t)) if tilted else 0.0
            actual = (b * (1 - r) * math.exp(-gt) if occ[site]
                      else b * r * math.exp(gt))
            if rng.random() * bound > actual:
                emit(t)
                continue
            flush(t)
            if occ[site]:
                occ[site] = 0
                inc = gt
            else:
                occ[site] = 1
                inc = -gt
            c_ins, c_rem = coeffs()
            logw_jumps += inc
            kind = EventKind.FLIP_LEFT if left else EventKind.FLIP_RIGHT
            traj.events.append(EventRecord(t, kind, site + 1, inc))
        emit(t)

    flush(T)
    traj.final = occ.copy()
    traj.log_weight = logw_jumps + b * wint if tilted else 0.0
    return traj


def change_of_measure_log_weight(trajectory, G, params=None):
    """log dP/dP^G for a path realized under the tilt G.

    Recomputed from the event log by exact piecewise integration; for a
    trajectory produced by :func:`simulate` with the same G this equals
    ``trajectory.log_weight`` up to rounding.  Reweighting tilted
    samples by exp(result) gives unbiased untilted expectations.
    """
    params = params or trajectory.params
    T = params.horizon
    if not G.covers(0.0, T):
        raise ValueError("control grid must cover [0, horizon]")
    if G.is_zero():
        return 0.0
    alpha, beta = params.alpha, params.beta
    occ = trajectory.initial.copy()
    n = params.N

    # boundary form of the exponent: N [ m_T G_T - m_0 G_0
    #   - int dG m - (b/N) int sum_x r_x(1-eta)(e^G - 1) + (1-r_x) eta (e^-G - 1) ]
    # The compensator coefficients change whenever a boundary site flips
    # OR a swap on the first/last bond moves a particle across it, so the
    # integral is broken at every such event.
    m = occ.sum() / n
    m0 = m
    int_dg_m = 0.0
    wint = 0.0
    t_prev = 0.0
    nsites = params.sites

    def advance(up_to):
        nonlocal wint, int_dg_m, t_prev
        dt = up_to - t_prev
        c_ins = alpha * (1 - occ[0]) + beta * (1 - occ[-1])
        c_rem = (1 - alpha) * occ[0] + (1 - beta) * occ[-1]
        wint += c_ins * (_int_exp_pl(G, t_prev, up_to, 1.0) - dt)
        wint += c_rem * (_int_exp_pl(G, t_prev, up_to, -1.0) - dt)
        int_dg_m += m * (float(G(up_to)) - float(G(t_prev)))
        t_prev = up_to

    for ev in trajectory.events:
        if ev.kind is EventKind.SWAP:
            x = ev.site - 1
            if x == 0 or x == nsites - 2:
                advance(ev.time)
            occ[x], occ[x + 1] = occ[x + 1], occ[x]
            continue
        advance(ev.time)
        site = ev.site - 1
        occ[site] = 1 - occ[site]
        m = occ.sum() / n
    advance(T)

    b = params.boundary_factor
    return -(n * (m * float(G(T)) - m0 * float(G(0.0)) - int_dg_m)
             - b * wint)
