"""Compiled Monte Carlo kernels for the boundary-driven exclusion process.

Two exact samplers of the same continuous-time Markov chain:

* ``_run_bitboard``: configurations packed into a single 64-bit word
  (lattices with at most 64 interior sites), bulk swaps generated by
  uniformization (candidate swaps at every bond, no-ops allowed, which
  leaves the occupation law unchanged) and boundary flips by thinning
  against a constant rate bound.  Candidate counts per window and the
  boundary proposal times are pre-generated outside the kernel, so the
  inner loop needs no transcendental calls.  Used for large-replica
  mass statistics at small N.

* ``_run_gillespie``: array-based next-event simulation with an O(1)
  active-bond list, exponential holding times and categorical event
  draws.  Supports time-dependent boundary tilts (piecewise-linear
  control, thinned against a constant bound) and accumulates the exact
  Girsanov log-weight of the change of measure.  Used for every tilted
  run and for large lattices.

Both kernels carry their own xoshiro256++ stream seeded per replica,
so results are bit-reproducible for a given (seed, replica) pair
independently of batching.
"""

import numpy as np
from numba import njit

_U64 = np.uint64
_MASK32 = _U64(0xFFFFFFFF)


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << _U64(k)) | (x >> _U64(64 - k))


@njit(cache=True)
def _seed_state(seed):
    """Expand a 64-bit seed into a xoshiro256++ state via splitmix64."""
    s = np.empty(4, dtype=np.uint64)
    z = _U64(seed)
    for i in range(4):
        z = z + _U64(0x9E3779B97F4A7C15)
        w = z
        w = (w ^ (w >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        w = (w ^ (w >> _U64(27))) * _U64(0x94D049BB133111EB)
        s[i] = w ^ (w >> _U64(31))
    return s


@njit(cache=True, inline="always")
def _next_u64(s):
    result = _rotl(s[0] + s[3], 23) + s[0]
    t = s[1] << _U64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True, inline="always")
def _next_f64(s):
    # uniform on (0, 1]; never returns 0 so -log() is always finite
    return ((_next_u64(s) >> _U64(11)) + _U64(1)) * 1.1102230246251565e-16


@njit(cache=True, inline="always")
def _randbelow(s, n):
    """Exactly uniform integer in [0, n) for n < 2**32 (Lemire rejection)."""
    un = _U64(n)
    x = _next_u64(s) >> _U64(32)
    m = x * un
    lo = m & _MASK32
    if lo < un:
        t = (_U64(0x100000000) - un) % un
        while lo < t:
            x = _next_u64(s) >> _U64(32)
            m = x * un
            lo = m & _MASK32
    return m >> _U64(32)


# ---------------------------------------------------------------------------
# bitboard uniformization kernel (untilted, N - 1 <= 64)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _run_bitboard(occ0, k0, nsites, n_lattice, special_t, special_kind,
                  win_count, p_ins_l, p_rem_l, p_ins_r, p_rem_r,
                  seed, grid_mass):
    """Advance one replica through its pre-scheduled special-event list.

    special_kind: 0 = left boundary proposal, 1 = right boundary
    proposal, 2 = record mass on the observation grid.  win_count[i]
    bulk candidate swaps (uniform bonds, no-op when the bond is flat)
    are applied before special event i; their times inside the window
    are irrelevant because only boundary flips move the mass.

    Returns (final word, final count, running max count).
    """
    st = _seed_state(seed)
    occ = _U64(occ0)
    k = k0
    kmax = k0
    nbonds = nsites - 1
    g = 0
    top = _U64(1) << _U64(nsites - 1)
    for i in range(special_t.shape[0]):
        for _ in range(win_count[i]):
            x = _randbelow(st, nbonds)
            d = ((occ >> x) ^ (occ >> (x + _U64(1)))) & _U64(1)
            occ ^= (d << x) | (d << (x + _U64(1)))
        kind = special_kind[i]
        if kind == 0:
            if occ & _U64(1):
                if _next_f64(st) <= p_rem_l:
                    occ ^= _U64(1)
                    k -= 1
            else:
                if _next_f64(st) <= p_ins_l:
                    occ ^= _U64(1)
                    k += 1
                    if k > kmax:
                        kmax = k
        elif kind == 1:
            if occ & top:
                if _next_f64(st) <= p_rem_r:
                    occ ^= top
                    k -= 1
            else:
                if _next_f64(st) <= p_ins_r:
                    occ ^= top
                    k += 1
                    if k > kmax:
                        kmax = k
        else:
            grid_mass[g] = k / n_lattice
            g += 1
    return occ, k, kmax


# ---------------------------------------------------------------------------
# array-based timed Gillespie kernel (tilt + change-of-measure weight)
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _g_at(tg, gv, seg, t):
    """Evaluate the piecewise-linear control at time t; advance segment."""
    while seg + 2 < tg.shape[0] and t > tg[seg + 1]:
        seg += 1
    t0 = tg[seg]
    t1 = tg[seg + 1]
    if t1 == t0:
        return gv[seg], seg
    w = (t - t0) / (t1 - t0)
    return gv[seg] + w * (gv[seg + 1] - gv[seg]), seg


@njit(cache=True)
def _int_exp_g(tg, gv, t0, t1, sign, seg):
    """Exact integral of exp(sign*G(s)) on [t0, t1] for piecewise-linear G."""
    total = 0.0
    a = t0
    while a < t1:
        while seg + 2 < tg.shape[0] and a >= tg[seg + 1]:
            seg += 1
        b = tg[seg + 1]
        if b > t1 or seg + 2 >= tg.shape[0]:
            b = t1
        ga, _ = _g_at(tg, gv, seg, a)
        gb, _ = _g_at(tg, gv, seg, b)
        slope = sign * (gb - ga)
        if abs(slope) < 1e-14:
            total += np.exp(sign * 0.5 * (ga + gb)) * (b - a)
        else:
            total += (np.exp(sign * gb) - np.exp(sign * ga)) * (b - a) / slope
        a = b
    return total, seg


@njit(cache=True, nogil=True)
def _run_gillespie(occ, n_lattice, alpha, beta, bulk_rate, bfac, horizon,
                   grid_t, tg, gv, tilted, seed,
                   grid_mass, snapshots, take_snapshots):
    """Exact next-event simulation of one trajectory.

    occ is modified in place (length N-1, values 0/1).  bulk_rate is the
    per-bond swap rate (N^2 or N^3); bfac the boundary speed factor
    (1 or N).  When ``tilted`` the boundary rates carry e^{+-G(t)}
    (insertion +, removal -), sampled exactly by thinning, and the
    kernel returns the log Radon-Nikodym weight of the untilted law
    with respect to the tilted one along the realized path.
    """
    st = _seed_state(seed)
    nsites = occ.shape[0]
    nbonds = nsites - 1

    act_list = np.empty(nbonds, dtype=np.int32)
    act_pos = np.full(nbonds, -1, dtype=np.int32)
    n_act = 0
    k = 0
    for x in range(nsites):
        k += occ[x]
    for x in range(nbonds):
        if occ[x] != occ[x + 1]:
            act_pos[x] = n_act
            act_list[n_act] = x
            n_act += 1

    # constant thinning bounds for the two boundary channels
    if tilted:
        gmax = gv[0]
        gmin = gv[0]
        for i in range(gv.shape[0]):
            if gv[i] > gmax:
                gmax = gv[i]
            if gv[i] < gmin:
                gmin = gv[i]
        emax = np.exp(gmax)
        eminv = np.exp(-gmin)
        bl = bfac * max(alpha * emax, (1.0 - alpha) * eminv)
        br = bfac * max(beta * emax, (1.0 - beta) * eminv)
    else:
        bl = bfac * max(alpha, 1.0 - alpha)
        br = bfac * max(beta, 1.0 - beta)

    # Girsanov weight bookkeeping: sum of +-G at accepted flips, plus the
    # compensator integral with coefficients frozen between boundary-site
    # occupancy changes.
    logw_jumps = 0.0
    wint = 0.0
    c_ins = alpha * (1.0 - occ[0]) + beta * (1.0 - occ[nsites - 1])
    c_rem = (1.0 - alpha) * occ[0] + (1.0 - beta) * occ[nsites - 1]
    t_coeff = 0.0
    seg_p = 0
    seg_m = 0
    seg_ev = 0

    t = 0.0
    g = 0
    ngrid = grid_t.shape[0]
    while g < ngrid and grid_t[g] <= 0.0:
        grid_mass[g] = k / n_lattice
        if take_snapshots:
            for x in range(nsites):
                snapshots[g, x] = occ[x]
        g += 1

    # NOTE: a `while True` head is miscompiled by the numba/LLVM pair in
    # this environment (the loop body's state updates go wrong); a bounded
    # counted loop generates correct code and the bound is unreachable.
    for _ in range(1 << 62):
        total = bulk_rate * n_act + bl + br
        dt = -np.log(_next_f64(st)) / total
        tn = t + dt
        if tn > horizon:
            tn = horizon
        while g < ngrid and grid_t[g] <= tn:
            grid_mass[g] = k / n_lattice
            if take_snapshots:
                for x in range(nsites):
                    snapshots[g, x] = occ[x]
            g += 1
        if t + dt > horizon:
            t = horizon
            break
        t = tn

        u = _next_f64(st) * total
        if u < bulk_rate * n_act:
            j = int(_randbelow(st, n_act))
            x = act_list[j]
            tmp = occ[x]
            occ[x] = occ[x + 1]
            occ[x + 1] = tmp
            # bond x stays active; neighbours toggle
            for y in (x - 1, x + 1):
                if 0 <= y < nbonds:
                    active = occ[y] != occ[y + 1]
                    if active and act_pos[y] < 0:
                        act_pos[y] = n_act
                        act_list[n_act] = y
                        n_act += 1
                    elif not active and act_pos[y] >= 0:
                        p = act_pos[y]
                        last = act_list[n_act - 1]
                        act_list[p] = last
                        act_pos[last] = p
                        act_pos[y] = -1
                        n_act -= 1
            if tilted and (x == 0 or x == nbonds - 1):
                ip, seg_p = _int_exp_g(tg, gv, t_coeff, t, 1.0, seg_p)
                im, seg_m = _int_exp_g(tg, gv, t_coeff, t, -1.0, seg_m)
                dt_c = t - t_coeff
                wint += c_ins * (ip - dt_c) + c_rem * (im - dt_c)
                t_coeff = t
                c_ins = alpha * (1.0 - occ[0]) + beta * (1.0 - occ[nsites - 1])
                c_rem = (1.0 - alpha) * occ[0] + (1.0 - beta) * occ[nsites - 1]
        else:
            left = u < bulk_rate * n_act + bl
            if left:
                site = 0
                r = alpha
                bound = bl
            else:
                site = nsites - 1
                r = beta
                bound = br
            if tilted:
                gt, seg_ev = _g_at(tg, gv, seg_ev, t)
            else:
                gt = 0.0
            if occ[site]:
                actual = bfac * (1.0 - r) * np.exp(-gt)
            else:
                actual = bfac * r * np.exp(gt)
            if _next_f64(st) * bound <= actual:
                if tilted:
                    ip, seg_p = _int_exp_g(tg, gv, t_coeff, t, 1.0, seg_p)
                    im, seg_m = _int_exp_g(tg, gv, t_coeff, t, -1.0, seg_m)
                    dt_c = t - t_coeff
                    wint += c_ins * (ip - dt_c) + c_rem * (im - dt_c)
                    t_coeff = t
                if occ[site]:
                    occ[site] = 0
                    k -= 1
                    logw_jumps += gt
                else:
                    occ[site] = 1
                    k += 1
                    logw_jumps -= gt
                x = 0 if site == 0 else nbonds - 1
                active = occ[x] != occ[x + 1]
                if active and act_pos[x] < 0:
                    act_pos[x] = n_act
                    act_list[n_act] = x
                    n_act += 1
                elif not active and act_pos[x] >= 0:
                    p = act_pos[x]
                    last = act_list[n_act - 1]
                    act_list[p] = last
                    act_pos[last] = p
                    act_pos[x] = -1
                    n_act -= 1
                if tilted:
                    c_ins = alpha * (1.0 - occ[0]) + beta * (1.0 - occ[nsites - 1])
                    c_rem = (1.0 - alpha) * occ[0] + (1.0 - beta) * occ[nsites - 1]

    logw = 0.0
    if tilted:
        ip, seg_p = _int_exp_g(tg, gv, t_coeff, horizon, 1.0, seg_p)
        im, seg_m = _int_exp_g(tg, gv, t_coeff, horizon, -1.0, seg_m)
        dt_c = horizon - t_coeff
        wint += c_ins * (ip - dt_c) + c_rem * (im - dt_c)
        logw = logw_jumps + bfac * wint
    return k, logw
