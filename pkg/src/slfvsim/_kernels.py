"""Compiled event-loop kernels.

The state-dependent thinning of the driving Poisson process makes the inner
loops inherently sequential, so the replicate-level hot paths live here as
numba kernels.  Python-level reference implementations of the same dynamics
exist in ``dual``/``pair``/``forward`` and are cross-checked distributionally
in the test suite.

Every kernel re-seeds its generator from a per-replicate seed, so results are
independent of replicate execution order and of worker splits.

Status codes returned by the batch kernels:
0 = completed, 1 = capacity exceeded, 2 = event budget exceeded.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_CAPACITY = 1
STATUS_BUDGET = 2


@njit(cache=True)
def _unif_open(rho):
    """Uniform on the open interval (-rho, rho)."""
    while True:
        u = (2.0 * np.random.random() - 1.0) * rho
        if -rho < u < rho:
            return u


@njit(cache=True)
def _distinct_pair(c, rho):
    """Two a.s.-distinct uniform draws in (c - rho, c + rho), ordered."""
    z1 = c + _unif_open(rho)
    z2 = c + _unif_open(rho)
    while z2 == z1:
        z2 = c + _unif_open(rho)
    if z2 < z1:
        z1, z2 = z2, z1
    return z1, z2


# ---------------------------------------------------------------------------
# coupled extremal pair (left-most and right-most trace on a shared stream)
# ---------------------------------------------------------------------------

@njit(cache=True)
def pair_forward_batch(seeds, n, alpha, radii, weights, y_left, y_right, T,
                       budget):
    """Evolve the coupled (left-most, right-most) pair with upsilon = 1.

    Returns per replicate: final L, R, clock triple (coalesced, nearby,
    separated), time of first separation (-1 if never), events consumed, and
    a status code.  The nearby threshold is twice the maximal rescaled radius.
    """
    reps = seeds.shape[0]
    natoms = radii.shape[0]
    sqrt_n = np.sqrt(n)
    s_n = alpha / sqrt_n
    rho = radii / sqrt_n
    base = n * sqrt_n * weights           # centre density per atom
    near = 2.0 * np.max(rho)

    out_L = np.empty(reps)
    out_R = np.empty(reps)
    out_C = np.zeros(reps)
    out_N = np.zeros(reps)
    out_S = np.zeros(reps)
    out_sep = np.full(reps, -1.0)
    out_events = np.zeros(reps, dtype=np.int64)
    out_status = np.zeros(reps, dtype=np.int64)

    for k in range(reps):
        np.random.seed(seeds[k])
        L = y_left
        R = y_right
        t = 0.0
        C = 0.0
        N = 0.0
        S = 0.0
        first_sep = -1.0
        n_events = 0
        while True:
            gap = R - L
            total = 0.0
            for i in range(natoms):
                ell = 2.0 * rho[i] + min(2.0 * rho[i], gap)
                total += base[i] * ell
            dt = np.random.exponential(1.0 / total)
            t_next = t + dt
            hold = min(t_next, T) - t
            if gap == 0.0:
                C += hold
            elif gap <= near:
                N += hold
            else:
                S += hold
            if t_next >= T:
                break
            t = t_next
            n_events += 1
            if n_events > budget:
                out_status[k] = STATUS_BUDGET
                break
            # atom choice proportional to covered length
            u = np.random.random() * total
            i = 0
            for j in range(natoms):
                ell = 2.0 * rho[j] + min(2.0 * rho[j], gap)
                w = base[j] * ell
                if u <= w:
                    i = j
                    break
                u -= w
                i = j
            r = rho[i]
            ell = 2.0 * r + min(2.0 * r, gap)
            xi = np.random.random() * ell
            if gap >= 2.0 * r:
                c = L - r + xi if xi < 2.0 * r else R - r + (xi - 2.0 * r)
            else:
                c = L - r + xi
            cov_l = abs(c - L) <= r
            cov_r = abs(c - R) <= r
            if np.random.random() < s_n:
                z1, z2 = _distinct_pair(c, r)
                if cov_l and cov_r:
                    L = z1
                    R = z2
                elif cov_l:
                    L = z1
                else:
                    R = z2
            else:
                z = c + _unif_open(r)
                if cov_l and cov_r:
                    L = z
                    R = z
                elif cov_l:
                    L = z
                else:
                    R = z
            if R - L > 0.0 and gap == 0.0 and first_sep < 0.0:
                first_sep = t
        out_L[k] = L
        out_R[k] = R
        out_C[k] = C
        out_N[k] = N
        out_S[k] = S
        out_sep[k] = first_sep
        out_events[k] = n_events
    return out_L, out_R, out_C, out_N, out_S, out_sep, out_events, out_status


# ---------------------------------------------------------------------------
# multi-lineage dual (positions only; genealogy stays in the Python layer)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _lower_bound(pos, lo, hi, x):
    """First index in sorted pos[lo:hi] whose value is >= x."""
    while lo < hi:
        mid = (lo + hi) // 2
        if pos[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def _upper_bound(pos, lo, hi, x):
    """First index in sorted pos[lo:hi] whose value is > x."""
    while lo < hi:
        mid = (lo + hi) // 2
        if pos[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def _union_lengths(pos, m, rho, ells):
    """Merged cover length per radius atom for sorted positions.

    Uses the gap identity: the union of [p - r, p + r] over sorted points has
    length 2r plus the sum of consecutive gaps clipped at 2r.
    """
    for i in range(rho.shape[0]):
        two_r = 2.0 * rho[i]
        u = two_r
        for j in range(m - 1):
            g = pos[j + 1] - pos[j]
            u += g if g < two_r else two_r
        ells[i] = u


@njit(cache=True)
def dual_extremal_batch(seeds, n, alpha, upsilon, radii, weights, y0, T,
                        budget, cap):
    """Run the branching-coalescing lineage system from a single point.

    Positions stay sorted throughout; covered lineages are located by binary
    search and the per-atom merged-cover lengths are maintained incrementally
    (with periodic full refreshes against float drift).  The budget counts
    lineage interactions: one per covering event plus one per covered lineage.

    Per replicate returns (min position, max position, lineage count,
    interactions consumed, status, time reached).
    """
    reps = seeds.shape[0]
    natoms = radii.shape[0]
    sqrt_n = np.sqrt(n)
    s_n = alpha / sqrt_n
    rho = radii / sqrt_n
    base = n * sqrt_n * weights

    out_min = np.empty(reps)
    out_max = np.empty(reps)
    out_m = np.zeros(reps, dtype=np.int64)
    out_inter = np.zeros(reps, dtype=np.int64)
    out_status = np.zeros(reps, dtype=np.int64)
    out_time = np.zeros(reps)

    pos = np.empty(cap)
    mark = np.empty(cap, dtype=np.bool_)
    ells = np.empty(natoms)

    for k in range(reps):
        np.random.seed(seeds[k])
        pos[0] = y0
        m = 1
        t = 0.0
        inter = 0
        status = STATUS_OK
        since_refresh = 0
        _union_lengths(pos, m, rho, ells)
        while True:
            total = 0.0
            for i in range(natoms):
                total += base[i] * ells[i]
            dt = np.random.exponential(1.0 / total)
            if t + dt >= T:
                t = T
                break
            t = t + dt
            # atom proportional to covered length
            u = np.random.random() * total
            atom = 0
            for i in range(natoms):
                w_i = base[i] * ells[i]
                if u <= w_i:
                    atom = i
                    break
                u -= w_i
                atom = i
            r = rho[atom]
            two_r = 2.0 * r
            # centre uniform on the merged cover: piece j of the union is
            # [pos[j] - r, pos[j] - r + s_j) with s_j the clipped gap
            xi = np.random.random() * ells[atom]
            c = pos[m - 1] + r  # overwritten unless xi rides float round-off
            for j in range(m):
                if j < m - 1:
                    g = pos[j + 1] - pos[j]
                    s = g if g < two_r else two_r
                else:
                    s = two_r
                if xi < s:
                    c = pos[j] - r + xi
                    break
                xi -= s
            j0 = _lower_bound(pos, 0, m, c - r)
            j1 = _upper_bound(pos, 0, m, c + r)
            n_cov = j1 - j0
            inter += 1 + n_cov
            if inter > budget:
                status = STATUS_BUDGET
                break
            if n_cov <= 0:
                continue  # float-boundary guard
            # independent marking of the covered lineages
            n_marked = 0
            for j in range(j0, j1):
                if np.random.random() < upsilon:
                    mark[j] = True
                    n_marked += 1
                else:
                    mark[j] = False
            if n_marked == 0:
                continue
            selective = np.random.random() < s_n
            since_refresh += 1
            if not selective and n_marked == 1:
                # fast path: one lineage replaced, sorted order restored by a
                # local slide and the cover lengths patched via gap deltas
                jr = j0
                for j in range(j0, j1):
                    if mark[j]:
                        jr = j
                        break
                z = c + _unif_open(r)
                if m > 1:
                    for i in range(natoms):
                        tr = 2.0 * rho[i]
                        if jr == 0:
                            g = pos[1] - pos[0]
                            ells[i] -= g if g < tr else tr
                        elif jr == m - 1:
                            g = pos[m - 1] - pos[m - 2]
                            ells[i] -= g if g < tr else tr
                        else:
                            g1 = pos[jr] - pos[jr - 1]
                            g2 = pos[jr + 1] - pos[jr]
                            gm = g1 + g2
                            d = gm if gm < tr else tr
                            d -= g1 if g1 < tr else tr
                            d -= g2 if g2 < tr else tr
                            ells[i] += d
                idx = jr
                while idx + 1 < m and pos[idx + 1] < z:
                    pos[idx] = pos[idx + 1]
                    idx += 1
                while idx > 0 and pos[idx - 1] > z:
                    pos[idx] = pos[idx - 1]
                    idx -= 1
                pos[idx] = z
                if m > 1:
                    for i in range(natoms):
                        tr = 2.0 * rho[i]
                        if idx == 0:
                            g = pos[1] - pos[0]
                            ells[i] += g if g < tr else tr
                        elif idx == m - 1:
                            g = pos[m - 1] - pos[m - 2]
                            ells[i] += g if g < tr else tr
                        else:
                            ga = pos[idx] - pos[idx - 1]
                            gb = pos[idx + 1] - pos[idx]
                            gm = ga + gb
                            d = ga if ga < tr else tr
                            d += gb if gb < tr else tr
                            d -= gm if gm < tr else tr
                            ells[i] += d
            else:
                n_new = 2 if selective else 1
                if m - n_marked + n_new > cap:
                    status = STATUS_CAPACITY
                    break
                # compact window survivors to [j0, w)
                w = j0
                for j in range(j0, j1):
                    if not mark[j]:
                        pos[w] = pos[j]
                        w += 1
                # slide the tail so the free block sits at [w, w + n_new)
                shift = n_new - n_marked
                if shift > 0:
                    for j in range(m - 1, j1 - 1, -1):
                        pos[j + shift] = pos[j]
                elif shift < 0:
                    for j in range(j1, m):
                        pos[j + shift] = pos[j]
                m = m - n_marked + n_new
                # ordered inserts into [j0, w + n_new), largest first
                if selective:
                    z1, z2 = _distinct_pair(c, r)
                    u2 = _upper_bound(pos, j0, w, z2)
                    for j in range(w - 1, u2 - 1, -1):
                        pos[j + 1] = pos[j]
                    pos[u2] = z2
                    w += 1
                    u1 = _upper_bound(pos, j0, w, z1)
                    for j in range(w - 1, u1 - 1, -1):
                        pos[j + 1] = pos[j]
                    pos[u1] = z1
                else:
                    z = c + _unif_open(r)
                    uz = _upper_bound(pos, j0, w, z)
                    for j in range(w - 1, uz - 1, -1):
                        pos[j + 1] = pos[j]
                    pos[uz] = z
                _union_lengths(pos, m, rho, ells)
                since_refresh = 0
            if since_refresh >= 4096:
                _union_lengths(pos, m, rho, ells)
                since_refresh = 0
        out_min[k] = pos[0]
        out_max[k] = pos[m - 1]
        out_m[k] = m
        out_inter[k] = inter
        out_status[k] = status
        out_time[k] = t
    return out_min, out_max, out_m, out_inter, out_status, out_time


# ---------------------------------------------------------------------------
# forward allele-frequency profile
# ---------------------------------------------------------------------------

@njit(cache=True)
def _cell_index(bp, m, x):
    """Index of the cell containing x (number of breakpoints <= x)."""
    lo = 0
    hi = m
    while lo < hi:
        mid = (lo + hi) // 2
        if bp[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def _insert_breakpoint(bp, vals, m, x):
    """Split the cell containing x at x (no-op if x is already a breakpoint).

    Returns the new breakpoint count.  ``vals`` has m + 1 live entries.
    """
    idx = _cell_index(bp, m, x)
    if idx > 0 and bp[idx - 1] == x:
        return m
    for j in range(m, idx, -1):
        bp[j] = bp[j - 1]
    for j in range(m + 1, idx, -1):
        vals[j] = vals[j - 1]
    bp[idx] = x
    return m + 1


@njit(cache=True)
def forward_profile_batch(seeds, n, alpha, upsilon, radii, weights, a, b, T,
                          bp0, vals0, eval_x, cap, budget):
    """Evolve the allele-frequency profile on the window [a, b].

    Event centres are restricted so event intervals stay inside the window;
    outside the window the profile is frozen at its edge-cell values (which is
    also the evaluation convention).  Returns per replicate the product of the
    final frequencies at ``eval_x`` plus a status code.
    """
    reps = seeds.shape[0]
    natoms = radii.shape[0]
    sqrt_n = np.sqrt(n)
    s_n = alpha / sqrt_n
    rho = radii / sqrt_n
    base = n * sqrt_n * weights

    rates = np.empty(natoms)
    total = 0.0
    for i in range(natoms):
        width = (b - a) - 2.0 * rho[i]
        if width <= 0.0:
            width = 0.0
        rates[i] = base[i] * width
        total += rates[i]

    m0 = bp0.shape[0]
    bp = np.empty(cap)
    vals = np.empty(cap + 1)
    out_prod = np.empty(reps)
    out_status = np.zeros(reps, dtype=np.int64)

    for k in range(reps):
        np.random.seed(seeds[k])
        for j in range(m0):
            bp[j] = bp0[j]
        for j in range(m0 + 1):
            vals[j] = vals0[j]
        m = m0
        t = 0.0
        n_events = 0
        status = STATUS_OK
        while True:
            dt = np.random.exponential(1.0 / total)
            if t + dt >= T:
                break
            t += dt
            n_events += 1
            if n_events > budget:
                status = STATUS_BUDGET
                break
            u = np.random.random() * total
            atom = 0
            for i in range(natoms):
                if u <= rates[i]:
                    atom = i
                    break
                u -= rates[i]
                atom = i
            r = rho[atom]
            c = a + r + np.random.random() * ((b - a) - 2.0 * r)
            lo = c - r
            hi = c + r
            # parent types are read from the pre-event profile
            if np.random.random() < s_n:
                z1 = c + _unif_open(r)
                z2 = c + _unif_open(r)
                w1 = vals[_cell_index(bp, m, z1)]
                w2 = vals[_cell_index(bp, m, z2)]
                good = 1.0 if (np.random.random() < w1 and np.random.random() < w2) else 0.0
            else:
                z = c + _unif_open(r)
                wz = vals[_cell_index(bp, m, z)]
                good = 1.0 if np.random.random() < wz else 0.0
            if upsilon >= 1.0:
                # overwrite [lo, hi) with the constant 0/1 value
                c_lo = _cell_index(bp, m, lo)
                c_hi = _cell_index(bp, m, hi)
                left_val = vals[c_lo]
                right_val = vals[c_hi]
                need_lo = left_val != good
                need_hi = right_val != good
                n_new = (1 if need_lo else 0) + (1 if need_hi else 0)
                if m - (c_hi - c_lo) + n_new > cap:
                    status = STATUS_CAPACITY
                    break
                # assemble: bp[:c_lo], optional lo, optional hi, bp[c_hi:]
                shift = n_new - (c_hi - c_lo)
                if shift > 0:
                    for j in range(m - 1, c_hi - 1, -1):
                        bp[j + shift] = bp[j]
                        vals[j + shift + 1] = vals[j + 1]
                elif shift < 0:
                    for j in range(c_hi, m):
                        bp[j + shift] = bp[j]
                        vals[j + shift + 1] = vals[j + 1]
                pos = c_lo
                if need_lo:
                    bp[pos] = lo
                    vals[pos + 1] = good
                    pos += 1
                if need_hi:
                    bp[pos] = hi
                    vals[pos + 1] = right_val
                m += shift
            else:
                if m + 2 > cap:
                    status = STATUS_CAPACITY
                    break
                m = _insert_breakpoint(bp, vals, m, lo)
                m = _insert_breakpoint(bp, vals, m, hi)
                c_lo = _cell_index(bp, m, lo)
                c_hi = _cell_index(bp, m, hi)
                for j in range(c_lo, c_hi):
                    vals[j] = (1.0 - upsilon) * vals[j] + upsilon * good
                # merge at the two seams if the blend recreated equal cells
                if c_hi <= m and vals[c_hi - 1] == vals[c_hi]:
                    for j in range(c_hi - 1, m - 1):
                        bp[j] = bp[j + 1]
                    for j in range(c_hi, m):
                        vals[j] = vals[j + 1]
                    m -= 1
                if c_lo > 0 and vals[c_lo - 1] == vals[c_lo]:
                    for j in range(c_lo - 1, m - 1):
                        bp[j] = bp[j + 1]
                    for j in range(c_lo, m):
                        vals[j] = vals[j + 1]
                    m -= 1
        prod = 1.0
        for j in range(eval_x.shape[0]):
            prod *= vals[_cell_index(bp, m, eval_x[j])]
        out_prod[k] = prod
        out_status[k] = status
    return out_prod, out_status


# ---------------------------------------------------------------------------
# backward extremal pair: first passage of the gap to zero
# ---------------------------------------------------------------------------

@njit(cache=True)
def backward_pair_meeting_batch(seeds, n, alpha, radii, weights, y_east_chooser,
                                y_west_chooser, t_cap, budget):
    """Trace a backward left-most / right-most pair until their gap closes.

    ``y_east_chooser`` starts the backward left-most path (takes the east-most
    potential parent when a selective event leaves a choice), ``y_west_chooser``
    the backward right-most one.  Time runs downward; the returned meeting time
    is the first passage of (west_chooser - east_chooser) to <= 0, i.e. the
    first instant the pair coalesces or swaps order through one shared event.
    """
    reps = seeds.shape[0]
    natoms = radii.shape[0]
    sqrt_n = np.sqrt(n)
    s_n = alpha / sqrt_n
    rho = radii / sqrt_n
    base = n * sqrt_n * weights

    out_time = np.empty(reps)
    out_met = np.zeros(reps, dtype=np.bool_)
    out_status = np.zeros(reps, dtype=np.int64)

    for k in range(reps):
        np.random.seed(seeds[k])
        pe = y_east_chooser      # backward left-most
        pw = y_west_chooser      # backward right-most
        t = 0.0
        n_events = 0
        met = False
        while True:
            gap = abs(pw - pe)
            total = 0.0
            for i in range(natoms):
                ell = 2.0 * rho[i] + min(2.0 * rho[i], gap)
                total += base[i] * ell
            dt = np.random.exponential(1.0 / total)
            t += dt
            if t >= t_cap:
                t = t_cap
                break
            n_events += 1
            if n_events > budget:
                out_status[k] = STATUS_BUDGET
                break
            u = np.random.random() * total
            atom = 0
            for i in range(natoms):
                ell = 2.0 * rho[i] + min(2.0 * rho[i], gap)
                w = base[i] * ell
                if u <= w:
                    atom = i
                    break
                u -= w
                atom = i
            r = rho[atom]
            lo_p = min(pe, pw)
            hi_p = max(pe, pw)
            ell = 2.0 * r + min(2.0 * r, hi_p - lo_p)
            xi = np.random.random() * ell
            if hi_p - lo_p >= 2.0 * r:
                c = lo_p - r + xi if xi < 2.0 * r else hi_p - r + (xi - 2.0 * r)
            else:
                c = lo_p - r + xi
            cov_e = abs(c - pe) <= r
            cov_w = abs(c - pw) <= r
            if np.random.random() < s_n:
                v1, v2 = _distinct_pair(c, r)
                if cov_e:
                    if pe < v1:
                        pe = c - r
                    elif pe > v2:
                        pe = c + r
                    else:
                        pe = c + r      # east choice
                if cov_w:
                    if pw < v1:
                        pw = c - r
                    elif pw > v2:
                        pw = c + r
                    else:
                        pw = c - r      # west choice
            else:
                v = c + _unif_open(r)
                if cov_e:
                    pe = c - r if pe <= v else c + r
                if cov_w:
                    pw = c - r if pw <= v else c + r
            if pw - pe <= 0.0:
                met = True
                break
        out_time[k] = t
        out_met[k] = met
    return out_time, out_met, out_status


# ---------------------------------------------------------------------------
# single extremal trace, jump batch (law-level sampling for the walk moments)
# ---------------------------------------------------------------------------

@njit(cache=True)
def trace_endpoint_batch(seeds, n, alpha, radii, weights, T, side):
    """Terminal displacement of a single extremal trace, one per replicate.

    side = +1 samples the right-most trace (selective events jump to the
    east-most potential parent), side = -1 the left-most.  Jumps are iid, so
    the walk is a compound Poisson sum.
    """
    reps = seeds.shape[0]
    natoms = radii.shape[0]
    sqrt_n = np.sqrt(n)
    s_n = alpha / sqrt_n
    rho = radii / sqrt_n
    # hit rate per atom: centre density times covering length 2 rho_i
    rate = np.empty(natoms)
    total = 0.0
    for i in range(natoms):
        rate[i] = n * sqrt_n * weights[i] * 2.0 * rho[i]
        total += rate[i]
    out = np.empty(reps)
    for k in range(reps):
        np.random.seed(seeds[k])
        x = 0.0
        count = np.random.poisson(total * T)
        for _ in range(count):
            u = np.random.random() * total
            atom = 0
            for i in range(natoms):
                if u <= rate[i]:
                    atom = i
                    break
                u -= rate[i]
                atom = i
            r = rho[atom]
            c = _unif_open(r)            # centre offset from the walker
            if np.random.random() < s_n:
                u1 = _unif_open(r)
                u2 = _unif_open(r)
                z = max(u1, u2) if side > 0 else min(u1, u2)
                x += c + z
            else:
                x += c + _unif_open(r)
        out[k] = x
    return out
