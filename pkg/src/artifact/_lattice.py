"""Compiled kernels for the characteristic-lattice transport step.

Layout: a buffer ``P[i, w, j]`` holds the values carried by the j-th lattice
point of the ray family (mu_i, omega_w) for one direction in one layer.
Positions are measured from the buffer's inflow boundary in units of the
lattice spacing h: point j sits at ``j + theta``.  Families with equal speed
share theta and are grouped (``grp_ptr``/``grp_idx``) so the source field is
sampled once per group.
"""

import math

from numba import njit


@njit(cache=True)
def _sample(S, pos):
    # cell c has its center at c + 0.5; constant extension past the ends
    n = S.shape[0]
    q = pos - 0.5
    if q <= 0.0:
        return S[0]
    if q >= n - 1:
        return S[n - 1]
    c = int(q)
    lam = q - c
    return S[c] + lam * (S[c + 1] - S[c])


@njit(cache=True)
def advance(P, ghost, inflow, exit_out, theta, dd, wrap, afrac, grp_ptr, grp_idx, decay, tau, src, S, dt, scratch):
    """Advance one buffer by dt.

    Non-wrapping families move by d < 1 - theta and relax in place.  A
    wrapping family loses its last point through the outflow boundary at
    step fraction a (its value at that instant goes to ``exit_out``), all
    points shift by one slot, and a new point enters with ``inflow``.
    ``S`` is the bracket field in the buffer's local orientation (empty
    when the buffer has no relaxation source); ``src`` is xi / angular
    measure so the relaxation target is src * S.
    """
    nmu, _, n = P.shape
    ngrp = grp_ptr.shape[0] - 1
    has_src = S.shape[0] > 0
    s_last = 0.0
    if has_src:
        s_last = S[S.shape[0] - 1]
    for i in range(nmu):
        for k in range(ngrp):
            th = theta[i, k]
            d = dd[i, k]
            if has_src:
                half = th + 0.5 * d
                for j in range(n):
                    scratch[j] = _sample(S, j + half)
            if not wrap[i, k]:
                for gi in range(grp_ptr[k], grp_ptr[k + 1]):
                    w = grp_idx[gi]
                    e = decay[w]
                    exit_out[i, w] = 0.0
                    if has_src:
                        c = (1.0 - e) * src[w]
                        for j in range(n):
                            P[i, w, j] = e * P[i, w, j] + c * scratch[j]
                        ghost[i, w] = e * ghost[i, w] + c * s_last
                    else:
                        for j in range(n):
                            P[i, w, j] = e * P[i, w, j]
                        ghost[i, w] = e * ghost[i, w]
                continue
            a = afrac[i, k]
            s_exit = 0.0
            s_new = 0.0
            if has_src:
                s_exit = _sample(S, n - 1 + th + 0.5 * a * d)
                s_new = _sample(S, 0.5 * max(th + d - 1.0, 0.0))
            for gi in range(grp_ptr[k], grp_ptr[k + 1]):
                w = grp_idx[gi]
                e = decay[w]
                ea = math.exp(-a * dt / tau[w])
                eb = math.exp(-(1.0 - a) * dt / tau[w])
                last = P[i, w, n - 1]
                if has_src:
                    r = src[w]
                    vx = ea * last + (1.0 - ea) * r * s_exit
                    ghost[i, w] = eb * vx + (1.0 - eb) * r * s_last
                    c = (1.0 - e) * r
                    for j in range(n - 1, 0, -1):
                        P[i, w, j] = e * P[i, w, j - 1] + c * scratch[j - 1]
                    P[i, w, 0] = eb * inflow[i, w] + (1.0 - eb) * r * s_new
                else:
                    vx = ea * last
                    ghost[i, w] = eb * vx
                    for j in range(n - 1, 0, -1):
                        P[i, w, j] = e * P[i, w, j - 1]
                    P[i, w, 0] = eb * inflow[i, w]
                exit_out[i, w] = vx


@njit(cache=True)
def deposit(P, ghost, bval, theta, grp_ptr, grp_idx, wmu, wot, xi, out, reverse, scratch, extremes):
    """Accumulate the bracket sum_i sum_w wmu wot P at cell centers into ``out``.

    Values between lattice points are linear; between the inflow boundary
    and the first point the boundary value ``bval`` is used, past the last
    point the ghost.  ``extremes`` receives (min, max value/xi) over the lattice
    points and the ghost if it has two entries.
    """
    nmu, _, n = P.shape
    ngrp = grp_ptr.shape[0] - 1
    track = extremes.shape[0] == 2
    for i in range(nmu):
        wi = wmu[i]
        for k in range(ngrp):
            th = theta[i, k]
            for j in range(n):
                scratch[j] = 0.0
            tg = 0.0
            tb = 0.0
            for gi in range(grp_ptr[k], grp_ptr[k + 1]):
                w = grp_idx[gi]
                c = wot[w]
                for j in range(n):
                    scratch[j] += c * P[i, w, j]
                tg += c * ghost[i, w]
                tb += c * bval[i, w]
                if track:
                    lo = ghost[i, w]
                    hi = ghost[i, w]
                    for j in range(n):
                        v = P[i, w, j]
                        if v < lo:
                            lo = v
                        if v > hi:
                            hi = v
                    if lo < extremes[0]:
                        extremes[0] = lo
                    if xi[w] > 0.0:
                        r = hi / xi[w]
                        if r > extremes[1]:
                            extremes[1] = r
            for cell in range(n):
                s = cell + 0.5 - th
                if s < 0.0:
                    val = tb + (scratch[0] - tb) * (cell + 0.5) / th
                elif s >= n - 1:
                    lam = s - (n - 1)
                    val = scratch[n - 1] + lam * (tg - scratch[n - 1])
                else:
                    j = int(s)
                    lam = s - j
                    val = scratch[j] + lam * (scratch[j + 1] - scratch[j])
                if reverse:
                    out[n - 1 - cell] += wi * val
                else:
                    out[cell] += wi * val
