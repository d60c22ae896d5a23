"""Compiled inner loops.  Everything here is sequential along the lattice and
parallel (prange) only across independent energies, so results do not depend
on the thread count."""

import math

import numba as nb
import numpy as np

_JIT = dict(cache=True, nogil=True)


@nb.njit(parallel=True, fastmath=True, **_JIT)
def advance_products(vals, energies, ea, b, m00, m01, m10, m11, logs):
    """Left-multiply the products by S(v) = ((ea (v - E), b), (1, 0)) for every
    column of ``vals``.

    vals: (P, C) potential values, one row per starting phase.
    energies: (M,).  State arrays have shape (M, P) and are updated in place.
    The largest real or imaginary part is divided out into ``logs`` whenever
    it leaves [1/2, 1], so the max-abs entry stays in [1/2, sqrt 2].
    """
    n_e = energies.shape[0]
    n_p, n_c = vals.shape
    for i in nb.prange(n_e):
        e = energies[i]
        for j in range(n_p):
            a00 = m00[i, j]
            a01 = m01[i, j]
            a10 = m10[i, j]
            a11 = m11[i, j]
            ls = logs[i, j]
            for c in range(n_c):
                a = ea * (vals[j, c] - e)
                t0 = a * a00 + b * a10
                t1 = a * a01 + b * a11
                a10 = a00
                a11 = a01
                a00 = t0
                a01 = t1
                # rescale every 8 steps and at the end; growth over 8 steps
                # stays far from overflow for any sane |v - E|
                if (c & 7) == 7 or c == n_c - 1:
                    mx = max(abs(a00.real), abs(a00.imag), abs(a01.real), abs(a01.imag),
                             abs(a10.real), abs(a10.imag), abs(a11.real), abs(a11.imag))
                    if mx > 1.0 or mx < 0.5:
                        inv = 1.0 / mx
                        a00 *= inv
                        a01 *= inv
                        a10 *= inv
                        a11 *= inv
                        ls += math.log(mx)
            m00[i, j] = a00
            m01[i, j] = a01
            m10[i, j] = a10
            m11[i, j] = a11
            logs[i, j] = ls


@nb.njit(**_JIT)
def _normalize(x, y):
    r = math.sqrt(x.real * x.real + x.imag * x.imag + y.real * y.real + y.imag * y.imag)
    return x / r, y / r, r


@nb.njit(**_JIT)
def _sine(x0, y0, x1, y1):
    # |det| of two unit vectors = sine of the projective angle
    return abs(x0 * y1 - y0 * x1)


@nb.njit(parallel=True, **_JIT)
def uh_sweeps(vals, energies, n_horizon, n_samples, record, u_out, s_out,
              fwd_diam, bwd_diam, min_sine, growth):
    """Forward/backward projective sweeps of the Schroedinger cocycle.

    vals[i] is v at lattice site i - n_horizon, for sites
    -n_horizon .. n_samples + n_horizon - 1.  Sample sites are 0..n_samples-1;
    the vector at site k is (psi_k, psi_{k-1}).

    Outputs per energy: largest fan diameter (sine) over the samples in each
    direction, smallest sine between the forward (unstable) and backward
    (stable) directions, and the finite-time growth rate over the horizon.
    """
    n_e = energies.shape[0]
    nh = n_horizon
    ks = n_samples
    for i in nb.prange(n_e):
        e = energies[i]
        ux = np.empty(ks, dtype=np.complex128)
        uy = np.empty(ks, dtype=np.complex128)
        # fan of three generic directions
        p0, q0 = 1.0 + 0.0j, 0.3 + 0.1j
        p1, q1 = 0.2 - 0.1j, 1.0 + 0.0j
        p2, q2 = 0.7 + 0.0j, -0.6 + 0.4j
        p0, q0, r = _normalize(p0, q0)
        p1, q1, r = _normalize(p1, q1)
        p2, q2, r = _normalize(p2, q2)
        lg = 0.0
        dmax = 0.0
        for t in range(nh + ks - 1):
            m = vals[t] - e
            p0, q0 = m * p0 - q0, p0
            p1, q1 = m * p1 - q1, p1
            p2, q2 = m * p2 - q2, p2
            p0, q0, r = _normalize(p0, q0)
            if t < nh:
                lg += math.log(r)
            p1, q1, r = _normalize(p1, q1)
            p2, q2, r = _normalize(p2, q2)
            site = t - nh + 1
            if site >= 0:
                ux[site] = p0
                uy[site] = q0
                d = max(_sine(p0, q0, p1, q1), _sine(p0, q0, p2, q2), _sine(p1, q1, p2, q2))
                if d > dmax:
                    dmax = d
                if record:
                    u_out[i, site, 0] = p0
                    u_out[i, site, 1] = q0
        fwd_diam[i] = dmax
        growth[i] = lg / nh

        p0, q0 = 0.4 + 0.2j, 1.0 + 0.0j
        p1, q1 = 1.0 + 0.0j, -0.3 + 0.5j
        p2, q2 = 0.6 - 0.5j, 0.8 + 0.0j
        p0, q0, r = _normalize(p0, q0)
        p1, q1, r = _normalize(p1, q1)
        p2, q2, r = _normalize(p2, q2)
        dmax = 0.0
        smin = 2.0
        for site in range(ks + nh - 1, -1, -1):
            # (psi_{k+1}, psi_k) -> (psi_k, psi_{k-1})
            m = vals[site + nh] - e
            p0, q0 = q0, m * q0 - p0
            p1, q1 = q1, m * q1 - p1
            p2, q2 = q2, m * q2 - p2
            p0, q0, r = _normalize(p0, q0)
            p1, q1, r = _normalize(p1, q1)
            p2, q2, r = _normalize(p2, q2)
            if site < ks:
                d = max(_sine(p0, q0, p1, q1), _sine(p0, q0, p2, q2), _sine(p1, q1, p2, q2))
                if d > dmax:
                    dmax = d
                sn = _sine(ux[site], uy[site], p0, q0)
                if sn < smin:
                    smin = sn
                if record:
                    s_out[i, site, 0] = p0
                    s_out[i, site, 1] = q0
        bwd_diam[i] = dmax
        min_sine[i] = smin


@nb.njit(**_JIT)
def _eliminate(piv, row):
    f = row[0] / piv[0]
    for c in range(1, 5):
        row[c] -= f * piv[c]
    row[0] = 0.0


@nb.njit(**_JIT)
def _shift(row):
    out = np.zeros(5, dtype=np.complex128)
    out[0] = row[1]
    out[1] = row[2]
    out[3] = row[3]
    out[4] = row[4]
    return out


@nb.njit(**_JIT)
def cyclic_logdet(diag, sup, sub, top_right, bottom_left):
    """log|det| and arg(det) of a tridiagonal matrix with two corner entries.

    Gaussian elimination with partial pivoting.  Fill-in stays inside two
    extra superdiagonals plus the last two columns and the last row, so every
    working row fits in five slots for columns (k, k+1, k+2, n-2, n-1) and the
    cost is O(n).  Needs n >= 5.  Returns (log_abs, arg, singular).
    """
    n = diag.shape[0]
    r0 = np.zeros(5, dtype=np.complex128)
    r1 = np.zeros(5, dtype=np.complex128)
    rl = np.zeros(5, dtype=np.complex128)
    r0[0] = diag[0]
    r0[1] = sup[0]
    r0[4] = top_right
    rl[0] = bottom_left
    rl[3] = sub[n - 2]
    rl[4] = diag[n - 1]
    logabs = 0.0
    arg = 0.0
    for k in range(n - 4):
        r1 = np.zeros(5, dtype=np.complex128)
        r1[0] = sub[k]
        r1[1] = diag[k + 1]
        r1[2] = sup[k + 1]
        a0 = abs(r0[0])
        a1 = abs(r1[0])
        al = abs(rl[0])
        if a0 == 0.0 and a1 == 0.0 and al == 0.0:
            return -np.inf, 0.0, True
        if a0 >= a1 and a0 >= al:
            piv = r0
            _eliminate(piv, r1)
            _eliminate(piv, rl)
            nxt, nl = r1, rl
        elif a1 >= al:
            piv = r1
            _eliminate(piv, r0)
            _eliminate(piv, rl)
            nxt, nl = r0, rl
            arg += math.pi
        else:
            piv = rl
            _eliminate(piv, r0)
            _eliminate(piv, r1)
            nxt, nl = r1, r0
            arg += math.pi
        p = piv[0]
        logabs += math.log(abs(p))
        arg += math.atan2(p.imag, p.real)
        r0 = _shift(nxt)
        rl = _shift(nl)
    # final 4x4 block on columns (n-4, n-3, n-2, n-1)
    blk = np.zeros((4, 4), dtype=np.complex128)
    blk[0, 0] = r0[0]
    blk[0, 1] = r0[1]
    blk[0, 2] = r0[2] + r0[3]
    blk[0, 3] = r0[4]
    blk[1, 0] = sub[n - 4]
    blk[1, 1] = diag[n - 3]
    blk[1, 2] = sup[n - 3]
    blk[2, 1] = sub[n - 3]
    blk[2, 2] = diag[n - 2]
    blk[2, 3] = sup[n - 2]
    blk[3, 0] = rl[0]
    blk[3, 1] = rl[1]
    blk[3, 2] = rl[2] + rl[3]
    blk[3, 3] = rl[4]
    for c in range(4):
        best = c
        for r in range(c + 1, 4):
            if abs(blk[r, c]) > abs(blk[best, c]):
                best = r
        if abs(blk[best, c]) == 0.0:
            return -np.inf, 0.0, True
        if best != c:
            for cc in range(4):
                tmp = blk[c, cc]
                blk[c, cc] = blk[best, cc]
                blk[best, cc] = tmp
            arg += math.pi
        p = blk[c, c]
        logabs += math.log(abs(p))
        arg += math.atan2(p.imag, p.real)
        for r in range(c + 1, 4):
            f = blk[r, c] / p
            for cc in range(c, 4):
                blk[r, cc] -= f * blk[c, cc]
    arg = math.atan2(math.sin(arg), math.cos(arg))
    return logabs, arg, False
