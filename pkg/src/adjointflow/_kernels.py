"""Numba inner loops for the explicit coupled integrators.

Everything here works on plain arrays so the jitted code stays cache-able
and bit-deterministic (no fastmath, fixed summation order, single thread).
The wrappers in :mod:`online` and :mod:`burgers` own validation, logging,
and error reporting; kernels only march state and report the first step at
which a non-finite value appeared (0 means the chunk completed clean).
"""

from __future__ import annotations

import numpy as np
from numba import njit

# schedule kind codes shared with online.Schedule
SCHED_INVERSE_LINEAR = 0
SCHED_CONSTANT = 1
SCHED_POWER = 2

# source model codes
MODEL_LINEAR = 0
MODEL_TANH = 1


@njit(cache=True)
def _alpha_at(t, sched_kind, c_alpha, exponent):
    if sched_kind == SCHED_INVERSE_LINEAR:
        return c_alpha / (1.0 + t)
    if sched_kind == SCHED_CONSTANT:
        return c_alpha
    return c_alpha * (1.0 + t) ** (-exponent)


@njit(cache=True)
def linear_online_chunk(
    u,
    uhat,
    theta,
    n0,
    steps,
    dt,
    a_data,
    a_indices,
    a_indptr,
    t_data,
    t_indices,
    t_indptr,
    basis,
    wbasis,
    h,
    gamma,
    model_kind,
    sched_kind,
    c_alpha,
    exponent,
):
    """March ``steps`` coupled explicit Euler steps in place.

    u, uhat: interior state vectors. theta: parameter vector. a_*: CSR of
    the forward interior operator; t_*: CSR of its transpose. basis: node
    samples of the basis fields on interior nodes (n x d); wbasis: the same
    premultiplied by quadrature weights. h: interior target samples.

    Every update reads the pre-step state only. Returns 0 on a clean chunk,
    else 1 + the 0-based step offset that produced a non-finite value.
    """
    n = u.size
    d = theta.size
    au = np.empty(n)
    at = np.empty(n)
    fvec = np.empty(n)
    graw = np.empty(d)
    teff = np.empty(d)
    dsq = np.empty(d)
    un = np.empty(n)
    hn = np.empty(n)
    tn = np.empty(d)

    for s in range(steps):
        t = (n0 + s) * dt
        al = _alpha_at(t, sched_kind, c_alpha, exponent)

        if model_kind == MODEL_LINEAR:
            for k in range(d):
                teff[k] = theta[k]
                dsq[k] = 1.0
        else:
            for k in range(d):
                th = np.tanh(theta[k])
                teff[k] = th
                dsq[k] = 1.0 - th * th

        for i in range(n):
            acc = 0.0
            for p in range(a_indptr[i], a_indptr[i + 1]):
                acc += a_data[p] * u[a_indices[p]]
            au[i] = acc
            acc2 = 0.0
            for p in range(t_indptr[i], t_indptr[i + 1]):
                acc2 += t_data[p] * uhat[t_indices[p]]
            at[i] = acc2
            accf = 0.0
            for k in range(d):
                accf += basis[i, k] * teff[k]
            fvec[i] = accf

        for k in range(d):
            acc = 0.0
            for i in range(n):
                acc += wbasis[i, k] * uhat[i]
            graw[k] = acc

        ok = True
        for i in range(n):
            un[i] = u[i] + dt * (fvec[i] - au[i])
            hn[i] = uhat[i] + dt * ((u[i] - h[i]) - at[i])
            if not (np.isfinite(un[i]) and np.isfinite(hn[i])):
                ok = False
        for k in range(d):
            tn[k] = theta[k] - al * (graw[k] * dsq[k] + gamma * theta[k]) * dt
            if not np.isfinite(tn[k]):
                ok = False
        if not ok:
            return s + 1

        for i in range(n):
            u[i] = un[i]
            uhat[i] = hn[i]
        for k in range(d):
            theta[k] = tn[k]

    return 0


@njit(cache=True)
def _copy2d(dst, src):
    ny2, nx2 = dst.shape
    for j in range(ny2):
        for i in range(nx2):
            dst[j, i] = src[j, i]


@njit(cache=True)
def burgers_forward_chunk(u, un, theta1, theta2, h_x, h_y, dt, steps):
    """March the forward viscous problem with frozen parameters.

    u has shape (ny+2, nx+2) with boundary values already set on both
    buffers. Returns 1 + the offending step offset on non-finite state,
    else 0. The final (or last finite) state always lands back in ``u``.
    """
    ny2, nx2 = u.shape
    flip = 0  # 0: current state is in u, 1: in un
    for s in range(steps):
        if flip == 0:
            cur, nxt = u, un
        else:
            cur, nxt = un, u
        ok = True
        for j in range(1, ny2 - 1):
            for i in range(1, nx2 - 1):
                ux = (cur[j, i + 1] - cur[j, i - 1]) / (2.0 * h_x)
                uy = (cur[j + 1, i] - cur[j - 1, i]) / (2.0 * h_y)
                lap = (cur[j, i + 1] - 2.0 * cur[j, i] + cur[j, i - 1]) / (h_x * h_x) + (
                    cur[j + 1, i] - 2.0 * cur[j, i] + cur[j - 1, i]
                ) / (h_y * h_y)
                val = cur[j, i] + dt * (
                    -theta1 * cur[j, i] * ux - theta2 * cur[j, i] * uy + lap
                )
                nxt[j, i] = val
                if not np.isfinite(val):
                    ok = False
        if not ok:
            if flip == 1:
                _copy2d(u, un)
            return s + 1
        flip = 1 - flip
    if flip == 1:
        _copy2d(u, un)
    return 0


@njit(cache=True)
def burgers_adjoint_chunk(uhat, uhn, ustar, h, theta1, theta2, h_x, h_y, dt, steps):
    """March the adjoint relaxation against a frozen forward state."""
    ny2, nx2 = uhat.shape
    flip = 0
    for s in range(steps):
        if flip == 0:
            cur, nxt = uhat, uhn
        else:
            cur, nxt = uhn, uhat
        ok = True
        for j in range(1, ny2 - 1):
            for i in range(1, nx2 - 1):
                px = (cur[j, i + 1] - cur[j, i - 1]) / (2.0 * h_x)
                py = (cur[j + 1, i] - cur[j - 1, i]) / (2.0 * h_y)
                lap = (cur[j, i + 1] - 2.0 * cur[j, i] + cur[j, i - 1]) / (h_x * h_x) + (
                    cur[j + 1, i] - 2.0 * cur[j, i] + cur[j - 1, i]
                ) / (h_y * h_y)
                val = cur[j, i] + dt * (
                    theta1 * ustar[j, i] * px
                    + theta2 * ustar[j, i] * py
                    + lap
                    + (ustar[j, i] - h[j, i])
                )
                nxt[j, i] = val
                if not np.isfinite(val):
                    ok = False
        if not ok:
            if flip == 1:
                _copy2d(uhat, uhn)
            return s + 1
        flip = 1 - flip
    if flip == 1:
        _copy2d(uhat, uhn)
    return 0


@njit(cache=True)
def burgers_online_chunk(
    u,
    un,
    uhat,
    uhn,
    theta,
    h,
    n0,
    steps,
    dt,
    h_x,
    h_y,
    gamma,
    sched_kind,
    c_alpha,
    exponent,
):
    """March the coupled forward/adjoint/parameter system; all from old state.

    theta is a length-2 array updated in place. Returns 0 or 1 + step offset
    of the first non-finite value. Final fields land back in u and uhat.
    """
    ny2, nx2 = u.shape
    wq = h_x * h_y
    flip = 0
    for s in range(steps):
        if flip == 0:
            cu, nu, ch, nh = u, un, uhat, uhn
        else:
            cu, nu, ch, nh = un, u, uhn, uhat
        t = (n0 + s) * dt
        al = _alpha_at(t, sched_kind, c_alpha, exponent)
        th1 = theta[0]
        th2 = theta[1]
        g1 = 0.0
        g2 = 0.0
        for j in range(1, ny2 - 1):
            for i in range(1, nx2 - 1):
                ux = (cu[j, i + 1] - cu[j, i - 1]) / (2.0 * h_x)
                uy = (cu[j + 1, i] - cu[j - 1, i]) / (2.0 * h_y)
                lap = (cu[j, i + 1] - 2.0 * cu[j, i] + cu[j, i - 1]) / (h_x * h_x) + (
                    cu[j + 1, i] - 2.0 * cu[j, i] + cu[j - 1, i]
                ) / (h_y * h_y)
                nu[j, i] = cu[j, i] + dt * (-th1 * cu[j, i] * ux - th2 * cu[j, i] * uy + lap)

                px = (ch[j, i + 1] - ch[j, i - 1]) / (2.0 * h_x)
                py = (ch[j + 1, i] - ch[j - 1, i]) / (2.0 * h_y)
                laph = (ch[j, i + 1] - 2.0 * ch[j, i] + ch[j, i - 1]) / (h_x * h_x) + (
                    ch[j + 1, i] - 2.0 * ch[j, i] + ch[j - 1, i]
                ) / (h_y * h_y)
                nh[j, i] = ch[j, i] + dt * (
                    th1 * cu[j, i] * px + th2 * cu[j, i] * py + laph + (cu[j, i] - h[j, i])
                )

                g1 += ch[j, i] * cu[j, i] * ux
                g2 += ch[j, i] * cu[j, i] * uy

        g1 = -g1 * wq
        g2 = -g2 * wq
        t1n = th1 - al * (g1 + gamma * th1) * dt
        t2n = th2 - al * (g2 + gamma * th2) * dt
        if not (np.isfinite(t1n) and np.isfinite(t2n) and np.isfinite(g1) and np.isfinite(g2)):
            if flip == 1:
                _copy2d(u, un)
                _copy2d(uhat, uhn)
            return s + 1
        theta[0] = t1n
        theta[1] = t2n
        flip = 1 - flip
    if flip == 1:
        _copy2d(u, un)
        _copy2d(uhat, uhn)
    return 0
