"""Compiled fixed-point iteration kernels (Cython twin of _fppy)."""

from libc.math cimport exp, fabs, INFINITY

import numpy as np

cimport numpy as cnp

cnp.import_array()


def detailed_kernel(
    cnp.ndarray[cnp.float64_t, ndim=1] lam,
    cnp.ndarray[cnp.int32_t, ndim=1] parent_idx,
    cnp.ndarray[cnp.int32_t, ndim=1] order,
    cnp.ndarray[cnp.float64_t, ndim=1] stages,
    double t_tx,
    int n_c,
    int n_t,
    double link_per,
    double tol,
    int max_iter,
    double damping,
):
    cdef int n = lam.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tau = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] alpha = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] nu = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] delta = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] new_tau = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] new_alpha = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] beta = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] service = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] b_frac = np.zeros(n)
    cdef double residual = INFINITY
    cdef int saturated = 0
    cdef int iterations = 0
    cdef int it, i, k, pos, p_idx
    cdef double total, a, bbar, gsum, ak, anc, bt_i, t_minus, eta, c, bt
    cdef double den, pden, r3, r4, p, gam, r, sumr, rj, tx_part, q, b, d1, d2, nx

    for it in range(max_iter):
        iterations = it + 1
        total = 0.0
        for i in range(n):
            total += tau[i]

        for i in range(n):
            a = alpha[i]
            bbar = 0.0
            gsum = 0.0
            ak = 1.0
            for k in range(n_c):
                bbar += ak * stages[k]
                gsum += ak
                ak *= a
            anc = ak
            bt_i = gsum / bbar
            beta[i] = bt_i
            t_minus = total - tau[i]
            eta = bt_i / (bt_i + t_minus)
            c = 1.0 - exp(-12.0 * bt_i)
            bt = bt_i * t_tx
            den = eta + (1.0 - eta) * c + (1.0 - eta) * (1.0 - c) * bt
            new_alpha[i] = (1.0 - eta) * (1.0 - c) * bt / den

            pden = eta + (1.0 - eta) * c
            if pden > 0.0:
                r3 = eta * (1.0 - exp(-12.0 * t_minus))
                r4 = (1.0 - eta) * c
                p = (r3 + r4) / pden
            else:
                p = 0.0
            gam = p + (1.0 - p) * link_per
            r = gam * (1.0 - anc)
            sumr = 0.0
            rj = 1.0
            for k in range(n_t):
                sumr += rj
                rj *= r
            delta[i] = anc * sumr + rj
            tx_part = (1.0 - anc) * t_tx
            service[i] = (bbar + tx_part) * sumr
            b_frac[i] = bbar / (bbar + tx_part)
            nu[i] = lam[i]

        for k in range(n):
            pos = order[k]
            p_idx = parent_idx[pos]
            if p_idx >= 0:
                nu[p_idx] += nu[pos] * (1.0 - delta[pos])

        saturated = 0
        for i in range(n):
            q = nu[i] * service[i]
            if q >= 1.0:
                q = 1.0
                saturated += 1
            b = b_frac[i]
            new_tau[i] = beta[i] * b * q / (1.0 - q + q * b)

        residual = 0.0
        for i in range(n):
            d1 = fabs(new_tau[i] - tau[i])
            d2 = fabs(new_alpha[i] - alpha[i])
            if d1 > residual:
                residual = d1
            if d2 > residual:
                residual = d2
            tau[i] = (1.0 - damping) * tau[i] + damping * new_tau[i]
            alpha[i] = (1.0 - damping) * alpha[i] + damping * new_alpha[i]
        if residual < tol:
            break

    return tau, alpha, nu, delta, iterations, residual, saturated


def vector_kernel(
    cnp.ndarray[cnp.float64_t, ndim=1] nu,
    double t_tx,
    int n_c,
    double tol,
    int max_iter,
    double damping,
    x0=None,
):
    cdef int n = nu.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x
    if x0 is None:
        x = np.zeros(n)
    else:
        x = np.asarray(x0, dtype=np.float64).copy()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g = np.zeros(n)
    cdef double residual = INFINITY
    cdef int iterations = 0
    cdef int it, i, j, k
    cdef double total, a, gsum, ak, nx, d

    for it in range(max_iter):
        iterations = it + 1
        total = 0.0
        for j in range(n):
            a = t_tx * x[j] / (1.0 + t_tx * x[j])
            gsum = 0.0
            ak = 1.0
            for k in range(n_c):
                gsum += ak
                ak *= a
            g[j] = nu[j] * gsum
            total += g[j]
        residual = 0.0
        for i in range(n):
            nx = total - g[i]
            d = fabs(nx - x[i])
            if d > residual:
                residual = d
            x[i] = (1.0 - damping) * x[i] + damping * nx
        if residual < tol:
            break
    return x, iterations, residual
