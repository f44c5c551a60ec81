"""Pure-Python fixed-point iteration kernels.

Reference implementation of the hot loops; :mod:`csmatree._fpcore` is the
compiled twin with identical semantics. Both operate on plain arrays so the
wrapping layers stay backend-agnostic. Rates are packets/symbol, times in
symbols.
"""

from __future__ import annotations

import math

import numpy as np


def detailed_kernel(
    lam: np.ndarray,
    parent_idx: np.ndarray,
    order: np.ndarray,
    stages: np.ndarray,
    t_tx: float,
    n_c: int,
    n_t: int,
    link_per: float,
    tol: float,
    max_iter: int,
    damping: float,
):
    """Damped successive substitution on the full per-node MAC fixed point.

    ``order`` lists node positions leaves-first; ``parent_idx[i]`` is the
    position of i's parent or -1 when the parent is the sink. Returns
    (tau, alpha, nu, delta, iterations, residual, saturated) where ``tau`` is
    the perceived CCA attempt rate of each node and ``saturated`` counts
    nodes whose queue-busy probability clamped at 1 in the last iteration.
    """
    n = len(lam)
    tau = [0.0] * n
    alpha = [0.0] * n
    nu = [0.0] * n
    delta = [0.0] * n
    new_tau = [0.0] * n
    new_alpha = [0.0] * n
    beta = [0.0] * n
    service = [0.0] * n
    b_frac = [0.0] * n
    residual = math.inf
    saturated = 0
    iterations = 0

    for it in range(max_iter):
        iterations = it + 1
        total = 0.0
        for i in range(n):
            total += tau[i]

        # per-node algebra at the current (tau, alpha) point
        for i in range(n):
            a = alpha[i]
            bbar = 0.0
            gsum = 0.0
            ak = 1.0
            for k in range(n_c):
                bbar += ak * stages[k]
                gsum += ak
                ak *= a
            anc = ak  # a**n_c after the loop
            bt_i = gsum / bbar
            beta[i] = bt_i
            t_minus = total - tau[i]
            eta = bt_i / (bt_i + t_minus)
            c = 1.0 - math.exp(-12.0 * bt_i)
            bt = bt_i * t_tx
            den = eta + (1.0 - eta) * c + (1.0 - eta) * (1.0 - c) * bt
            new_alpha[i] = (1.0 - eta) * (1.0 - c) * bt / den

            pden = eta + (1.0 - eta) * c
            if pden > 0.0:
                r3 = eta * (1.0 - math.exp(-12.0 * t_minus))
                r4 = (1.0 - eta) * c
                p = (r3 + r4) / pden
            else:
                p = 0.0
            gam = p + (1.0 - p) * link_per
            r = gam * (1.0 - anc)
            sumr = 0.0
            rj = 1.0
            for _ in range(n_t):
                sumr += rj
                rj *= r
            delta[i] = anc * sumr + rj  # rj == r**n_t here
            tx_part = (1.0 - anc) * t_tx
            service[i] = (bbar + tx_part) * sumr
            b_frac[i] = bbar / (bbar + tx_part)
            nu[i] = lam[i]

        # goodput flow: leaves first, parents accumulate nu_child*(1-delta_child)
        for pos in order:
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
            d1 = abs(new_tau[i] - tau[i])
            d2 = abs(new_alpha[i] - alpha[i])
            if d1 > residual:
                residual = d1
            if d2 > residual:
                residual = d2
            tau[i] = (1.0 - damping) * tau[i] + damping * new_tau[i]
            alpha[i] = (1.0 - damping) * alpha[i] + damping * new_alpha[i]
        if residual < tol:
            break

    return (
        np.array(tau),
        np.array(alpha),
        np.array(nu),
        np.array(delta),
        iterations,
        residual,
        saturated,
    )


def vector_kernel(
    nu: np.ndarray,
    t_tx: float,
    n_c: int,
    tol: float,
    max_iter: int,
    damping: float,
    x0: np.ndarray | None = None,
):
    """Iterate the low-discard vector fixed point x_i = sum_{j != i} nu_j g(alpha_j).

    ``damping`` of 1.0 is plain substitution (a contraction in-regime).
    Returns (x, iterations, residual).
    """
    n = len(nu)
    x = [0.0] * n if x0 is None else [float(v) for v in x0]
    g = [0.0] * n
    residual = math.inf
    iterations = 0
    for it in range(max_iter):
        iterations = it + 1
        total = 0.0
        for j in range(n):
            a = t_tx * x[j] / (1.0 + t_tx * x[j])
            gsum = 0.0
            ak = 1.0
            for _ in range(n_c):
                gsum += ak
                ak *= a
            g[j] = nu[j] * gsum
            total += g[j]
        residual = 0.0
        for i in range(n):
            nx = total - g[i]
            d = abs(nx - x[i])
            if d > residual:
                residual = d
            x[i] = (1.0 - damping) * x[i] + damping * nx
        if residual < tol:
            break
    return np.array(x), iterations, residual
