"""Pure-numpy implementations of the hot loops.

Every function here has a numba twin in ``_kernels_nb`` with the same
signature and semantics; ``_backend`` picks one of the two.
"""

import heapq

import numpy as np


def build_tables(k, K0, lamL, lamR, M0, M1, m0, m1, h):
    """Tabulate ``F_{d,t}`` and ``F_t`` at lag nodes ``0, h, ..., (k+K0)h`` for node ``k``."""
    n = k + K0
    lr = lamR[:n][::-1]
    dl = (lamL[:n][::-1] - lr) / h
    Fd = np.empty(n + 1)
    Ft = np.empty(n + 1)
    Fd[0] = 0.0
    Ft[0] = 0.0
    np.cumsum(lr * M0[:n] + dl * M1[:n], out=Fd[1:])
    np.cumsum(lr * m0[:n] + dl * m1[:n], out=Ft[1:])
    return Fd, Ft


def lookup(Fd, L, y):
    """Cell index and fraction of the generalised inverse; ``y`` is clipped to the table top."""
    top = Fd[L - 1]
    if y > top:
        y = top
    if y <= 0.0:
        return 0, 0.0
    j = int(np.searchsorted(Fd[:L], y, side="left"))
    if j == 0:
        return 0, 0.0
    return j, (y - Fd[j - 1]) / (Fd[j] - Fd[j - 1])


def h_value(Fd, Ft, L, lam, y):
    j, th = lookup(Fd, L, y)
    if j == 0:
        return lam - Ft[0]
    return lam - (Ft[j - 1] + th * (Ft[j] - Ft[j - 1]))


def node_sweep(q, k_first, K0, lamL, lamR, M0, M1, m0, m1, h, lam_node, cap):
    """Per node: ``H_t(q)``, waiting time ``F_{d,t}^{-1}(q)`` (capped), ``F_t`` at it, ``N_{F,t}``."""
    m = q.size
    H = np.empty(m)
    om = np.empty(m)
    ft = np.empty(m)
    nf = np.empty(m)
    for i in range(m):
        k = k_first + i
        Fd, Ft = build_tables(k, K0, lamL, lamR, M0, M1, m0, m1, h)
        L = Fd.size
        j, th = lookup(Fd, L, q[i])
        if j == 0:
            x, fx = 0.0, Ft[0]
        else:
            x = (j - 1 + th) * h
            fx = Ft[j - 1] + th * (Ft[j] - Ft[j - 1])
        nf[i] = Fd[L - 1]
        H[i] = lam_node[k] - fx
        ft[i] = fx
        om[i] = cap[k] if q[i] >= nf[i] and q[i] > 0.0 else x
    return H, om, ft, nf


def window_tables(k0, k1, K0, lamL, lamR, M0, M1, m0, m1, h):
    """Stack node tables for nodes ``k0..k1-1`` into padded 2-d arrays."""
    m = k1 - k0
    width = k1 - 1 + K0 + 1
    Fd2 = np.zeros((m, width))
    Ft2 = np.zeros((m, width))
    lens = np.empty(m, dtype=np.int64)
    for i in range(m):
        Fd, Ft = build_tables(k0 + i, K0, lamL, lamR, M0, M1, m0, m1, h)
        lens[i] = Fd.size
        Fd2[i, :Fd.size] = Fd
        Ft2[i, :Ft.size] = Ft
    return Fd2, Ft2, lens


def _window_weights(m0, m1, w):
    m = m1 - m0
    n = np.arange(m0 + 1, m1 + 1)[:, None]
    k = np.arange(m0 + 1, m1 + 1)[None, :]
    lag = n - k
    C = np.where(lag >= 0, w[np.clip(lag + 1, 0, w.size - 1)], 0.0)
    C = C + np.where(lag >= 1, w[np.clip(lag, 0, w.size - 1)], 0.0)
    return C.reshape(m, m)


def picard_window(m0, m1, Hv, qv, base, aw, gw, Fd2, Ft2, lens, lamw, x0, tol, max_iters):
    """Jacobi-Picard sweeps of the discrete key equation on nodes ``m0+1..m1``.

    Stops at the first iterate ``x`` with ``max|Psi(x) - x| < tol`` and
    returns it, so the reported distance is that iterate's own residual.
    With ``tol = 0`` and one sweep it returns ``Psi(x0)``.
    """
    m = m1 - m0
    hist = np.empty(m)
    kk = np.arange(m0 + 1)
    for i in range(m):
        n = m0 + 1 + i
        ca = aw[n - kk].copy()
        cg = gw[n - kk].copy()
        ca[1:] += aw[n - kk[1:] + 1]
        cg[1:] += gw[n - kk[1:] + 1]
        hist[i] = base[n] + (ca @ Hv[:m0 + 1] + cg @ qv[:m0 + 1])
    CA = _window_weights(m0, m1, aw)
    CG = _window_weights(m0, m1, gw)

    x = x0.astype(float).copy()
    Hx = np.empty(m)
    qx = np.empty(m)
    diff = np.inf
    prev = np.inf
    ratio = 0.0
    it = 0
    while it < max_iters:
        np.maximum(x - 1.0, 0.0, out=qx)
        for i in range(m):
            Hx[i] = h_value(Fd2[i], Ft2[i], lens[i], lamw[i], qx[i])
        new = hist + CA @ Hx + CG @ qx
        diff = float(np.max(np.abs(new - x)))
        it += 1
        if it > 2 and prev > 0.0:
            ratio = max(ratio, diff / prev)
        prev = diff
        if diff < tol:
            break
        x = new
    np.maximum(x - 1.0, 0.0, out=qx)
    for i in range(m):
        Hx[i] = h_value(Fd2[i], Ft2[i], lens[i], lamw[i], qx[i])
    return x, Hx, qx, it, diff, ratio


def fcfs(arrival, patience, service, free):
    """FCFS assignment with abandonment; ``free`` holds sorted server-free times."""
    m = arrival.size
    start = np.full(m, np.inf)
    depart = np.empty(m)
    served = np.zeros(m, dtype=np.bool_)
    heap = [float(v) for v in free]
    heapq.heapify(heap)
    for i in range(m):
        a = arrival[i]
        s = max(a, heap[0])
        if a + patience[i] <= s:
            depart[i] = a + patience[i]
        else:
            start[i] = s
            depart[i] = s + service[i]
            served[i] = True
            heapq.heapreplace(heap, depart[i])
    return start, depart, served
