"""Numba-compiled versions of the functions in ``_kernels_np``."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _fill_tables(k, K0, lamL, lamR, M0, M1, m0, m1, h, Fd, Ft):
    n = k + K0
    Fd[0] = 0.0
    Ft[0] = 0.0
    for c in range(n):
        ti = n - 1 - c
        lr = lamR[ti]
        dl = (lamL[ti] - lr) / h
        Fd[c + 1] = Fd[c] + (lr * M0[c] + dl * M1[c])
        Ft[c + 1] = Ft[c] + (lr * m0[c] + dl * m1[c])
    return n + 1


@njit(cache=True, nogil=True)
def build_tables(k, K0, lamL, lamR, M0, M1, m0, m1, h):
    Fd = np.empty(k + K0 + 1)
    Ft = np.empty(k + K0 + 1)
    _fill_tables(k, K0, lamL, lamR, M0, M1, m0, m1, h, Fd, Ft)
    return Fd, Ft


@njit(cache=True, nogil=True)
def lookup(Fd, L, y):
    top = Fd[L - 1]
    if y > top:
        y = top
    if y <= 0.0:
        return 0, 0.0
    lo = 0
    hi = L - 1
    while lo < hi:
        mid = (lo + hi) >> 1
        if Fd[mid] >= y:
            hi = mid
        else:
            lo = mid + 1
    j = lo
    if j == 0:
        return 0, 0.0
    return j, (y - Fd[j - 1]) / (Fd[j] - Fd[j - 1])


@njit(cache=True, nogil=True)
def h_value(Fd, Ft, L, lam, y):
    j, th = lookup(Fd, L, y)
    if j == 0:
        return lam - Ft[0]
    return lam - (Ft[j - 1] + th * (Ft[j] - Ft[j - 1]))


@njit(cache=True, nogil=True)
def node_sweep(q, k_first, K0, lamL, lamR, M0, M1, m0, m1, h, lam_node, cap):
    m = q.size
    H = np.empty(m)
    om = np.empty(m)
    ft = np.empty(m)
    nf = np.empty(m)
    width = k_first + m - 1 + K0 + 1
    Fd = np.empty(width)
    Ft = np.empty(width)
    for i in range(m):
        k = k_first + i
        L = _fill_tables(k, K0, lamL, lamR, M0, M1, m0, m1, h, Fd, Ft)
        j, th = lookup(Fd, L, q[i])
        if j == 0:
            x = 0.0
            fx = Ft[0]
        else:
            x = (j - 1 + th) * h
            fx = Ft[j - 1] + th * (Ft[j] - Ft[j - 1])
        nf[i] = Fd[L - 1]
        H[i] = lam_node[k] - fx
        ft[i] = fx
        om[i] = cap[k] if q[i] >= nf[i] and q[i] > 0.0 else x
    return H, om, ft, nf


@njit(cache=True, nogil=True)
def window_tables(k0, k1, K0, lamL, lamR, M0, M1, m0, m1, h):
    m = k1 - k0
    width = k1 - 1 + K0 + 1
    Fd2 = np.zeros((m, width))
    Ft2 = np.zeros((m, width))
    lens = np.empty(m, dtype=np.int64)
    for i in range(m):
        lens[i] = _fill_tables(k0 + i, K0, lamL, lamR, M0, M1, m0, m1, h, Fd2[i], Ft2[i])
    return Fd2, Ft2, lens


@njit(cache=True, nogil=True)
def picard_window(m0, m1, Hv, qv, base, aw, gw, Fd2, Ft2, lens, lamw, x0, tol, max_iters):
    m = m1 - m0
    hist = np.empty(m)
    for i in range(m):
        n = m0 + 1 + i
        s = 0.0
        for k in range(m0 + 1):
            ca = aw[n - k]
            cg = gw[n - k]
            if k >= 1:
                ca += aw[n - k + 1]
                cg += gw[n - k + 1]
            s += ca * Hv[k] + cg * qv[k]
        hist[i] = base[n] + s

    x = x0.copy()
    new = np.empty(m)
    Hx = np.empty(m)
    qx = np.empty(m)
    diff = np.inf
    prev = np.inf
    ratio = 0.0
    it = 0
    while it < max_iters:
        for i in range(m):
            qx[i] = max(x[i] - 1.0, 0.0)
            Hx[i] = h_value(Fd2[i], Ft2[i], lens[i], lamw[i], qx[i])
        diff = 0.0
        for i in range(m):
            n = m0 + 1 + i
            s = 0.0
            for ii in range(i + 1):
                k = m0 + 1 + ii
                ca = aw[n - k + 1]
                cg = gw[n - k + 1]
                if k < n:
                    ca += aw[n - k]
                    cg += gw[n - k]
                s += ca * Hx[ii] + cg * qx[ii]
            new[i] = hist[i] + s
            d = abs(new[i] - x[i])
            if d > diff:
                diff = d
        it += 1
        if it > 2 and prev > 0.0:
            ratio = max(ratio, diff / prev)
        prev = diff
        if diff < tol:
            break
        x[:] = new
    for i in range(m):
        qx[i] = max(x[i] - 1.0, 0.0)
        Hx[i] = h_value(Fd2[i], Ft2[i], lens[i], lamw[i], qx[i])
    return x, Hx, qx, it, diff, ratio


@njit(cache=True, nogil=True)
def _sift_down(heap, n):
    i = 0
    item = heap[0]
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and heap[c + 1] < heap[c]:
            c += 1
        if heap[c] < item:
            heap[i] = heap[c]
            i = c
        else:
            break
    heap[i] = item


@njit(cache=True, nogil=True)
def fcfs(arrival, patience, service, free):
    m = arrival.size
    start = np.full(m, np.inf)
    depart = np.empty(m)
    served = np.zeros(m, dtype=np.bool_)
    heap = np.sort(free.copy())
    n = heap.size
    for i in range(m):
        a = arrival[i]
        s = max(a, heap[0])
        if a + patience[i] <= s:
            depart[i] = a + patience[i]
        else:
            start[i] = s
            depart[i] = s + service[i]
            served[i] = True
            heap[0] = depart[i]
            _sift_down(heap, n)
    return start, depart, served
