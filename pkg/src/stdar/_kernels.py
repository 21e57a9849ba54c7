"""Damped fixed-point iteration engines for the steady-state recursion.

Two interchangeable engines compute the same iteration

    Pi <- sym(Q + A'SA - [B'SA; G'SA]' M^{-1} [B'SA; G'SA]),
    M  =  [[B'SB + R, B'SG], [G'SB, G'SG - lam I]],  S = Pi,

from Pi = Pf, damping 0.5 when the residual grows. The compiled engine is
a single allocation-free numba kernel (hand-rolled products and Gaussian
elimination) so its cost scales with the linear-algebra work rather than
per-call dispatch overhead; the numpy engine is the plain vectorized twin
used as a reference and as the fallback when numba is unavailable.

Status codes: 0 converged, 1 iteration cap, -1 diverged, -2 singular M.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as la

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap


@njit(cache=True, fastmath=False)
def _fp_kernel(A, B, G, Q, R, lam, Pf, tol, max_iter,
               Pi, Pn, SA, SB, SG, M, RH, KJ):  # pragma: no cover - compiled
    n = A.shape[0]
    m = B.shape[1]
    q = G.shape[1]
    p = m + q
    for i in range(n):
        for j in range(n):
            Pi[i, j] = Pf[i, j]
    prev_res = 1e300
    it = 0
    while it < max_iter:
        for i in range(n):
            for j in range(n):
                s = 0.0
                for k in range(n):
                    s += Pi[i, k] * A[k, j]
                SA[i, j] = s
            for j in range(m):
                s = 0.0
                for k in range(n):
                    s += Pi[i, k] * B[k, j]
                SB[i, j] = s
            for j in range(q):
                s = 0.0
                for k in range(n):
                    s += Pi[i, k] * G[k, j]
                SG[i, j] = s
        for i in range(m):
            for j in range(m):
                s = R[i, j]
                for k in range(n):
                    s += B[k, i] * SB[k, j]
                M[i, j] = s
            for j in range(q):
                s = 0.0
                for k in range(n):
                    s += B[k, i] * SG[k, j]
                M[i, m + j] = s
                M[m + j, i] = s
            for j in range(n):
                s = 0.0
                for k in range(n):
                    s += B[k, i] * SA[k, j]
                RH[i, j] = s
        for i in range(q):
            for j in range(q):
                s = -lam if i == j else 0.0
                for k in range(n):
                    s += G[k, i] * SG[k, j]
                M[m + i, m + j] = s
            for j in range(n):
                s = 0.0
                for k in range(n):
                    s += G[k, i] * SA[k, j]
                RH[m + i, j] = s
        for i in range(p):
            for j in range(n):
                KJ[i, j] = RH[i, j]
        # Gaussian elimination with partial pivoting; M is scratch
        ok = True
        for col in range(p):
            piv = col
            big = abs(M[col, col])
            for r2 in range(col + 1, p):
                a2 = abs(M[r2, col])
                if a2 > big:
                    big = a2
                    piv = r2
            if big < 1e-300:
                ok = False
                break
            if piv != col:
                for c2 in range(p):
                    t = M[col, c2]
                    M[col, c2] = M[piv, c2]
                    M[piv, c2] = t
                for c2 in range(n):
                    t = KJ[col, c2]
                    KJ[col, c2] = KJ[piv, c2]
                    KJ[piv, c2] = t
            for r2 in range(col + 1, p):
                f = M[r2, col] / M[col, col]
                if f != 0.0:
                    for c2 in range(col + 1, p):
                        M[r2, c2] -= f * M[col, c2]
                    for c2 in range(n):
                        KJ[r2, c2] -= f * KJ[col, c2]
        if not ok:
            return -2, it
        for col in range(p - 1, -1, -1):
            for c2 in range(n):
                s = KJ[col, c2]
                for r2 in range(col + 1, p):
                    s -= M[col, r2] * KJ[r2, c2]
                KJ[col, c2] = s / M[col, col]
        for i in range(n):
            for j in range(n):
                s = Q[i, j]
                for k in range(n):
                    s += A[k, i] * SA[k, j]
                for k in range(p):
                    s -= RH[k, i] * KJ[k, j]
                Pn[i, j] = s
        res = 0.0
        scale = 1.0
        for i in range(n):
            for j in range(n):
                v = 0.5 * (Pn[i, j] + Pn[j, i])
                Pn[i, j] = v
                d = v - Pi[i, j]
                res += d * d
                scale += Pi[i, j] * Pi[i, j]
        res = np.sqrt(res)
        scale = np.sqrt(scale)
        if res <= tol * scale:
            for i in range(n):
                for j in range(n):
                    Pi[i, j] = Pn[i, j]
            return 0, it
        if res > 1e12 * scale:
            return -1, it
        if res > prev_res:
            for i in range(n):
                for j in range(n):
                    Pi[i, j] = 0.5 * (Pn[i, j] + Pi[i, j])
        else:
            for i in range(n):
                for j in range(n):
                    Pi[i, j] = Pn[i, j]
        prev_res = res
        it += 1
    return 1, max_iter


class _Workspace:
    """Reusable buffers for the compiled kernel, keyed by (n, m, q)."""

    def __init__(self, n: int, m: int, q: int):
        p = m + q
        self.bufs = (np.empty((n, n)), np.empty((n, n)), np.empty((n, n)),
                     np.empty((n, m)), np.empty((n, q)), np.empty((p, p)),
                     np.empty((p, n)), np.empty((p, n)))


_WS_CACHE: dict[tuple[int, int, int], _Workspace] = {}


def fixed_point_compiled(A, B, G, Q, R, lam, Pf, tol, max_iter):
    key = (A.shape[0], B.shape[1], G.shape[1])
    ws = _WS_CACHE.get(key)
    if ws is None:
        ws = _WS_CACHE[key] = _Workspace(*key)
    status, iters = _fp_kernel(A, B, G, Q, R, float(lam), Pf,
                               float(tol), int(max_iter), *ws.bufs)
    return int(status), int(iters), ws.bufs[0].copy()


def fixed_point_numpy(A, B, G, Q, R, lam, Pf, tol, max_iter):
    n = A.shape[0]
    q = G.shape[1]
    Iq = np.eye(q)
    Pi = Pf.copy()
    prev_res = np.inf
    for it in range(int(max_iter)):
        SA = Pi @ A
        SB = Pi @ B
        SG = Pi @ G
        M = np.block([[B.T @ SB + R, B.T @ SG],
                      [SG.T @ B, G.T @ SG - lam * Iq]])
        RH = np.vstack([B.T @ SA, G.T @ SA])
        try:
            KJ = la.solve(M, RH)
        except la.LinAlgError:
            return -2, it, Pi
        Pn = Q + A.T @ SA - RH.T @ KJ
        Pn = 0.5 * (Pn + Pn.T)
        diff = Pn - Pi
        res = float(np.sqrt(np.sum(diff * diff)))
        scale = float(np.sqrt(1.0 + np.sum(Pi * Pi)))
        if res <= tol * scale:
            return 0, it, Pn
        if res > 1e12 * scale:
            return -1, it, Pi
        Pi = 0.5 * (Pn + Pi) if res > prev_res else Pn
        prev_res = res
    return 1, int(max_iter), Pi
