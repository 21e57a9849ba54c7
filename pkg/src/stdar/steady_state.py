"""Steady-state regulator: bisection over the multiplier, fixed-point
Riccati solve, LMI feasibility certificate, and an LQR baseline.

The steady-state problem minimizes lambda subject to lambda >= ||G'Pi G||
and the stationarity g(lambda, Pi) = 0 of the one-stage Riccati map. We
recover (lambda_bar, Pi_bar) by bisection: a multiplier is feasible iff
the damped fixed-point iteration from Pf converges with the block matrix
M invertible throughout and lambda clearing ||G'Pi G||. The LMI check
then certifies the solution as positive semidefiniteness of an assembled
block matrix in (P, F) = (Pi_bar^{-1}, K_bar Pi_bar^{-1}).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from ._kernels import HAVE_NUMBA, fixed_point_compiled, fixed_point_numpy
from ._linalg import sym, top_eig
from .errors import (Diverged, FixedPointDiverged, NoFeasibleLambda,
                     SingularM, SingularPi)
from .problem import ProblemData, Tolerances

__all__ = ["SteadyStateSolution", "LmiCertificate", "solve_steady_state",
           "steady_riccati_fixed_point", "lmi_certify", "lqr_baseline"]

_FP_TOL = 1e-12
_FP_MAX_ITER = 100_000
_BISECT_TOL = 1e-9


@dataclass(frozen=True)
class SteadyStateSolution:
    lambda_bar: float
    Pi_bar: np.ndarray
    K_bar: np.ndarray          # steady gain, u = -K_bar x
    residual: float            # ||Pi_bar - riccati_map(Pi_bar)||_F
    boundary_gap: float        # lambda_bar - ||G' Pi_bar G||
    lmi_min_eig: float         # nan when the certificate was not assembled


@dataclass(frozen=True)
class LmiCertificate:
    """Block PSD certificate in the inverse variables.

    P = Pi_bar^{-1}, F = K_bar P (so the closed loop is A - B F P^{-1}).
    feasible reflects min_eig >= -tol_psd relative to the block scale.
    """

    P: np.ndarray
    F: np.ndarray
    lam: float
    assembled: np.ndarray
    min_eig: float
    feasible: bool


def _engine(name: str):
    if name == "auto":
        name = "compiled" if HAVE_NUMBA else "numpy"
    if name == "compiled":
        if not HAVE_NUMBA:
            raise ValueError("compiled engine requested but numba is unavailable")
        return fixed_point_compiled
    if name == "numpy":
        return fixed_point_numpy
    raise ValueError(f"unknown engine {name!r}")


def _riccati_map(A, B, G, Q, R, lam: float, Pi: np.ndarray) -> np.ndarray:
    SA = Pi @ A
    SB = Pi @ B
    SG = Pi @ G
    M = np.block([[B.T @ SB + R, B.T @ SG],
                  [SG.T @ B, G.T @ SG - lam * np.eye(G.shape[1])]])
    RH = np.vstack([B.T @ SA, G.T @ SA])
    return sym(Q + A.T @ SA - RH.T @ la.solve(M, RH))


def steady_riccati_fixed_point(p: ProblemData, lam: float,
                               engine: str = "auto",
                               max_iter: int = _FP_MAX_ITER) -> np.ndarray:
    """Damped fixed point of the Riccati map at a fixed multiplier."""
    run = _engine(engine)
    status, iters, Pi = run(p.A, p.B, p.G, p.Q, p.R, float(lam), p.Pf,
                            _FP_TOL, max_iter)
    if status == -2:
        raise SingularM(f"block matrix became singular at iteration {iters}")
    if status != 0:
        why = "diverged" if status == -1 else f"no fixed point in {max_iter} iterations"
        raise FixedPointDiverged(f"lambda={lam:.6g}: {why}")
    return Pi


def _probe(p: ProblemData, lam: float, run, tol: Tolerances):
    status, _, Pi = run(p.A, p.B, p.G, p.Q, p.R, float(lam), p.Pf,
                        _FP_TOL, _FP_MAX_ITER)
    if status != 0:
        return False, None
    if lam < top_eig(p.G.T @ Pi @ p.G) - tol.eps_boundary:
        return False, None
    return True, Pi


def solve_steady_state(p: ProblemData, tol: Tolerances | None = None,
                       engine: str = "auto") -> SteadyStateSolution:
    """Smallest feasible multiplier and its Riccati fixed point.

    Bisection to 1e-9 absolute; the upper bracket starts at
    10 (||G'Pf G|| + tr Q + tr R) and doubles at most 10 times.
    """
    tol = tol or Tolerances()
    run = _engine(engine)
    hi = 10.0 * (top_eig(p.G.T @ p.Pf @ p.G) + np.trace(p.Q) + np.trace(p.R))
    ok, Pi_hi = _probe(p, hi, run, tol)
    doublings = 0
    while not ok and doublings < 10:
        hi *= 2.0
        ok, Pi_hi = _probe(p, hi, run, tol)
        doublings += 1
    if not ok:
        raise NoFeasibleLambda(
            f"no feasible multiplier up to {hi:.6g} after {doublings} doublings")
    lo = 0.0
    Pi_bar = Pi_hi
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        ok, Pi_mid = _probe(p, mid, run, tol)
        if ok:
            hi = mid
            Pi_bar = Pi_mid
        else:
            lo = mid
    lambda_bar = hi

    S = Pi_bar
    M = np.block([[p.B.T @ S @ p.B + p.R, p.B.T @ S @ p.G],
                  [p.G.T @ S @ p.B, p.G.T @ S @ p.G - lambda_bar * np.eye(p.q)]])
    RH = np.vstack([p.B.T @ S @ p.A, p.G.T @ S @ p.A])
    try:
        KJ = la.solve(M, RH)
    except la.LinAlgError as exc:
        raise SingularM("block matrix singular at the recovered solution") from exc
    K_bar = KJ[:p.m, :].copy()
    residual = float(np.linalg.norm(
        Pi_bar - _riccati_map(p.A, p.B, p.G, p.Q, p.R, lambda_bar, Pi_bar)))
    boundary_gap = float(lambda_bar - top_eig(p.G.T @ Pi_bar @ p.G))
    sol = SteadyStateSolution(lambda_bar=float(lambda_bar), Pi_bar=Pi_bar,
                              K_bar=K_bar, residual=residual,
                              boundary_gap=boundary_gap,
                              lmi_min_eig=float("nan"))
    try:
        cert = lmi_certify(p, sol, tol)
    except SingularPi:
        return sol
    return dataclasses.replace(sol, lmi_min_eig=cert.min_eig)


def _sqrt_psd(M: np.ndarray) -> np.ndarray:
    w, V = la.eigh(sym(M))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def lmi_certify(p: ProblemData, sol: SteadyStateSolution,
                tol: Tolerances | None = None) -> LmiCertificate:
    """Assemble and check the block PSD certificate at a candidate solution.

    Block sizes (n, n, q, n+m); with P = Pi_bar^{-1} and F = K_bar P the
    matrix is

        [ P            (AP - BF)'    0        [P Qh, -F' Rh] ]
        [ AP - BF      P             G        0              ]
        [ 0            G'            lam I    0              ]
        [ .            0             0        I              ]

    with Qh = Q^{1/2}, Rh = R^{1/2}.
    """
    tol = tol or Tolerances()
    n, m, q = p.n, p.m, p.q
    w = la.eigvalsh(sym(sol.Pi_bar))
    if w[0] <= max(np.abs(w).max(), 1.0) * 1e-12:
        raise SingularPi(
            f"Pi_bar has eigenvalue {w[0]:.3e}; inverse certificate undefined")
    P = sym(la.inv(sym(sol.Pi_bar)))
    F = sol.K_bar @ P
    Qh = _sqrt_psd(p.Q)
    Rh = _sqrt_psd(p.R)
    closed = p.A @ P - p.B @ F
    top_right = np.hstack([P @ Qh, -F.T @ Rh])  # n x (n+m)
    z_nq = np.zeros((n, q))
    z_nm = np.zeros((n, n + m))
    z_qm = np.zeros((q, n + m))
    assembled = np.block([
        [P, closed.T, z_nq, top_right],
        [closed, P, p.G, z_nm],
        [z_nq.T, p.G.T, sol.lambda_bar * np.eye(q), z_qm],
        [top_right.T, z_nm.T, z_qm.T, np.eye(n + m)],
    ])
    assembled = sym(assembled)
    min_eig = float(la.eigvalsh(assembled)[0])
    scale = max(1.0, float(np.abs(assembled).max()))
    return LmiCertificate(P=P, F=F, lam=float(sol.lambda_bar),
                          assembled=assembled, min_eig=min_eig,
                          feasible=min_eig >= -tol.tol_psd * scale)


def lqr_baseline(p: ProblemData, rtol: float = 1e-12,
                 max_iter: int = _FP_MAX_ITER) -> np.ndarray:
    """Fixed point of the standard Riccati map (no disturbance channel)."""
    Pi = p.Pf.copy()
    for _ in range(max_iter):
        SA = Pi @ p.A
        SB = Pi @ p.B
        K = la.solve(p.B.T @ SB + p.R, p.B.T @ SA, assume_a="sym")
        Pn = sym(p.Q + p.A.T @ SA - (p.B.T @ SA).T @ K)
        res = float(np.linalg.norm(Pn - Pi))
        scale = 1.0 + float(np.linalg.norm(Pi))
        Pi = Pn
        if res <= rtol * scale:
            return Pi
        if res > 1e12 * scale:
            break
    raise Diverged("LQR Riccati iteration did not converge")
