"""Multiplier-parameterized backward Riccati sweep and its feasibility set.

For a multiplier vector lam = (lam_k, ..., lam_{N-1}) the recursion is

    Pi_N = Pf
    M_j  = [[B'Pi_{j+1}B + R,  B'Pi_{j+1}G        ],
            [G'Pi_{j+1}B,      G'Pi_{j+1}G - lam_j I]]
    Pi_j = Q + A'Pi_{j+1}A - [A'Pi_{j+1}B, A'Pi_{j+1}G] M_j^{-1} [.]'

with gains [K_j; J_j] = M_j^{-1} [B'Pi_{j+1}A; G'Pi_{j+1}A], applied as
u = -K_j x and w_bar = -J_j x. Feasibility is the nested set
lam_j >= ||G'Pi_{j+1}(lam_{j+1:})G||, which is not a product set: the bound
at stage j depends on the multipliers of all later stages.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from ._linalg import pinv_sym, sym, top_eig
from .errors import InfeasibleMultiplier, SingularM
from .problem import ProblemData, Tolerances


@dataclass(frozen=True)
class MultiplierVector:
    """Multipliers lam_k ... lam_{N-1} for a solve starting at stage k."""

    lambdas: np.ndarray
    stage_offset: int = 0

    def __post_init__(self):
        arr = np.asarray(self.lambdas, dtype=float).ravel().copy()
        arr.flags.writeable = False
        object.__setattr__(self, "lambdas", arr)
        object.__setattr__(self, "stage_offset", int(self.stage_offset))

    def __len__(self) -> int:
        return self.lambdas.shape[0]


@dataclass(frozen=True)
class RiccatiSweep:
    """Backward sweep output for stages k..N.

    Pi[i] is the cost-to-go matrix at stage k+i (so Pi[0] belongs to the
    sweep's start stage and Pi[-1] = Pf). M, K, J, bounds have one entry per
    stage k..N-1; bounds[i] = ||G'Pi_{k+i+1}G||, the feasibility threshold
    that lam_{k+i} must dominate.
    """

    Pi: tuple
    M: tuple
    K: tuple
    J: tuple
    lam: MultiplierVector
    bounds: np.ndarray

    @property
    def stage_offset(self) -> int:
        return self.lam.stage_offset

    def horizon(self) -> int:
        return len(self.lam)


def _stage_step(p: ProblemData, S: np.ndarray, lam_j: float, tol: Tolerances):
    """One backward step from Pi_{j+1} = S. Returns (Pi_j, M, K, J, bound)."""
    SB = S @ p.B
    SG = S @ p.G
    SA = S @ p.A
    GSG = p.G.T @ SG
    bound = top_eig(GSG)
    if lam_j < bound - tol.eps_boundary:
        raise InfeasibleMultiplier(
            f"lam = {lam_j:.9g} below its bound ||G'Pi G|| = {bound:.9g}")
    m = p.m
    M = np.block([[p.B.T @ SB + p.R, p.B.T @ SG],
                  [SG.T @ p.B, GSG - lam_j * np.eye(p.q)]])
    M = sym(M)
    rhs = np.vstack([p.B.T @ SA, p.G.T @ SA])
    try:
        KJ = la.solve(M, rhs, assume_a="sym")
    except la.LinAlgError as exc:
        raise SingularM(f"stage matrix singular at lam = {lam_j:.9g}") from exc
    resid = np.linalg.norm(M @ KJ - rhs)
    scale = 1.0 + np.linalg.norm(rhs) + np.abs(M).max() * np.linalg.norm(KJ)
    if resid > 1e-8 * scale:
        raise SingularM(
            f"stage solve residual {resid:.3e} at lam = {lam_j:.9g}")
    Pi = sym(p.Q + p.A.T @ SA - rhs.T @ KJ)
    return Pi, M, KJ[:m], KJ[m:], bound


def sweep(p: ProblemData, lam: MultiplierVector,
          tol: Tolerances | None = None) -> RiccatiSweep:
    """Run the backward recursion for the given multipliers.

    Raises InfeasibleMultiplier if some lam_j falls below its nested bound,
    SingularM if a stage matrix cannot be solved reliably.
    """
    tol = tol or Tolerances()
    n_stages = len(lam)
    k = lam.stage_offset
    if k + n_stages != p.N:
        raise ValueError(
            f"multiplier vector covers stages {k}..{k + n_stages - 1}, "
            f"expected tail end at {p.N - 1}")
    Pi = [None] * (n_stages + 1)
    M = [None] * n_stages
    K = [None] * n_stages
    J = [None] * n_stages
    bounds = np.zeros(n_stages)
    Pi[n_stages] = p.Pf
    for i in range(n_stages - 1, -1, -1):
        Pi[i], M[i], K[i], J[i], bounds[i] = _stage_step(
            p, Pi[i + 1], float(lam.lambdas[i]), tol)
    return RiccatiSweep(Pi=tuple(Pi), M=tuple(M), K=tuple(K), J=tuple(J),
                        lam=lam, bounds=bounds)


def project_feasible(p: ProblemData, lam_raw, margin: float | None = None,
                     stage_offset: int = 0,
                     tol: Tolerances | None = None) -> MultiplierVector:
    """Project a raw multiplier vector onto the feasible set, with margin.

    Single backward pass: each lam_j is raised to its bound (plus margin)
    computed under the already-projected later multipliers. Well-defined
    because the bound at stage j depends only on lam_{j+1:}. Feasible
    inputs are returned unchanged.
    """
    tol = tol or Tolerances()
    if margin is None:
        margin = tol.eps_boundary
    out = np.array(lam_raw, dtype=float).ravel().copy()
    n_stages = out.shape[0]
    if stage_offset + n_stages != p.N:
        raise ValueError("multiplier vector length inconsistent with horizon")
    S = p.Pf
    for i in range(n_stages - 1, -1, -1):
        bound = top_eig(p.G.T @ S @ p.G)
        if out[i] < bound + margin:
            out[i] = bound + margin
        if i > 0:
            S, _, _, _, _ = _stage_step(p, S, float(out[i]), tol)
    return MultiplierVector(lambdas=out, stage_offset=stage_offset)


def receq_crosscheck(sw: RiccatiSweep, p: ProblemData) -> float:
    """Largest Frobenius discrepancy of the closed-loop Riccati identity.

    Each Pi_j is recomputed as
        Qb + Ab'Pi_{j+1}Ab - Ab'Pi_{j+1}G (G'Pi_{j+1}G - lam_j I)^+ G'Pi_{j+1}Ab
    with Ab = A - B K_j and Qb = Q + K_j'R K_j, and compared against the
    sweep's Pi_j.
    """
    worst = 0.0
    for i in range(sw.horizon()):
        S = sw.Pi[i + 1]
        Ab = p.A - p.B @ sw.K[i]
        Qb = p.Q + sw.K[i].T @ p.R @ sw.K[i]
        SG = S @ p.G
        T = p.G.T @ SG - float(sw.lam.lambdas[i]) * np.eye(p.q)
        SAb = S @ Ab
        cross = SG.T @ Ab
        alt = sym(Qb + Ab.T @ SAb - cross.T @ (pinv_sym(T) @ cross))
        worst = max(worst, float(np.linalg.norm(alt - sw.Pi[i], ord="fro")))
    return worst
