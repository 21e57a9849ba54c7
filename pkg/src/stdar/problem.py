"""Problem data, tolerances, and structural validation.

The regulated system is x+ = A x + B u + G w with stage cost
l(x, u) = (x'Qx + u'Ru)/2, terminal cost x'Pf x / 2, and a per-stage
disturbance bound ||w_k||^2 <= alpha_k over a horizon of N stages.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AssumptionViolated, DimensionMismatch

_SYM_RTOL = 1e-8


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _as_vector(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be a vector, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _symmetrized(M: np.ndarray, name: str) -> np.ndarray:
    skew = np.linalg.norm(M - M.T)
    if skew > _SYM_RTOL * (1.0 + np.linalg.norm(M)):
        raise ValueError(f"{name} is not symmetric (||M - M'|| = {skew:.3e})")
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances used throughout the toolkit."""

    tol_psd: float = 1e-9        # eigenvalue floor for PSD checks
    tol_residual: float = 1e-10  # Riccati / fixed-point residual target
    tol_range: float = 1e-10     # range-inclusion test
    tol_zero: float = 1e-12      # nonzero-matrix test
    eps_boundary: float = 1e-9   # margin kept above ||G' Pi G|| in the interior
    fd_step: float = 1e-6        # finite-difference base step

    def __post_init__(self):
        for name in ("tol_psd", "tol_residual", "tol_range", "tol_zero",
                     "eps_boundary", "fd_step"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class StageBoundSchedule:
    """Per-stage disturbance bounds alpha_k and their aggregates."""

    alpha: np.ndarray       # length N, all positive
    alpha_bar: float        # sum of alpha
    suffix_sums: np.ndarray  # length N+1; entry k is sum_{j>=k} alpha_j

    @classmethod
    def from_alpha(cls, alpha: np.ndarray) -> "StageBoundSchedule":
        alpha = np.asarray(alpha, dtype=float)
        suffix = np.concatenate([np.cumsum(alpha[::-1])[::-1], [0.0]])
        return cls(alpha=alpha, alpha_bar=float(alpha.sum()), suffix_sums=suffix)


@dataclass(frozen=True)
class ProblemData:
    """Immutable problem description. Matrices are dense, double precision.

    alpha may be passed as a scalar (broadcast over the horizon) or a
    length-N sequence. Matrices accept scalars for 1x1 systems.
    """

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Pf: np.ndarray
    N: int
    alpha: np.ndarray
    x0: np.ndarray = field(default=None)

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        G = _as_matrix(self.G, "G")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
        if G.shape[0] != n:
            raise DimensionMismatch(f"G has {G.shape[0]} rows, expected {n}")
        Q = _symmetrized(_as_matrix(self.Q, "Q"), "Q")
        R = _symmetrized(_as_matrix(self.R, "R"), "R")
        Pf = _symmetrized(_as_matrix(self.Pf, "Pf"), "Pf")
        if Q.shape != (n, n):
            raise DimensionMismatch(f"Q must be {n}x{n}, got {Q.shape}")
        if R.shape != (B.shape[1], B.shape[1]):
            raise DimensionMismatch(f"R must be {B.shape[1]}x{B.shape[1]}, got {R.shape}")
        if Pf.shape != (n, n):
            raise DimensionMismatch(f"Pf must be {n}x{n}, got {Pf.shape}")
        N = int(self.N)
        if N < 1:
            raise ValueError("N must be at least 1")
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.ndim == 0:
            alpha = np.full(N, float(alpha))
        alpha = _as_vector(alpha, "alpha")
        if alpha.shape != (N,):
            raise DimensionMismatch(f"alpha must have length {N}, got {alpha.shape[0]}")
        if np.any(alpha <= 0.0):
            raise ValueError("all stage bounds alpha_k must be strictly positive")
        x0 = self.x0
        if x0 is None:
            x0 = np.zeros(n)
        x0 = _as_vector(x0, "x0")
        if x0.shape != (n,):
            raise DimensionMismatch(f"x0 must have length {n}, got {x0.shape[0]}")
        for name, arr in (("A", A), ("B", B), ("G", G), ("Q", Q), ("R", R),
                          ("Pf", Pf), ("alpha", alpha), ("x0", x0)):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "N", N)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.G.shape[1]

    def schedule(self) -> StageBoundSchedule:
        return StageBoundSchedule.from_alpha(self.alpha)

    def stage_cost(self, x: np.ndarray, u: np.ndarray) -> float:
        return 0.5 * float(x @ self.Q @ x + u @ self.R @ u)

    def terminal_cost(self, x: np.ndarray) -> float:
        return 0.5 * float(x @ self.Pf @ x)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the structural checks. Hard failures raise instead."""

    stabilizable: bool
    detectable: bool
    range_inclusion: bool
    terminal_coupling: bool
    strict_weights: bool
    degenerate_terminal: bool
    warnings: tuple[str, ...]


def _pbh_unit_circle_rank(A: np.ndarray, other: np.ndarray, stack_rows: bool) -> bool:
    """PBH test at every eigenvalue of A on or outside the unit circle."""
    n = A.shape[0]
    for mu in np.linalg.eigvals(A):
        if abs(mu) < 1.0 - 1e-12:
            continue
        shifted = mu * np.eye(n) - A
        test = np.vstack([shifted, other]) if stack_rows else np.hstack([shifted, other])
        if np.linalg.matrix_rank(test) < n:
            return False
    return True


def validate_problem(p: ProblemData, tol: Tolerances | None = None,
                     allow_degenerate_terminal: bool = False) -> ValidationReport:
    """Check the structural assumptions on the problem data.

    Range inclusion range(G) <= range(B) and terminal coupling G'Pf G != 0
    are hard errors (the latter downgraded to a warning under
    allow_degenerate_terminal). Stabilizability, detectability, and strict
    positive definiteness of Q and Pf are reported as warnings only.
    """
    tol = tol or Tolerances()
    warnings: list[str] = []

    for name, M, floor in (("Q", p.Q, -tol.tol_psd), ("Pf", p.Pf, -tol.tol_psd)):
        if np.linalg.eigvalsh(M)[0] < floor:
            raise AssumptionViolated(f"{name} positive semidefinite",
                                     f"min eigenvalue {np.linalg.eigvalsh(M)[0]:.3e}")
    if np.linalg.eigvalsh(p.R)[0] <= tol.tol_psd:
        raise AssumptionViolated("R positive definite",
                                 f"min eigenvalue {np.linalg.eigvalsh(p.R)[0]:.3e}")

    stabilizable = _pbh_unit_circle_rank(p.A, p.B, stack_rows=False)
    if not stabilizable:
        warnings.append("(A, B) fails the PBH stabilizability test on the unit circle")
    detectable = _pbh_unit_circle_rank(p.A, p.Q, stack_rows=True)
    if not detectable:
        warnings.append("(A, Q) fails the PBH detectability test on the unit circle")

    # range(G) <= range(B), tested as ||(I - B B+) G|| <= tol_range
    resid = np.linalg.norm(p.G - p.B @ (np.linalg.pinv(p.B) @ p.G))
    range_inclusion = resid <= tol.tol_range * max(1.0, np.linalg.norm(p.G))
    if not range_inclusion:
        raise AssumptionViolated("range inclusion",
                                 f"||(I - B B+) G|| = {resid:.3e}")

    coupling = np.linalg.norm(p.G.T @ p.Pf @ p.G)
    terminal_coupling = coupling > tol.tol_zero
    degenerate_terminal = not terminal_coupling
    if degenerate_terminal:
        if not allow_degenerate_terminal:
            raise AssumptionViolated("G'Pf G nonzero",
                                     f"||G'Pf G|| = {coupling:.3e}")
        warnings.append("G'Pf G = 0: terminal stage handled through the "
                        "convexity boundary argument (degenerate terminal)")

    strict_weights = (np.linalg.eigvalsh(p.Q)[0] > tol.tol_psd
                      and np.linalg.eigvalsh(p.Pf)[0] > tol.tol_psd)
    if not strict_weights:
        warnings.append("Q or Pf is not strictly positive definite; "
                        "steady-state uniqueness arguments may not apply")

    return ValidationReport(
        stabilizable=stabilizable,
        detectable=detectable,
        range_inclusion=range_inclusion,
        terminal_coupling=terminal_coupling,
        strict_weights=strict_weights,
        degenerate_terminal=degenerate_terminal,
        warnings=tuple(warnings),
    )
