"""Small dense linear-algebra helpers shared across modules."""
from __future__ import annotations

import numpy as np
import scipy.linalg as la

# Singular values / eigenvalues below CUTOFF * (largest magnitude) are
# treated as zero in pseudoinverse and nullspace computations.
PINV_CUTOFF = 1e-11


def sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def top_eig(M: np.ndarray) -> float:
    """Largest eigenvalue of the symmetrized matrix (= induced 2-norm for PSD)."""
    return float(la.eigvalsh(sym(M))[-1])


def min_eig(M: np.ndarray) -> float:
    return float(la.eigvalsh(sym(M))[0])


def solve_sym(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve M X = rhs for symmetric indefinite M (diagonal-pivoting factorization)."""
    return la.solve(M, rhs, assume_a="sym")


def eigh_split(M: np.ndarray, cutoff: float = PINV_CUTOFF):
    """Eigendecomposition of sym(M) with a zero/nonzero split.

    Returns (w, V, zero_mask) where zero_mask flags eigenvalues of magnitude
    at most cutoff * max|w|.
    """
    w, V = la.eigh(sym(M))
    scale = np.abs(w).max() if w.size else 0.0
    zero_mask = np.abs(w) <= cutoff * max(scale, 1e-300)
    return w, V, zero_mask


def pinv_sym(M: np.ndarray, cutoff: float = PINV_CUTOFF) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric matrix via eigh."""
    w, V, zero = eigh_split(M, cutoff)
    inv = np.where(zero, 0.0, np.divide(1.0, np.where(zero, 1.0, w)))
    return (V * inv) @ V.T


def pinv_apply(M: np.ndarray, b: np.ndarray, cutoff: float = PINV_CUTOFF) -> np.ndarray:
    """Apply the symmetric pseudoinverse of M to b."""
    w, V, zero = eigh_split(M, cutoff)
    c = V.T @ b
    c = np.where(zero, 0.0, c / np.where(zero, 1.0, w))
    return V @ c


def smallest_sv(M: np.ndarray) -> float:
    s = la.svdvals(M)
    return float(s[-1]) if s.size else 0.0
