"""Online state-feedback policy and closed-loop simulation.

Each stage re-solves the shrinking-horizon multiplier program at the
observed state (warm-started with the tail of the previous solution),
applies u_k = -K_k x_k from the sweep at the optimal multipliers, and, in
worst-case mode, injects the disturbance that attains the stage bound
||w_k||^2 = alpha_k exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from ._linalg import PINV_CUTOFF
from .errors import NoSphereIntersection
from .multiplier import solve_multipliers
from .problem import ProblemData, Tolerances
from .riccati import MultiplierVector, sweep


@dataclass(frozen=True)
class Trajectory:
    """Closed-loop record over one horizon.

    multipliers[k] is the head multiplier of the stage-k re-solve;
    stage_values[k] the stage-k program value at x_k. value_ratio is the
    realized cost over the realized disturbance energy (nan if the
    denominator vanishes).
    """

    states: np.ndarray        # (N+1, n)
    controls: np.ndarray      # (N, m)
    disturbances: np.ndarray  # (N, q)
    multipliers: np.ndarray   # (N,)
    stage_costs: np.ndarray   # (N,)
    terminal_cost: float
    value_ratio: float
    stage_values: np.ndarray  # (N,)
    converged: bool

    @property
    def total_cost(self) -> float:
        return float(self.stage_costs.sum() + self.terminal_cost)

    def to_csv(self, path) -> None:
        """Columnar export; the terminal row carries x_N and the terminal cost."""
        n = self.states.shape[1]
        m = self.controls.shape[1]
        q = self.disturbances.shape[1]
        cols = (["k"] + [f"x[{i}]" for i in range(n)]
                + [f"u[{i}]" for i in range(m)] + [f"w[{i}]" for i in range(q)]
                + ["lambda_k", "stage_cost"])
        fmt = lambda v: f"{v:.17g}"
        lines = [",".join(cols)]
        N = self.controls.shape[0]
        for k in range(N):
            row = ([str(k)] + [fmt(v) for v in self.states[k]]
                   + [fmt(v) for v in self.controls[k]]
                   + [fmt(v) for v in self.disturbances[k]]
                   + [fmt(self.multipliers[k]), fmt(self.stage_costs[k])])
            lines.append(",".join(row))
        tail = ([str(N)] + [fmt(v) for v in self.states[N]]
                + [""] * (m + q) + ["", fmt(self.terminal_cost)])
        lines.append(",".join(tail))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def control_at(p: ProblemData, x: np.ndarray, k: int,
               lam_star: MultiplierVector, tol: Tolerances | None = None) -> np.ndarray:
    """Stage-k control u = -K_k x at the supplied optimal multipliers."""
    tol = tol or Tolerances()
    x = np.asarray(x, dtype=float).ravel()
    if lam_star.stage_offset != k:
        raise ValueError(f"multipliers start at stage {lam_star.stage_offset}, not {k}")
    sw = sweep(p, lam_star, tol)
    return -(sw.K[0] @ x)


def _sphere_response(Pi_next: np.ndarray, G: np.ndarray, lam_k: float,
                     bound: float, drive: np.ndarray, alpha_k: float,
                     tol: Tolerances) -> np.ndarray:
    """Disturbance response (G'Pi G - lam I) w = -G'Pi drive, completed onto
    the sphere ||w||^2 = alpha_k."""
    GPG = G.T @ Pi_next @ G
    GPG = 0.5 * (GPG + GPG.T)
    d_w = G.T @ (Pi_next @ drive)
    radius = np.sqrt(alpha_k)
    near_boundary = (lam_k - bound) <= max(100.0 * tol.eps_boundary, 1e-7) * (1.0 + abs(bound))
    if near_boundary:
        # multiplier at its nested bound: pseudoinverse response plus a
        # completion along the top eigenspace of G'Pi G
        mu, V = la.eigh(GPG - bound * np.eye(GPG.shape[0]))
        # cutoff scaled to G'Pi G, not to the shifted spectrum: the shifted
        # matrix is numerically zero whenever G'Pi G is near-isotropic
        cut = PINV_CUTOFF * max(np.abs(mu).max(), abs(bound), 1e-300)
        zero = np.abs(mu) <= cut
        c = V.T @ d_w
        coef = np.where(zero, 0.0, -c / np.where(zero, 1.0, mu))
        wbar = V @ coef
        nrm2 = float(coef @ coef)
        gap2 = alpha_k - nrm2
        if gap2 < -1e-3 * alpha_k:
            raise NoSphereIntersection(
                f"response norm^2 {nrm2:.6e} exceeds the bound {alpha_k:.6e}")
        if np.any(zero):
            z = V[:, zero][:, -1]
            t = np.sqrt(max(0.0, gap2))
            if z @ d_w < 0.0:
                t = -t
            w = wbar + t * z
        else:
            w = wbar
    else:
        w = la.solve(GPG - lam_k * np.eye(GPG.shape[0]), -d_w, assume_a="sym")
        if float(w @ w) > alpha_k * (1.0 + 1e-3) or float(w @ w) < alpha_k * (1.0 - 1e-3):
            raise NoSphereIntersection(
                f"interior response norm^2 {float(w @ w):.6e} is off the "
                f"bound {alpha_k:.6e}; multipliers are not stage-optimal")
    nrm = np.linalg.norm(w)
    if nrm == 0.0:
        w = np.zeros(GPG.shape[0])
        w[0] = radius
        return w
    return w * (radius / nrm)


def worst_disturbance_at(p: ProblemData, x: np.ndarray, k: int,
                         lam_star: MultiplierVector, u: np.ndarray,
                         tol: Tolerances | None = None) -> np.ndarray:
    """Worst-case stage-k disturbance, exactly on the sphere ||w||^2 = alpha_k."""
    tol = tol or Tolerances()
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    if lam_star.stage_offset != k:
        raise ValueError(f"multipliers start at stage {lam_star.stage_offset}, not {k}")
    sw = sweep(p, lam_star, tol)
    drive = p.A @ x + p.B @ u
    return _sphere_response(sw.Pi[1], p.G, float(lam_star.lambdas[0]),
                            float(sw.bounds[0]), drive, float(p.alpha[k]), tol)


def rollout(p: ProblemData, mode: str = "worst_case", w_seq=None,
            x0: np.ndarray | None = None, tol: Tolerances | None = None,
            gradient_mode: str = "auto", max_iter: int = 5000) -> Trajectory:
    """Simulate the online policy over the full horizon.

    mode "worst_case" injects the bound-attaining disturbance, "zero" none,
    "external" the supplied w_seq (rejected if any ||w_k||^2 exceeds
    alpha_k beyond 1e-9 relative).
    """
    tol = tol or Tolerances()
    x = np.asarray(p.x0 if x0 is None else x0, dtype=float).ravel()
    if mode not in ("worst_case", "zero", "external"):
        raise ValueError(f"unknown rollout mode {mode!r}")
    if mode == "external":
        w_seq = np.atleast_2d(np.asarray(w_seq, dtype=float))
        if w_seq.shape != (p.N, p.q):
            raise ValueError(f"w_seq must be {p.N}x{p.q}, got {w_seq.shape}")
        norms2 = np.sum(w_seq * w_seq, axis=1)
        if np.any(norms2 > p.alpha * (1.0 + 1e-9)):
            raise ValueError("external disturbance exceeds its stage bound")

    states = np.zeros((p.N + 1, p.n))
    controls = np.zeros((p.N, p.m))
    disturbances = np.zeros((p.N, p.q))
    multipliers = np.zeros(p.N)
    stage_costs = np.zeros(p.N)
    stage_values = np.zeros(p.N)
    states[0] = x
    warm = None
    mode_grad = gradient_mode
    all_converged = True

    for k in range(p.N):
        sol = solve_multipliers(p, x, k=k, init=warm, tol=tol,
                                gradient_mode=mode_grad, max_iter=max_iter)
        all_converged &= sol.converged
        if k == 0 and gradient_mode == "auto" and sol.gradient_mode in ("fd", "envelope"):
            mode_grad = sol.gradient_mode  # reuse the stage-0 consistency gate
        sw = sweep(p, sol.lam_star, tol)
        u = -(sw.K[0] @ x)
        if mode == "worst_case":
            drive = p.A @ x + p.B @ u
            w = _sphere_response(sw.Pi[1], p.G, float(sol.lam_star.lambdas[0]),
                                 float(sw.bounds[0]), drive, float(p.alpha[k]), tol)
        elif mode == "zero":
            w = np.zeros(p.q)
        else:
            w = w_seq[k]
        controls[k] = u
        disturbances[k] = w
        multipliers[k] = sol.lam_star.lambdas[0]
        stage_costs[k] = p.stage_cost(x, u)
        stage_values[k] = sol.value
        x = p.A @ x + p.B @ u + p.G @ w
        states[k + 1] = x
        warm = sol.lam_star.lambdas[1:] if k < p.N - 1 else None

    terminal = p.terminal_cost(x)
    total = float(stage_costs.sum() + terminal)
    denom = float(np.sum(disturbances * disturbances))
    ratio = total / denom if denom > 0.0 else float("nan")
    return Trajectory(states=states, controls=controls,
                      disturbances=disturbances, multipliers=multipliers,
                      stage_costs=stage_costs, terminal_cost=terminal,
                      value_ratio=ratio, stage_values=stage_values,
                      converged=all_converged)
