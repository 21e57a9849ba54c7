import numpy as np
import pytest
import sympy as sp

from stdar import (BlockSaddle, BoundaryTooClose, MultiplierVector,
                   Tolerances, gradient, objective, project_feasible,
                   solve_constrained_minmax, solve_multipliers, sweep)
from conftest import make_problem, scalar_problem
from oracles import grid_minmax_two_stage_scalar, two_stage_value


def test_objective_hand_value(tol):
    p = scalar_problem(A=1, B=1, G=1, Q=0.2, R=1, Pf=1, N=1, alpha=1.0, x0=1.0)
    # phi = (Pi0 x^2 + alpha lam) / (2 abar) = (13/15 + 2) / 2
    phi = objective(p, [2.0], np.array([1.0]), tol=tol)
    assert phi == pytest.approx(13.0 / 30.0 + 1.0, abs=1e-12)


def test_value_recomputes_from_fresh_sweep(rng, tol):
    for _ in range(10):
        p = make_problem(rng)
        sol = solve_multipliers(p, p.x0, tol=tol)
        sw = sweep(p, sol.lam_star, tol)
        abar = p.schedule().alpha_bar
        val = (float(p.x0 @ sw.Pi[0] @ p.x0)
               + float(p.alpha @ sol.lam_star.lambdas)) / (2.0 * abar)
        assert sol.value == pytest.approx(val, rel=1e-10)


def test_origin_gradient_is_alpha_ratio(tol):
    p = scalar_problem(N=3, Pf=1.0, alpha=[0.5, 1.0, 2.0])
    lam = project_feasible(p, np.full(3, 2.0), margin=0.1, tol=tol)
    x0 = np.zeros(1)
    expect = p.alpha / (2.0 * p.alpha.sum())
    g_env = gradient(p, lam, x0, method="envelope", tol=tol)
    assert g_env == pytest.approx(expect, abs=0.0)
    g_fd = gradient(p, lam, x0, method="fd", tol=tol)
    assert g_fd == pytest.approx(expect, abs=1e-9)


def test_origin_solution_is_lower_corner(tol):
    p = scalar_problem(N=4, Pf=1.0, alpha=[1.0, 0.5, 2.0, 1.0])
    sol = solve_multipliers(p, np.zeros(1), tol=tol)
    corner = project_feasible(p, np.zeros(4), tol=tol)
    assert np.array_equal(sol.lam_star.lambdas, corner.lambdas)
    assert sol.converged
    assert sol.iterations == 0
    expect = float(p.alpha @ corner.lambdas) / (2.0 * p.alpha.sum())
    assert sol.value == pytest.approx(expect, rel=1e-14)
    assert all(sol.boundary_flags)


def minmax_from_single_stage(p, x):
    # the N=1 tail program in unit-sphere coordinates: scale w by sqrt(a),
    # divide the whole objective by a; the sphere multiplier is unchanged
    a = float(p.alpha[0])
    ra = np.sqrt(a)
    bs = BlockSaddle(M11=(p.B.T @ p.Pf @ p.B + p.R) / a,
                     M12=p.B.T @ p.Pf @ p.G / ra,
                     M22=p.G.T @ p.Pf @ p.G,
                     d1=p.B.T @ p.Pf @ p.A @ x / a,
                     d2=p.G.T @ p.Pf @ p.A @ x / ra)
    u0, w0, lam0, val = solve_constrained_minmax(bs)
    const = float(x @ (p.Q + p.A.T @ p.Pf @ p.A) @ x) / (2.0 * a)
    return u0, ra * w0, lam0, val + const


def test_single_stage_matches_minmax_reference(tol):
    p = scalar_problem(A=1, B=1, G=1, Q=0.2, R=1, Pf=1, N=1, alpha=1.0, x0=1.0)
    sol = solve_multipliers(p, p.x0, tol=tol)
    _, _, lam0, val = minmax_from_single_stage(p, p.x0)
    assert sol.value == pytest.approx(val, abs=1e-8)
    assert sol.lam_star.lambdas[0] == pytest.approx(lam0, abs=1e-7)


def test_single_stage_matches_minmax_random(rng, tol):
    for _ in range(15):
        p = make_problem(rng, N=1)
        sol = solve_multipliers(p, p.x0, tol=tol)
        _, _, lam0, val = minmax_from_single_stage(p, p.x0)
        assert sol.value == pytest.approx(val, abs=1e-7 * (1 + abs(val)))
        assert sol.lam_star.lambdas[0] == pytest.approx(lam0, abs=1e-6)


def test_two_stage_closed_form_scalar(rng, tol):
    for _ in range(8):
        A = float(rng.uniform(-1.2, 1.2)); B = float(rng.uniform(0.4, 1.5))
        G = float(rng.uniform(0.3, 1.2)); Q = float(rng.uniform(0.1, 1.0))
        R = float(rng.uniform(0.2, 1.5)); Pf = float(rng.uniform(0.1, 1.5))
        a0 = float(rng.uniform(0.3, 2.0)); a1 = float(rng.uniform(0.3, 2.0))
        x0 = float(rng.uniform(-2.0, 2.0))
        p = scalar_problem(A=A, B=B, G=G, Q=Q, R=R, Pf=Pf, N=2,
                           alpha=[a0, a1], x0=x0)
        sol = solve_multipliers(p, p.x0, tol=tol)
        cf = two_stage_value(p.A, p.B, p.G, p.Q, p.R, p.Pf, a0, a1, p.x0)
        gd = grid_minmax_two_stage_scalar(A, B, G, Q, R, Pf, a0, a1, x0)
        assert sol.value == pytest.approx(cf, abs=1e-7)
        assert sol.value == pytest.approx(gd, abs=2e-3)


def test_two_stage_closed_form_multivariable(rng, tol):
    for _ in range(8):
        p = make_problem(rng, N=2)
        sol = solve_multipliers(p, p.x0, tol=tol)
        cf = two_stage_value(p.A, p.B, p.G, p.Q, p.R, p.Pf,
                             float(p.alpha[0]), float(p.alpha[1]), p.x0)
        assert sol.value == pytest.approx(cf, abs=1e-7 * (1 + abs(cf)))


def test_envelope_matches_fd(rng, tol):
    for _ in range(10):
        p = make_problem(rng)
        lam = project_feasible(p, rng.uniform(0.5, 2.0, p.N), margin=0.05,
                               tol=tol)
        g_fd = gradient(p, lam, p.x0, method="fd", tol=tol)
        g_env = gradient(p, lam, p.x0, method="envelope", tol=tol)
        scale = np.abs(g_fd).max() + 1e-12
        assert np.abs(g_env - g_fd).max() <= 1e-4 * scale


def test_fd_matches_symbolic_scalar_derivative(tol):
    # N=1 scalar: phi(lam) = (Pi0(lam) x^2 + a lam) / (2a) with
    # Pi0 = Q + A^2 Pf - v' M(lam)^{-1} v, differentiated symbolically
    A, B, G, Q, R, Pf, a, x = 1.0, 1.0, 1.0, 0.2, 1.0, 1.0, 1.0, 1.0
    lam_s = sp.Symbol("lam")
    M = sp.Matrix([[B * Pf * B + R, B * Pf * G],
                   [G * Pf * B, G * Pf * G - lam_s]])
    v = sp.Matrix([B * Pf * A, G * Pf * A])
    Pi0 = Q + A * Pf * A - (v.T * M.inv() * v)[0, 0]
    phi = (Pi0 * x**2 + a * lam_s) / (2 * a)
    dphi = sp.lambdify(lam_s, sp.diff(phi, lam_s), "numpy")
    p = scalar_problem(A=A, B=B, G=G, Q=Q, R=R, Pf=Pf, N=1, alpha=a, x0=x)
    for lam0 in (1.5, 2.0, 3.0, 5.0):
        g = gradient(p, [lam0], np.array([x]), method="fd", tol=tol)
        assert g[0] == pytest.approx(float(dphi(lam0)), abs=1e-6)


def test_gradient_strict_raises_near_boundary(tol):
    p = scalar_problem(N=1, Pf=1.0)
    lam = project_feasible(p, [0.0], tol=tol)  # sits eps above the bound
    with pytest.raises(BoundaryTooClose):
        gradient(p, lam, p.x0, method="fd", tol=tol, strict=True)


def test_gradient_accepts_raw_arrays(tol):
    p = scalar_problem(N=2, Pf=1.0)
    g = gradient(p, np.array([3.0, 2.0]), np.array([1.0]), tol=tol)
    assert g.shape == (2,)


def test_convexity_sampling(rng, tol):
    p = make_problem(rng, n=2, m=2, q=2, N=4)
    x = p.x0
    pairs = 0
    while pairs < 200:
        la_raw = rng.uniform(0.2, 4.0, 4)
        lb_raw = rng.uniform(0.2, 4.0, 4)
        la = project_feasible(p, la_raw, margin=0.02, tol=tol).lambdas
        lb = project_feasible(p, lb_raw, margin=0.02, tol=tol).lambdas
        fa = objective(p, la, x, tol=tol)
        fb = objective(p, lb, x, tol=tol)
        skip = False
        for t in (0.25, 0.5, 0.75):
            mid = t * la + (1.0 - t) * lb
            proj = project_feasible(p, mid, margin=0.0, tol=tol).lambdas
            if np.abs(proj - mid).max() > 1e-12:
                skip = True  # the segment left the feasible set
                break
            fm = objective(p, proj, x, tol=tol)
            assert fm <= t * fa + (1.0 - t) * fb + 1e-9
        pairs += 0 if skip else 1


def lam_of_slack(p, s, tol):
    # lambda_j = bound_j(lambda_{j+1:}) + s_j built backward; the nested
    # set maps onto the nonnegative orthant in these coordinates
    lams = np.zeros(p.N)
    S = p.Pf
    for i in range(p.N - 1, -1, -1):
        b = float(np.linalg.eigvalsh(p.G.T @ S @ p.G)[-1])
        lams[i] = b + 1e-9 + s[i]
        if i > 0:
            S = sweep(p, MultiplierVector(lams[i:], stage_offset=i), tol).Pi[0]
    return lams


def test_optimality_certificate(rng, tol):
    # stationarity must be read in slack coordinates: an active nested
    # bound moves with the tail multipliers, so the raw lambda gradient
    # need not vanish at a constrained optimum
    for _ in range(10):
        p = make_problem(rng)
        sol = solve_multipliers(p, p.x0, tol=tol)
        assert sol.converged
        sw = sweep(p, sol.lam_star, tol)
        g = gradient(p, sol.lam_star, p.x0, method="fd", tol=tol)
        s = np.maximum(sol.lam_star.lambdas - sw.bounds - 1e-9, 0.0)
        active = s <= 1e-7 * (1.0 + np.abs(sw.bounds))
        scale = 1.0 + abs(sol.value)
        h = 1e-6

        def psi(sv):
            return objective(p, lam_of_slack(p, sv, tol), p.x0, tol=tol)

        for j in range(p.N):
            up = s.copy(); up[j] += h
            dpsi = (psi(up) - psi(s)) / h
            if active[j]:
                assert dpsi >= -1e-4 * scale
            else:
                dn = s.copy(); dn[j] = max(dn[j] - h, 0.0)
                central = (psi(up) - psi(dn)) / (up[j] - dn[j])
                assert abs(central) <= 1e-4 * scale
            # the componentwise box condition is only valid for stages with
            # no active earlier constraint (their bounds depend on lam_j)
            if not np.any(active[:j]):
                if active[j]:
                    assert g[j] >= -1e-4 * scale
                else:
                    assert abs(g[j]) <= 1e-4 * scale


def test_scale_coherence_single_stage(rng, tol):
    # alpha -> c alpha with x -> sqrt(c) x leaves the program invariant
    p = make_problem(rng, N=1)
    c = 4.0
    p_scaled = type(p)(A=p.A, B=p.B, G=p.G, Q=p.Q, R=p.R, Pf=p.Pf, N=1,
                       alpha=c * p.alpha, x0=p.x0)
    s1 = solve_multipliers(p, p.x0, tol=tol)
    s2 = solve_multipliers(p_scaled, np.sqrt(c) * p.x0, tol=tol)
    assert s2.lam_star.lambdas[0] == pytest.approx(s1.lam_star.lambdas[0],
                                                   rel=1e-6)
    assert s2.value == pytest.approx(s1.value, rel=1e-8)


def test_shrinking_horizon_consistency(rng, tol):
    from stdar import control_at, worst_disturbance_at
    for _ in range(5):
        p = make_problem(rng, N=4)
        sol0 = solve_multipliers(p, p.x0, tol=tol)
        u0 = control_at(p, p.x0, 0, sol0.lam_star, tol=tol)
        w0 = worst_disturbance_at(p, p.x0, 0, sol0.lam_star, u0, tol=tol)
        x1 = p.A @ p.x0 + p.B @ u0 + p.G @ w0
        sol1 = solve_multipliers(p, x1, k=1, tol=tol)
        assert sol1.lam_star.lambdas == pytest.approx(
            sol0.lam_star.lambdas[1:], abs=1e-6 * (1 + sol0.lam_star.lambdas.max()))


def test_max_iterations_returns_best_iterate(rng, tol):
    p = make_problem(rng, n=3, m=2, q=2, N=5)
    sol = solve_multipliers(p, 3.0 * p.x0, tol=tol, max_iter=1)
    assert not sol.converged
    assert sol.iterations >= 1
    assert np.isfinite(sol.value)


def test_warm_start_accepted(rng, tol):
    p = make_problem(rng, N=3)
    cold = solve_multipliers(p, p.x0, tol=tol)
    warm = solve_multipliers(p, p.x0, init=cold.lam_star.lambdas, tol=tol)
    assert warm.value == pytest.approx(cold.value, rel=1e-9)
    assert warm.iterations <= cold.iterations


def test_monotone_in_horizon_tail_value(tol):
    # sanity: the stage-1 restart never beats the full-horizon bound from
    # the same state under the same multiplier tail
    p = scalar_problem(N=3, Pf=1.0, x0=1.0)
    sol = solve_multipliers(p, p.x0, tol=tol)
    tail = solve_multipliers(p, p.x0, k=1, tol=tol)
    assert np.isfinite(tail.value)
    assert tail.lam_star.lambdas.shape == (2,)
