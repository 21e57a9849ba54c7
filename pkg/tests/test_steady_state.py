import dataclasses

import numpy as np
import pytest
import scipy.linalg as la

from stdar import (Tolerances, lmi_certify, lqr_baseline, solve_steady_state,
                   steady_riccati_fixed_point)
from stdar._kernels import HAVE_NUMBA
from stdar._linalg import top_eig
from stdar.errors import FixedPointDiverged, SingularM, SingularPi
from stdar.problem import ProblemData
from conftest import make_problem, scalar_problem
from oracles import steady_scalar_grid, steady_scalar_pi_at


def steady_scalar(A=1.0, B=1.0, G=1.0, Q=0.2, R=1.0, Pf=1.0):
    # N, alpha, x0 are irrelevant to the steady-state program
    return scalar_problem(A=A, B=B, G=G, Q=Q, R=R, Pf=Pf, N=2,
                          alpha=1.0, x0=1.0)


def test_scalar_reference_solution():
    # lam_bar = Pi_bar = 1.2 and K_bar = 1 for the unit-coefficient system
    # with Q = 0.2; the constraint is boundary-active there
    p = steady_scalar()
    sol = solve_steady_state(p)
    assert sol.lambda_bar == pytest.approx(1.2, abs=1e-6)
    assert sol.Pi_bar[0, 0] == pytest.approx(1.2, abs=1e-4)
    assert sol.K_bar[0, 0] == pytest.approx(1.0, abs=1e-4)
    assert sol.residual <= 1e-8
    assert sol.boundary_gap >= -1e-9 * (1.0 + sol.lambda_bar)
    assert sol.boundary_gap <= 1e-2
    assert sol.lmi_min_eig >= -1e-7


def test_scalar_grid_oracle_agrees():
    # the multiplier agrees tightly; Pi is compared at a common slightly
    # interior lambda because both iterations suffer critical slowing
    # exactly at the boundary-active fixed point
    p = steady_scalar(A=0.5)
    sol = solve_steady_state(p)
    lam_g, pi_g = steady_scalar_grid(0.5, 1.0, 1.0, 0.2, 1.0, 1.0)
    assert sol.lambda_bar == pytest.approx(lam_g, abs=1e-6)
    lam_c = sol.lambda_bar + 1e-6
    pi_o = steady_scalar_pi_at(0.5, 1.0, 1.0, 0.2, 1.0, 1.0, lam_c)
    pi_s = steady_riccati_fixed_point(p, lam_c)[0, 0]
    assert pi_s == pytest.approx(pi_o, abs=1e-6)
    assert sol.Pi_bar[0, 0] == pytest.approx(pi_g, abs=1e-3)


def test_weight_homogeneity(rng):
    # scaling (Q, R, Pf) by c scales (lambda_bar, Pi_bar) by c
    c = 4.0
    for _ in range(3):
        p = make_problem(rng, n=2)
        ps = ProblemData(A=p.A, B=p.B, G=p.G, Q=c * p.Q, R=c * p.R,
                         Pf=c * p.Pf, N=p.N, alpha=p.alpha, x0=p.x0)
        sol = solve_steady_state(p)
        sols = solve_steady_state(ps)
        assert sols.lambda_bar == pytest.approx(c * sol.lambda_bar, rel=1e-7)
        assert sols.Pi_bar == pytest.approx(c * sol.Pi_bar, rel=1e-3)


def test_lqr_baseline_closed_forms():
    p = steady_scalar()
    P = lqr_baseline(p)
    assert P[0, 0] == pytest.approx((0.2 + np.sqrt(0.84)) / 2.0, abs=1e-10)
    pz = steady_scalar(Q=0.0, Pf=0.0)
    assert lqr_baseline(pz)[0, 0] == pytest.approx(0.0, abs=1e-12)
    pa = steady_scalar(A=0.0)
    assert lqr_baseline(pa)[0, 0] == pytest.approx(0.2, abs=1e-10)


def test_disturbance_never_cheapens_regulation(rng):
    # Pi_bar dominates the disturbance-free Riccati solution
    for _ in range(5):
        p = make_problem(rng, n=int(rng.integers(1, 4)))
        sol = solve_steady_state(p)
        P_lqr = lqr_baseline(p)
        assert la.eigvalsh(sol.Pi_bar - P_lqr)[0] >= -1e-8


def test_interior_fixed_point_solves_dare(rng):
    # at an interior multiplier the fixed point is the DARE solution for
    # the extended input [B G] with weight blkdiag(R, -lam I)
    for _ in range(5):
        p = make_problem(rng, n=int(rng.integers(1, 4)))
        sol = solve_steady_state(p)
        lam = sol.lambda_bar + 0.1
        Pi = steady_riccati_fixed_point(p, lam)
        Bt = np.hstack([p.B, p.G])
        Rt = la.block_diag(p.R, -lam * np.eye(p.q))
        X = la.solve_discrete_are(p.A, Bt, p.Q, Rt)
        assert np.abs(X - Pi).max() <= 1e-8 * (1.0 + np.abs(X).max())


@pytest.mark.skipif(not HAVE_NUMBA, reason="compiled engine unavailable")
def test_engines_agree(rng):
    for _ in range(3):
        p = make_problem(rng, n=2)
        sol = solve_steady_state(p)
        lam = sol.lambda_bar + 0.05
        Pi_np = steady_riccati_fixed_point(p, lam, engine="numpy")
        Pi_nb = steady_riccati_fixed_point(p, lam, engine="compiled")
        assert np.abs(Pi_np - Pi_nb).max() <= 1e-10 * (1.0 + np.abs(Pi_np).max())


def test_unknown_engine_rejected():
    p = steady_scalar()
    with pytest.raises(ValueError, match="engine"):
        steady_riccati_fixed_point(p, 2.0, engine="bogus")


def test_multiplier_is_minimal(rng):
    # 1e-4 below lambda_bar the program is infeasible: the iteration either
    # diverges or lands on a fixed point violating lam >= ||G'Pi G||
    probes = [steady_scalar(), steady_scalar(A=0.5)]
    probes += [make_problem(rng, n=int(rng.integers(1, 4))) for _ in range(3)]
    for p in probes:
        sol = solve_steady_state(p)
        lam = sol.lambda_bar - 1e-4
        try:
            Pi = steady_riccati_fixed_point(p, lam)
        except (FixedPointDiverged, SingularM):
            continue
        assert top_eig(p.G.T @ Pi @ p.G) - lam > 0.5e-4


def test_lmi_certificate_batch(rng):
    for _ in range(8):
        p = make_problem(rng, n=int(rng.integers(1, 4)))
        sol = solve_steady_state(p)
        cert = lmi_certify(p, sol)
        assert cert.feasible
        scale = max(1.0, np.abs(cert.assembled).max())
        assert cert.min_eig >= -1e-7 * scale
        assert np.allclose(cert.P, la.inv(sol.Pi_bar), atol=1e-10 * scale)


def test_lmi_rejects_shrunk_multiplier():
    p = steady_scalar()
    sol = solve_steady_state(p)
    bad = dataclasses.replace(sol, lambda_bar=sol.lambda_bar - 0.1)
    cert = lmi_certify(p, bad)
    assert not cert.feasible
    assert cert.min_eig < -1e-3


def test_lmi_rejects_singular_pi():
    p = steady_scalar()
    sol = solve_steady_state(p)
    bad = dataclasses.replace(sol, Pi_bar=np.zeros((1, 1)))
    with pytest.raises(SingularPi):
        lmi_certify(p, bad)


def test_solution_invariants(rng):
    for _ in range(5):
        p = make_problem(rng, n=int(rng.integers(1, 4)))
        sol = solve_steady_state(p)
        scale = 1.0 + float(np.abs(sol.Pi_bar).max())
        assert sol.residual <= 1e-6 * scale
        assert sol.boundary_gap >= -1e-9 * (1.0 + sol.lambda_bar)
        assert la.eigvalsh(sol.Pi_bar)[0] >= -1e-9 * scale
        assert np.isfinite(sol.lmi_min_eig)
