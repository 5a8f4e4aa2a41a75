import itertools
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icbf.control import (ConstraintRow, FilterConfig, lqr_gain, nominal_control, qp_filter, relu_filter,
                          softplus, softplus_filter)
from icbf.errors import InvalidInput, InvalidWeight


def _closed_loop(K):
    A = np.zeros((4, 4))
    A[0, 2] = A[1, 3] = 1.0
    B = np.zeros((4, 2))
    B[2, 0] = B[3, 1] = 1.0
    return A - B @ K


def test_lqr_identity_weights():
    g = lqr_gain(np.eye(4), np.eye(2))
    np.testing.assert_allclose(g.K, [[1, 0, np.sqrt(3), 0], [0, 1, 0, np.sqrt(3)]], rtol=1e-15)
    assert g.riccati_residual <= 1e-10


def test_lqr_zero_velocity_weight():
    g = lqr_gain([4.0, 4.0, 0.0, 0.0], [1.0, 1.0])
    np.testing.assert_allclose(g.K[0, [0, 2]], [2.0, 2.0], rtol=1e-15)


def test_lqr_against_scipy_and_hurwitz():
    from scipy.linalg import solve_continuous_are
    rng = np.random.default_rng(0)
    for _ in range(50):
        q = np.concatenate([rng.uniform(0.1, 10, 2), rng.uniform(0, 10, 2)])
        r = rng.uniform(0.1, 10, 2)
        g = lqr_gain(q, r)
        A = _closed_loop(np.zeros((2, 4)))
        B = np.zeros((4, 2))
        B[2, 0] = B[3, 1] = 1.0
        P = solve_continuous_are(A, B, np.diag(q), np.diag(r))
        np.testing.assert_allclose(g.P, P, rtol=1e-8, atol=1e-10)
        assert np.all(np.linalg.eigvals(_closed_loop(g.K)).real < 0)


@pytest.mark.parametrize("Q,R", [(np.eye(4), [0.0, 1.0]), (np.eye(4), [-1.0, 1.0]),
                                 ([0.0, 1.0, 1.0, 1.0], [1.0, 1.0]), (np.ones((4, 4)), np.eye(2)),
                                 (np.eye(3), np.eye(2))])
def test_lqr_invalid(Q, R):
    with pytest.raises(InvalidWeight):
        lqr_gain(Q, R)


def test_nominal_control():
    g = lqr_gain(np.eye(4), np.eye(2))
    x = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(nominal_control(x, x, g), 0.0)
    u = nominal_control([3.0, 0.0, 0.0, 0.0], np.zeros(4), g)
    assert u[1] == 0.0 and u[0] == -3.0
    rng = np.random.default_rng(1)
    for _ in range(20):
        x, goal = rng.normal(size=4), rng.normal(size=4)
        np.testing.assert_allclose(nominal_control(x, goal, g), -g.K @ (x - goal))
    np.testing.assert_array_equal(nominal_control([100.0, -100.0, 0, 0], np.zeros(4), g, u_max=2.0), [-2.0, 2.0])


def test_filter_config_validation():
    with pytest.raises(InvalidInput):
        FilterConfig(c=0.0)
    with pytest.raises(InvalidInput):
        FilterConfig(u_max=-1.0)
    with pytest.raises(InvalidInput):
        FilterConfig(lgh_eps=0.0)


def test_softplus_stable():
    assert softplus(0.0, 3.0) == pytest.approx(np.log(2) / 3.0, rel=1e-15)
    assert softplus(1e4, 5000.0) == pytest.approx(1e4, rel=1e-15)
    assert softplus(-1e4, 5000.0) == 0.0


def test_softplus_filter_examples():
    u_d = np.array([0.3, -0.2])
    row = ConstraintRow(Lf=-(np.array([1.0, 1.0]) @ u_d), Lg=np.array([1.0, 1.0]), alpha_h=0.0)
    res = softplus_filter(u_d, row, FilterConfig(c=2.0))
    assert res.psi[0] == pytest.approx(0.0, abs=1e-16)
    np.testing.assert_allclose(res.u, u_d + np.log(2) / 2.0 * row.Lg / 2.0)

    row = ConstraintRow(Lf=50.0, Lg=np.array([0.0, 1.0]), alpha_h=0.0)
    res = softplus_filter(np.zeros(2), row, FilterConfig(c=1.0))
    assert np.linalg.norm(res.u) <= np.exp(-50)

    row = ConstraintRow(Lf=-1.0, Lg=np.array([2.0, 0.0]), alpha_h=0.0)
    res = softplus_filter(np.zeros(2), row, FilterConfig(c=1.0))
    np.testing.assert_allclose(res.u, [np.log1p(np.e) * 0.5, 0.0])
    assert row.value(res.u) == pytest.approx(-1 + np.log1p(np.e), rel=1e-14)
    assert row.value(relu_filter(np.zeros(2), row)) == 0.0


def test_softplus_filter_degenerate(caplog):
    row = ConstraintRow(Lf=-1.0, Lg=np.array([1e-12, 0.0]), alpha_h=0.0, label="h_r")
    with caplog.at_level(logging.WARNING):
        res = softplus_filter(np.array([1.0, 2.0]), row, FilterConfig())
    assert res.degenerate
    np.testing.assert_array_equal(res.u, [1.0, 2.0])
    assert "degenerate" in caplog.text


@settings(max_examples=300, deadline=None)
@given(st.floats(-100, 100), st.sampled_from([1.0, 10.0, 100.0, 5000.0]),
       st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 5), st.floats(-3, 3))
def test_softplus_filter_satisfies_constraint(psi_shift, c, ux, uy, lgx, lgy):
    Lg = np.array([lgx, lgy])
    u_d = np.array([ux, uy])
    row = ConstraintRow(Lf=psi_shift - Lg @ u_d, Lg=Lg, alpha_h=0.0)
    res = softplus_filter(u_d, row, FilterConfig(c=c))
    val = row.value(res.u)
    assert val >= max(res.psi[0], 0.0) - 1e-9 * (1 + abs(psi_shift))


def test_softplus_dominates_relu_and_monotone_in_c():
    psi = np.linspace(-100, 100, 4001)
    for c in (1.0, 10.0, 100.0, 5000.0):
        assert np.all(softplus(-psi, c) >= np.maximum(-psi, 0.0))
    cs = np.logspace(0, 4, 50)
    for p in np.linspace(0.01, 50, 100):
        vals = softplus(-p, cs)
        assert np.all(np.diff(vals) <= 0)


def test_filter_inactivity():
    rng = np.random.default_rng(2)
    for _ in range(200):
        c = 10 ** rng.uniform(0, 3.7)
        Lg = rng.normal(size=2)
        u_d = rng.normal(size=2)
        psi = 5.0 / c + rng.exponential()
        row = ConstraintRow(Lf=psi - Lg @ u_d, Lg=Lg, alpha_h=0.0)
        res = softplus_filter(u_d, row, FilterConfig(c=c))
        n = np.linalg.norm(Lg)
        assert np.linalg.norm(res.u - u_d) <= 1e-2 * n / n ** 2


def test_qp_no_active():
    rows = [ConstraintRow(1.0, np.array([1.0, 0.0]), 0.0), ConstraintRow(2.0, np.array([0.0, 1.0]), 0.5)]
    res = qp_filter(np.zeros(2), rows, FilterConfig())
    np.testing.assert_array_equal(res.u, 0.0)
    assert res.active == ()


def test_qp_single_active_matches_relu():
    rng = np.random.default_rng(3)
    for _ in range(100):
        row = ConstraintRow(rng.normal(), rng.normal(size=2), rng.normal())
        u_d = rng.normal(size=2)
        np.testing.assert_allclose(qp_filter(u_d, [row], FilterConfig()).u, relu_filter(u_d, row), atol=1e-12)


def _grid_min(u_d, rows, half=4.0, step=0.01):
    g = np.arange(-half, half + step / 2, step)
    U = np.stack(np.meshgrid(g + u_d[0], g + u_d[1]), -1).reshape(-1, 2)
    ok = np.ones(len(U), bool)
    for r in rows:
        ok &= r.Lf + U @ r.Lg + r.alpha_h >= 0
    obj = 0.5 * np.sum((U[ok] - u_d) ** 2, axis=1)
    return obj.min() if obj.size else np.inf


def test_qp_two_rows_against_grid_and_kkt():
    rng = np.random.default_rng(4)
    for _ in range(60):
        u_d = rng.normal(size=2)
        u_feas = u_d + rng.normal(size=2)  # guarantees a common feasible point
        rows = []
        for _ in range(2):
            Lg = rng.normal(size=2)
            rows.append(ConstraintRow(Lf=-(Lg @ u_feas) + rng.exponential(0.2), Lg=Lg, alpha_h=0.0))
        res = qp_filter(u_d, rows, FilterConfig())
        assert not res.infeasible
        obj = 0.5 * np.sum((res.u - u_d) ** 2)
        grid = _grid_min(u_d, rows)
        assert obj <= grid + 1e-12
        assert grid - obj <= 0.05
        # KKT: stationarity, primal/dual feasibility, complementarity
        A = np.array([r.Lg for r in rows])
        vals = np.array([r.value(res.u) for r in rows])
        mu = res.multipliers
        assert np.linalg.norm(res.u - u_d - A.T @ mu) <= 1e-9
        assert np.all(vals >= -1e-9) and np.all(mu >= -1e-12)
        assert np.all(np.abs(mu * vals) <= 1e-9)


def test_qp_infeasible_falls_back(caplog):
    rows = [ConstraintRow(-1.0, np.array([1.0, 0.0]), 0.0), ConstraintRow(-1.0, np.array([-1.0, 0.0]), 0.0)]
    with caplog.at_level(logging.WARNING):
        res = qp_filter(np.zeros(2), rows, FilterConfig(c=10.0))
    assert res.infeasible and "infeasible" in caplog.text
    assert rows[res.active[0]].value(res.u) > 0


def test_qp_drops_degenerate_rows(caplog):
    rows = [ConstraintRow(-1.0, np.zeros(2), 0.0, label="dead"), ConstraintRow(-1.0, np.array([1.0, 0.0]), 0.0)]
    with caplog.at_level(logging.WARNING):
        res = qp_filter(np.zeros(2), rows, FilterConfig())
    assert res.dropped == (0,)
    np.testing.assert_allclose(res.u, [1.0, 0.0])
    with pytest.raises(InvalidInput):
        qp_filter(np.zeros(2), rows * 3, FilterConfig())


def test_qp_four_rows_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(30):
        u_d = rng.normal(size=2)
        u_feas = u_d + rng.normal(size=2)
        rows = [ConstraintRow(-(Lg @ u_feas) + 0.1, Lg, 0.0) for Lg in rng.normal(size=(4, 2))]
        res = qp_filter(u_d, rows, FilterConfig())
        # enumerate all vertices/projections as an independent optimum
        best = np.inf
        A = np.array([r.Lg for r in rows])
        b = np.array([-r.Lf for r in rows])
        cands = [u_d]
        for i in range(4):
            cands.append(u_d + max(b[i] - A[i] @ u_d, 0) * A[i] / (A[i] @ A[i]))
        for i, j in itertools.combinations(range(4), 2):
            M = A[[i, j]]
            if abs(np.linalg.det(M)) > 1e-12:
                cands.append(np.linalg.solve(M, b[[i, j]]))
        for u in cands:
            if np.all(A @ u - b >= -1e-9):
                best = min(best, 0.5 * np.sum((u - u_d) ** 2))
        assert 0.5 * np.sum((res.u - u_d) ** 2) == pytest.approx(best, rel=1e-9, abs=1e-12)
