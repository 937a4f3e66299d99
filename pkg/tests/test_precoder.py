import numpy as np
import pytest

from cemiso.doughnut import inner_radius, outer_radius, received_point
from cemiso.precoder import (EPS_SOLVE, DispatchPolicy, PhaseSolution, Solver,
                             TargetOutsideDoughnut, admissible_arcs, closed_form_n2_branches,
                             dispatch_solve, homotopy_path, residual, solve_closed_form_n2,
                             solve_closed_form_n3, solve_coord_descent, solve_dfs_two_step,
                             solve_homotopy, split_angle_init)
from conftest import rayleigh, uniform_in_doughnut

SQ2 = np.sqrt(2.0)


def _cases(rng, n, k):
    for _ in range(k):
        h = rayleigh(rng, n)
        m = inner_radius(h).value
        yield h, uniform_in_doughnut(rng, m, outer_radius(h))


def _check(sol: PhaseSolution, h):
    assert sol.accepted
    assert sol.residual <= EPS_SOLVE * outer_radius(h)
    assert abs(sol.recompute_residual(h) - sol.residual) <= 1e-12
    assert np.all(sol.phases >= -np.pi) and np.all(sol.phases < np.pi)


def test_homotopy_examples(rng):
    sol = solve_homotopy([1, 1], SQ2)
    np.testing.assert_allclose(sol.phases, [0.0, 0.0], atol=1e-9)
    assert sol.residual <= 1e-12
    h = rayleigh(rng, 5)
    u = outer_radius(h) * np.exp(0.7j)
    sol = solve_homotopy(h, u)
    assert sol.residual <= 1e-12
    z = np.exp(1j * (sol.phases + np.angle(h)))
    np.testing.assert_allclose(z, np.exp(0.7j), atol=1e-6)


def test_homotopy_random_n8(rng):
    for h, u in _cases(rng, 8, 100):
        sol = solve_homotopy(h, u)
        assert sol.solver is Solver.HOMOTOPY
        _check(sol, h)


def test_homotopy_path_endpoints(rng):
    for _ in range(20):
        h = rayleigh(rng, 6)
        ir = inner_radius(h)
        _, f = homotopy_path(h, ir.phases)
        assert f(0.0) == pytest.approx(ir.value**2, abs=1e-9)
        assert f(1.0) == pytest.approx(outer_radius(h) ** 2, abs=1e-9)


def test_outside_doughnut_raises():
    with pytest.raises(TargetOutsideDoughnut):
        solve_homotopy([3, 1], 0.1)
    with pytest.raises(TargetOutsideDoughnut):
        solve_closed_form_n2([3, 1], 0.1)
    with pytest.raises(TargetOutsideDoughnut):
        dispatch_solve([1, 1, 1, 1, 1], 10.0)
    with pytest.raises(ValueError):
        solve_dfs_two_step([3, 1, 0.1, 0.1], 0.01)


def test_coord_descent_single_antenna():
    sol = solve_coord_descent([2.0], 2.0 * np.exp(1.1j), record=True)
    assert sol.phases[0] == pytest.approx(1.1, abs=1e-12)
    assert sol.residual <= 1e-12


def test_coord_descent_trace_is_monotone(rng):
    for h, u in _cases(rng, 64, 20):
        sol = solve_coord_descent(h, u, record=True)
        trace = np.asarray(sol.trace)
        assert trace.size > 0
        assert np.all(np.diff(trace) <= 1e-12)
        assert trace[-1] == pytest.approx(sol.residual, abs=1e-12)


def test_coord_descent_n64_success_rate(rng):
    ok = sum(solve_coord_descent(h, u).accepted for h, u in _cases(rng, 64, 200))
    assert ok / 200 >= 0.99


def test_split_angle_init_on_boundary(rng):
    h = rayleigh(rng, 7)
    u = outer_radius(h) * np.exp(-2.0j)
    assert residual(h, split_angle_init(h, u), u) <= 1e-12


def test_admissible_arcs_rejection_sampling(rng):
    for _ in range(10):
        c = complex(*rng.normal(size=2)) * 2
        g = complex(*rng.normal(size=2))
        inner, outer = sorted(rng.uniform(0, 3, 2))
        arcs = admissible_arcs(c, g, inner, outer)
        theta = rng.uniform(-np.pi, np.pi, 10_000)
        d = np.abs(c - g * np.exp(1j * theta))
        truth = (d >= inner) & (d <= outer)
        member = np.zeros_like(truth)
        for start, length in arcs:
            member |= np.mod(theta - start, 2 * np.pi) <= length
        # only points within rounding of an arc edge may disagree
        edge = np.minimum(np.abs(d - inner), np.abs(d - outer)) < 1e-9
        assert np.all((member == truth) | edge)


def test_dfs_n4_acceptance(rng):
    for h, u in _cases(rng, 4, 100):
        sol = solve_dfs_two_step(h, u)
        assert sol.solver is Solver.DFS_TWO_STEP
        _check(sol, h)


def test_dfs_outer_boundary_alignment(rng):
    h = rayleigh(rng, 6)
    u = outer_radius(h) * np.exp(0.4j)
    sol = solve_dfs_two_step(h, u)
    _check(sol, h)
    np.testing.assert_allclose(np.exp(1j * (sol.phases + np.angle(h))), np.exp(0.4j), atol=1e-6)


def test_dfs_partial_depth(rng):
    for h, u in _cases(rng, 7, 20):
        _check(solve_dfs_two_step(h, u, depth=3, threshold=0.5 * outer_radius(h)), h)


def test_closed_form_examples():
    sol = solve_closed_form_n2([1, 1], SQ2)
    np.testing.assert_allclose(sol.phases, [0.0, 0.0], atol=1e-7)
    sol = solve_closed_form_n2([3, 1], SQ2)
    assert sol.residual <= 1e-12
    assert abs(abs(sol.phases[0] - sol.phases[1]) - np.pi) <= 1e-6
    sol = solve_closed_form_n3([1, 2, 2], 0.5 * np.exp(0.3j))
    assert sol.residual <= 1e-10


def test_closed_form_n2_both_branches(rng):
    for h, u in _cases(rng, 2, 100):
        branches = closed_form_n2_branches(h, u)
        assert len(branches) == 2
        for theta in branches:
            assert residual(h, theta, u) <= 1e-10 * outer_radius(h)


def test_closed_form_n3_random(rng):
    for h, u in _cases(rng, 3, 200):
        _check(solve_closed_form_n3(h, u), h)


@pytest.mark.parametrize("n, solver", [(2, Solver.CLOSED_FORM_N2), (3, Solver.CLOSED_FORM_N3),
                                       (7, Solver.DFS_TWO_STEP), (64, Solver.COORD_DESCENT)])
def test_dispatch_routing(n, solver, rng):
    h, u = next(_cases(rng, n, 1))
    sol = dispatch_solve(h, u)
    assert sol.solver is solver
    _check(sol, h)


def test_dispatch_policy_override(rng):
    h, u = next(_cases(rng, 3, 1))
    sol = dispatch_solve(h, u, DispatchPolicy(closed_form_max=0, dfs_max=0))
    assert sol.solver is Solver.COORD_DESCENT


def test_rotation_covariance(rng):
    for h, u in _cases(rng, 5, 20):
        phi = rng.uniform(-np.pi, np.pi)
        a = solve_homotopy(h, u)
        b = solve_homotopy(h, u * np.exp(1j * phi))
        assert abs(residual(h, a.phases + phi, u * np.exp(1j * phi)) - a.residual) <= 1e-12
        assert abs(b.residual - a.residual) <= 1e-9 * outer_radius(h)


def test_received_point_matches_target(rng):
    h, u = next(_cases(rng, 16, 1))
    sol = dispatch_solve(h, u)
    assert abs(received_point(h, sol.phases) - u) == pytest.approx(sol.residual, abs=1e-15)
