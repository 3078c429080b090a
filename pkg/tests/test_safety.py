import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import enumerate_projection, random_projection_problem
from saver.feeder import chain_feeder, ieee13
from saver.linearization import build_sensitivity
from saver.powerflow import Injections
from saver.safety import (ProjectionProblem, SafetyLayer, Status, check_safety, project)


def two_bus_problem(q_prop, v_upper=1.01, box=10.0):
    f = chain_feeder(1, r=0.01, x=0.01, q_limit=box)
    m = build_sensitivity(f)
    return ProjectionProblem(np.array([q_prop]), np.zeros(1), m, f.controllable,
                             np.array([0.9]), np.array([v_upper]), f.q_min, f.q_max)


def test_feasible_proposal_is_returned_unchanged():
    res = project(two_bus_problem(0.2))
    assert res.status is Status.OPTIMAL
    assert res.q_safe[0] == 0.2
    assert res.active_set.size == 0


def test_two_bus_upper_clamp():
    prob = two_bus_problem(1.0)
    m = prob.model
    # the proposal drives the voltage to 1.02, the bound is 1.01
    assert m.v0 + m.X[0, 0] * 1.0 == pytest.approx(1.02)
    res = project(prob)
    assert res.status is Status.OPTIMAL
    assert res.q_safe[0] == pytest.approx(0.5, abs=1e-9)
    assert list(res.active_set) == [0]
    assert res.active_buses == [(0, "upper")]
    # brute force over a fine grid of feasible actions
    grid = np.linspace(-2, 2, 400001)
    feasible = grid[(m.v0 + m.X[0, 0] * grid <= 1.01) & (m.v0 + m.X[0, 0] * grid >= 0.9)]
    best = feasible[np.argmin((feasible - 1.0) ** 2)]
    assert abs(res.q_safe[0] - best) < 1e-6


def test_check_safety_examples():
    f = chain_feeder(1, r=0.01, x=0.01)
    m = build_sensitivity(f)
    np.testing.assert_array_equal(check_safety(m, Injections.zeros(1), [0.9], [1.1]), [0.0])
    viol = check_safety(m, Injections(np.zeros(1), np.array([1.0])), [0.9], [1.01])
    assert viol[0] == pytest.approx(0.01)
    with pytest.raises(ValueError):
        check_safety(m, Injections.zeros(1), [0.9, 0.9], [1.1])


def test_matches_enumeration_on_random_instances():
    rng = np.random.default_rng(11)
    multi = 0
    for _ in range(60):
        prob = random_projection_problem(rng)
        cands = enumerate_projection(prob)
        res = project(prob)
        if not cands:
            assert res.status is Status.RELAXED
            continue
        for q, _, _ in cands:            # strict convexity: all KKT points coincide
            np.testing.assert_allclose(q, cands[0][0], atol=1e-9)
        np.testing.assert_allclose(res.q_safe, cands[0][0], atol=1e-6)
        multi += sum(1 for s in cands[0][1] if s) >= 2
    assert multi >= 5


def test_dual_iteration_alone_converges():
    rng = np.random.default_rng(5)
    for _ in range(30):
        prob = random_projection_problem(rng)
        cands = enumerate_projection(prob, first_only=True)
        if not cands:
            continue
        res = project(prob, tol=1e-10, polish=False, max_iter=100_000)
        assert res.status is Status.OPTIMAL
        np.testing.assert_allclose(res.q_safe, cands[0][0], atol=1e-6)


def test_multi_active_beats_single_constraint_formula():
    """Two lower bounds bind; handling only the worst one leaves the other violated."""
    f = chain_feeder(2, r=0.01, x=0.01, q_limit=5.0)
    m = build_sensitivity(f)
    base = m.v0_vec
    # both rows bind when 0.6 d2 < d1 < d2 / 1.5 for X = 0.02 [[1, 1], [1, 2]]
    lower = base + np.array([0.0076, 0.012])
    prob = ProjectionProblem(np.zeros(2), np.zeros(2), m, f.controllable, lower,
                             base + 0.5, f.q_min, f.q_max)
    res = project(prob)
    cands = enumerate_projection(prob)
    np.testing.assert_allclose(res.q_safe, cands[0][0], atol=1e-9)
    assert len(res.active_set) == 2

    # single-constraint closed form on the most violated row
    A = m.X[:, f.controllable]
    k = int(np.argmax(lower - base))
    a = A[k]
    q_single = prob.q_proposed + a * (lower[k] - base[k] - a @ prob.q_proposed) / (a @ a)
    v_single = base + A @ q_single
    assert np.any(v_single < lower - 1e-6)
    assert np.linalg.norm(q_single - res.q_safe) > 1e-4


def test_infeasible_instance_is_relaxed():
    f = chain_feeder(2, r=0.01, x=0.01, q_limit=0.1)
    m = build_sensitivity(f)
    p = np.array([-3.0, -3.0])            # far too much load for 0.1 pu of support
    prob = ProjectionProblem.from_feeder(f, np.zeros(2), p, model=m)
    res = project(prob)
    assert res.status is Status.RELAXED
    assert res.slack_used > 0
    np.testing.assert_allclose(res.q_safe, f.q_max, atol=1e-9)


def test_iteration_limit_reports_failure():
    rng = np.random.default_rng(2)
    for _ in range(20):
        prob = random_projection_problem(rng)
        res = project(prob, polish=False, max_iter=1, tol=1e-14)
        if res.iterations:
            assert res.status is Status.FAILED
            return
    pytest.fail("no instance needed iterations")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_idempotent_and_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    prob = random_projection_problem(rng)
    tol = 1e-7
    r1 = project(prob, tol)
    if r1.status is not Status.OPTIMAL:
        return
    again = ProjectionProblem(r1.q_safe, prob.p_now, prob.model, prob.controllable,
                              prob.v_lower, prob.v_upper, prob.q_min, prob.q_max)
    r2 = project(again, tol)
    assert np.max(np.abs(r2.q_safe - r1.q_safe)) <= 2 * tol

    other = prob.q_proposed + rng.normal(0, 0.3, prob.q_proposed.shape)
    prob_b = ProjectionProblem(other, prob.p_now, prob.model, prob.controllable,
                               prob.v_lower, prob.v_upper, prob.q_min, prob.q_max)
    rb = project(prob_b, tol)
    if rb.status is Status.OPTIMAL:
        assert (np.linalg.norm(r1.q_safe - rb.q_safe)
                <= np.linalg.norm(prob.q_proposed - other) + 4 * tol)


def test_optimal_results_certify_feasibility():
    rng = np.random.default_rng(8)
    for _ in range(50):
        prob = random_projection_problem(rng)
        res = project(prob)
        if res.status is Status.OPTIMAL:
            inj = Injections(prob.p_now, prob.full_q(res.q_safe))
            assert np.all(check_safety(prob.model, inj, prob.v_lower, prob.v_upper) <= 1e-7)
            assert res.kkt_residual <= 1e-7
            assert res.slack_used == 0.0


def test_safety_layer_warm_start_reduces_work():
    f = ieee13().with_q_limits(-0.5, 0.5)
    p, q = f.load_pu()
    layer = SafetyLayer(f)
    cold = SafetyLayer(f, warm_start=False)
    rng = np.random.default_rng(0)
    warm_it = cold_it = 0
    for t in range(40):
        k = 1.1 + 0.05 * np.sin(t / 6)
        a = rng.uniform(-0.5, 0.5, len(f.controllable))
        rw, rc = layer.project(a, -k * p, -k * q), cold.project(a, -k * p, -k * q)
        np.testing.assert_allclose(rw.q_safe, rc.q_safe, atol=1e-6)
        warm_it += rw.iterations
        cold_it += rc.iterations
    assert warm_it <= cold_it


def test_margin_tightens_bounds():
    f = ieee13()
    layer = SafetyLayer(f, margin=0.01)
    prob = layer.problem(np.zeros(len(f.controllable)), np.zeros(f.n))
    np.testing.assert_allclose(prob.v_upper, f.v_upper - 0.01)
    np.testing.assert_allclose(prob.v_lower, f.v_lower + 0.01)


def test_rejects_bad_input():
    f = chain_feeder(2)
    m = build_sensitivity(f)
    with pytest.raises(ValueError):
        ProjectionProblem(np.zeros(3), np.zeros(2), m, f.controllable, np.full(2, .9), np.full(2, 1.1),
                          f.q_min, f.q_max)
    with pytest.raises(ValueError):
        project(ProjectionProblem.from_feeder(f, np.zeros(2), np.zeros(2)), tol=0.0)
