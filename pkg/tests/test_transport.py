import numpy as np
import pytest

from gachaos.measures import WeightedEmpiricalMeasure, uniform_empirical
from gachaos.transport import (CostKind, TransportPlan, bl_distance, bl_value_1d,
                               concentration_rate, cost_matrix, solve_ot,
                               verify_plan, w1_euclidean_1d)

from helpers import brute_force_ot_equal_weights, random_measure


def test_cost_matrix_kinds():
    x = np.array([[0.0], [1.0]])
    y = np.array([[0.0], [3.0]])
    np.testing.assert_allclose(cost_matrix(x, y, "euclidean"),
                               [[0.0, 3.0], [1.0, 2.0]])
    np.testing.assert_allclose(cost_matrix(x, y, "truncated"),
                               [[0.0, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(cost_matrix(x, y, "indicator"),
                               [[0.0, 1.0], [1.0, 1.0]])


def test_solve_ot_identical_measures_cost_zero():
    gen = np.random.default_rng(0)
    mu = random_measure(gen, 5, 2)
    for cost in CostKind:
        plan = solve_ot(mu, mu, cost)
        assert plan.cost_value == pytest.approx(0.0, abs=1e-12)
        ok, _ = verify_plan(plan, mu, mu, cost)
        assert ok


def test_solve_ot_single_atoms_truncated():
    mu = uniform_empirical([[0.0]])
    nu = uniform_empirical([[3.0]])
    plan = solve_ot(mu, nu, CostKind.TRUNCATED)
    assert plan.cost_value == pytest.approx(1.0)


def test_solve_ot_two_atom_example():
    # brute force over the two pairings: matching 0->0 and 2->0.5 costs
    # 0.5 * 0 + 0.5 * 1 = 0.5; the other pairing costs 0.75
    mu = WeightedEmpiricalMeasure(np.array([[0.0], [2.0]]), np.array([0.5, 0.5]))
    nu = WeightedEmpiricalMeasure(np.array([[0.0], [0.5]]), np.array([0.5, 0.5]))
    oracle = brute_force_ot_equal_weights(mu, nu, CostKind.TRUNCATED)
    assert oracle == pytest.approx(0.5)
    plan = solve_ot(mu, nu, CostKind.TRUNCATED)
    assert plan.cost_value == pytest.approx(0.5, abs=1e-12)


def test_solve_ot_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        solve_ot(uniform_empirical([[0.0]]), uniform_empirical([[0.0, 1.0]]))


def test_solver_exactness_small_battery():
    gen = np.random.default_rng(2024)
    for case in range(60):
        n = int(gen.integers(2, 7))
        d = int(gen.integers(1, 4))
        mu = random_measure(gen, n, d, equal_weights=True)
        nu = random_measure(gen, n, d, equal_weights=True)
        for cost in CostKind:
            plan = solve_ot(mu, nu, cost)
            oracle = brute_force_ot_equal_weights(mu, nu, cost)
            assert plan.cost_value == pytest.approx(oracle, abs=1e-10)
            ok, report = verify_plan(plan, mu, nu, cost)
            assert ok, report


def test_bl_examples():
    assert bl_distance(uniform_empirical([[0.0]]), uniform_empirical([[0.3]])) \
        == pytest.approx(0.3)
    assert bl_distance(uniform_empirical([[0.0]]), uniform_empirical([[9.0]])) \
        == pytest.approx(1.0)
    mu = WeightedEmpiricalMeasure(np.array([[0.0], [10.0]]), np.array([0.5, 0.5]))
    nu = WeightedEmpiricalMeasure(np.array([[0.1], [20.0]]), np.array([0.5, 0.5]))
    # brute force over the two pairings: 0.5*0.1 + 0.5*1 = 0.55 beats
    # 0.5*1 + 0.5*1 = 1
    assert brute_force_ot_equal_weights(mu, nu, CostKind.TRUNCATED) \
        == pytest.approx(0.55)
    assert bl_distance(mu, nu) == pytest.approx(0.55, abs=1e-12)


def test_bl_value_1d_matches_general_solver():
    gen = np.random.default_rng(31)
    for _ in range(120):
        mu = random_measure(gen, int(gen.integers(1, 9)), 1,
                            scale=float(gen.choice([0.3, 3.0, 30.0])))
        nu = random_measure(gen, int(gen.integers(1, 9)), 1,
                            scale=float(gen.choice([0.3, 3.0, 30.0])))
        fast = bl_value_1d(mu, nu)
        exact = solve_ot(mu, nu, CostKind.TRUNCATED).cost_value
        assert fast == pytest.approx(exact, abs=1e-10)


def test_w1_euclidean_1d_examples():
    assert w1_euclidean_1d(uniform_empirical([[0.0]]), uniform_empirical([[1.0]])) \
        == pytest.approx(1.0)
    mu = uniform_empirical([[0.0], [1.0]])
    nu = uniform_empirical([[1.0], [2.0]])
    assert w1_euclidean_1d(mu, nu) == pytest.approx(1.0)
    mu4 = uniform_empirical([[0.0], [1.0], [2.0], [3.0]])
    nu4 = uniform_empirical([[0.25], [1.25], [2.25], [3.25]])
    assert w1_euclidean_1d(mu4, nu4) == pytest.approx(0.25)


def test_w1_euclidean_1d_matches_general_solver():
    gen = np.random.default_rng(77)
    for _ in range(200):
        mu = random_measure(gen, int(gen.integers(1, 8)), 1)
        nu = random_measure(gen, int(gen.integers(1, 8)), 1)
        fast = w1_euclidean_1d(mu, nu)
        exact = solve_ot(mu, nu, CostKind.EUCLIDEAN).cost_value
        assert fast == pytest.approx(exact, abs=1e-10)


def test_w1_euclidean_1d_rejects_other_dims():
    mu = uniform_empirical([[0.0, 0.0]])
    with pytest.raises(ValueError):
        w1_euclidean_1d(mu, mu)


def test_verify_plan_accepts_solver_output():
    gen = np.random.default_rng(4)
    mu = random_measure(gen, 5, 2)
    nu = random_measure(gen, 7, 2)
    plan = solve_ot(mu, nu, CostKind.TRUNCATED)
    ok, report = verify_plan(plan, mu, nu, CostKind.TRUNCATED)
    assert ok and not report["violations"]


def test_verify_plan_flags_marginal_violation():
    gen = np.random.default_rng(6)
    mu = random_measure(gen, 4, 1)
    nu = random_measure(gen, 5, 1)
    plan = solve_ot(mu, nu, CostKind.TRUNCATED)
    corrupted = plan.mass.copy()
    corrupted[0, :] *= 1.0 + 1e-3 / max(plan.mass[0, :].sum(), 1e-9)
    bad = TransportPlan(mass=corrupted, cost_value=plan.cost_value,
                        dual_u=plan.dual_u, dual_v=plan.dual_v)
    ok, report = verify_plan(bad, mu, nu, CostKind.TRUNCATED)
    assert not ok
    assert "marginal feasibility" in report["violations"]


def test_verify_plan_flags_product_coupling_slackness():
    gen = np.random.default_rng(8)
    mu = random_measure(gen, 4, 1)
    nu = random_measure(gen, 4, 1)
    optimal = solve_ot(mu, nu, CostKind.TRUNCATED)
    product = np.outer(mu.weights, nu.weights)
    c = cost_matrix(mu.support, nu.support, CostKind.TRUNCATED)
    product_cost = float((product * c).sum())
    assert product_cost > optimal.cost_value + 1e-6  # nondegenerate instance
    feasible_but_suboptimal = TransportPlan(
        mass=product, cost_value=product_cost,
        dual_u=optimal.dual_u, dual_v=optimal.dual_v)
    ok, report = verify_plan(feasible_but_suboptimal, mu, nu, CostKind.TRUNCATED)
    assert not ok
    assert "complementary slackness" in report["violations"]
    assert report["max_row_marginal_error"] <= 1e-10


def test_metric_axioms_on_random_measures():
    gen = np.random.default_rng(12)
    for _ in range(40):
        a = random_measure(gen, int(gen.integers(1, 6)), 1)
        b = random_measure(gen, int(gen.integers(1, 6)), 1)
        c = random_measure(gen, int(gen.integers(1, 6)), 1)
        dab = bl_value_1d(a, b)
        assert dab == pytest.approx(bl_value_1d(b, a), abs=1e-10)
        assert bl_value_1d(a, c) <= dab + bl_value_1d(b, c) + 1e-9


def test_cost_ordering():
    gen = np.random.default_rng(13)
    for _ in range(40):
        mu = random_measure(gen, int(gen.integers(1, 7)), 2)
        nu = random_measure(gen, int(gen.integers(1, 7)), 2)
        bl = solve_ot(mu, nu, CostKind.TRUNCATED).cost_value
        w1 = solve_ot(mu, nu, CostKind.EUCLIDEAN).cost_value
        tv = solve_ot(mu, nu, CostKind.INDICATOR).cost_value
        assert bl <= w1 + 1e-9
        assert bl <= tv + 1e-9


def test_strong_duality_certificate():
    gen = np.random.default_rng(14)
    for _ in range(30):
        mu = random_measure(gen, 6, 2)
        nu = random_measure(gen, 6, 2)
        plan = solve_ot(mu, nu, CostKind.TRUNCATED)
        dual_value = plan.dual_u @ mu.weights + plan.dual_v @ nu.weights
        assert plan.cost_value == pytest.approx(dual_value, abs=1e-8)


def test_concentration_rate_values():
    assert concentration_rate(100, 1) == pytest.approx(0.1)
    assert concentration_rate(100, 2) == pytest.approx(0.1 * np.log(101))
    assert concentration_rate(100, 2) == pytest.approx(0.46151, abs=1e-5)
    assert concentration_rate(1000, 3) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        concentration_rate(0, 1)
    with pytest.raises(ValueError):
        concentration_rate(10, 0)
