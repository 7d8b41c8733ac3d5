import itertools

import numpy as np
import pytest

from stackmarket.models.milp import MilpProblem, MilpStatus, Relation
from stackmarket.services import milp_service
from stackmarket.services.milp_service import MilpBuilder, solve_lp, solve_milp, write_lp_file


def problem(c, a, relations, b, lower=None, upper=None, integrality=None, sos1=None):
    n = len(c)
    return MilpProblem(
        objective=c,
        a_matrix=a,
        relations=relations,
        rhs=b,
        lower=lower if lower is not None else np.zeros(n),
        upper=upper if upper is not None else np.full(n, np.inf),
        integrality=integrality if integrality is not None else np.zeros(n, dtype=bool),
        sos1=sos1 or [],
    )


def knapsack(values, weights, capacity):
    n = len(values)
    return problem(values, [weights], ["<="], [capacity], upper=np.ones(n), integrality=np.ones(n, dtype=bool))


def brute_force_knapsack(values, weights, capacity):
    best = 0.0
    for picks in itertools.product([0, 1], repeat=len(values)):
        if np.dot(picks, weights) <= capacity + 1e-12:
            best = max(best, float(np.dot(picks, values)))
    return best


def vertex_enumeration(c, a, b):
    """Best objective over all vertices of {x >= 0, a x <= b}"""
    n = len(c)
    rows = np.vstack([a, -np.eye(n)])
    rhs = np.concatenate([b, np.zeros(n)])
    best = -np.inf
    for active in itertools.combinations(range(rows.shape[0]), n):
        sub = rows[list(active)]
        if abs(np.linalg.det(sub)) < 1e-9:
            continue
        x = np.linalg.solve(sub, rhs[list(active)])
        if np.all(rows @ x <= rhs + 1e-9):
            best = max(best, float(c @ x))
    return best


class TestSolveLp:
    def test_two_variable_vertex(self):
        sol = solve_lp(problem([1.0, 1.0], [[1.0, 2.0], [3.0, 1.0]], ["<=", "<="], [4.0, 6.0]))
        assert sol.status is MilpStatus.OPTIMAL
        assert sol.objective == pytest.approx(2.8)
        assert sol.values == pytest.approx([1.6, 1.2])

    def test_equality_and_bounds(self):
        sol = solve_lp(problem([1.0, 2.0], [[1.0, 1.0]], ["=="], [3.0], upper=np.array([2.0, 2.0])))
        assert sol.objective == pytest.approx(5.0)
        assert sol.values == pytest.approx([1.0, 2.0])

    def test_free_variable(self):
        sol = solve_lp(problem([-1.0], [[1.0]], [">="], [-3.0], lower=np.array([-np.inf])))
        assert sol.status is MilpStatus.OPTIMAL
        assert sol.values[0] == pytest.approx(-3.0)

    def test_infeasible(self):
        sol = solve_lp(problem([1.0], [[1.0], [1.0]], [">=", "<="], [2.0, 1.0], upper=np.array([10.0])))
        assert sol.status is MilpStatus.INFEASIBLE

    def test_unbounded(self):
        sol = solve_lp(problem([1.0, 0.0], [[1.0, -1.0]], ["<="], [1.0]))
        assert sol.status is MilpStatus.UNBOUNDED

    def test_redundant_equalities(self):
        sol = solve_lp(
            problem([1.0, 1.0], [[1.0, 1.0], [2.0, 2.0]], ["==", "=="], [2.0, 4.0], upper=np.array([5.0, 5.0]))
        )
        assert sol.status is MilpStatus.OPTIMAL
        assert sol.objective == pytest.approx(2.0)

    def test_random_lps_match_vertex_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            c = rng.uniform(0.1, 1.0, 4)
            a = rng.uniform(0.1, 1.0, (3, 4))
            b = rng.uniform(1.0, 5.0, 3)
            sol = solve_lp(problem(c, a, ["<="] * 3, b))
            assert sol.objective == pytest.approx(vertex_enumeration(c, a, b), abs=1e-6)


class TestSolveMilp:
    def test_knapsack(self):
        values, weights = [10.0, 13.0, 7.0, 8.0], [3.0, 4.0, 2.0, 3.0]
        sol = solve_milp(knapsack(values, weights, 7.0))
        assert sol.status is MilpStatus.OPTIMAL
        assert sol.objective == pytest.approx(23.0)
        assert np.round(sol.values).tolist() == [1.0, 1.0, 0.0, 0.0]

    def test_random_knapsacks_match_enumeration(self):
        rng = np.random.default_rng(3)
        for _ in range(15):
            n = int(rng.integers(3, 9))
            values = rng.uniform(1.0, 10.0, n)
            weights = rng.uniform(1.0, 6.0, n)
            capacity = float(weights.sum() / 2)
            sol = solve_milp(knapsack(values, weights, capacity))
            assert sol.objective == pytest.approx(brute_force_knapsack(values, weights, capacity), abs=1e-6)

    def test_incumbent_history_increases(self):
        rng = np.random.default_rng(4)
        values = rng.uniform(1.0, 10.0, 8)
        weights = rng.uniform(1.0, 6.0, 8)
        sol = solve_milp(knapsack(values, weights, float(weights.sum() / 3)))
        history = sol.incumbent_history
        assert history and all(b > a for a, b in zip(history, history[1:]))
        assert history[-1] == pytest.approx(sol.objective)

    def test_mixed_integer(self):
        # max x + 2y  s.t.  x + y <= 3.5,  y integral in [0, 10]
        sol = solve_milp(
            problem([1.0, 2.0], [[1.0, 1.0]], ["<="], [3.5], upper=np.array([np.inf, 10.0]), integrality=np.array([False, True]))
        )
        assert sol.objective == pytest.approx(6.5)
        assert sol.values == pytest.approx([0.5, 3.0])

    def test_infeasible_integrality(self):
        # 2x == 1 with x binary
        sol = solve_milp(problem([1.0], [[2.0]], ["=="], [1.0], upper=np.array([1.0]), integrality=np.array([True])))
        assert sol.status is MilpStatus.INFEASIBLE

    def test_node_limit(self):
        rng = np.random.default_rng(5)
        values = rng.uniform(1.0, 10.0, 10)
        weights = rng.uniform(1.0, 6.0, 10)
        sol = solve_milp(knapsack(values, weights, float(weights.sum() / 2)), node_limit=2)
        assert sol.status in (MilpStatus.ITER_LIMIT, MilpStatus.OPTIMAL)
        assert sol.node_count <= 3

    @pytest.mark.slow
    def test_twelve_binaries_match_enumeration(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            values = rng.uniform(1.0, 10.0, 12)
            weights = rng.uniform(1.0, 6.0, (2, 12))
            caps = weights.sum(axis=1) / 2
            p = problem(values, weights, ["<=", "<="], caps, upper=np.ones(12), integrality=np.ones(12, dtype=bool))
            best = 0.0
            for picks in itertools.product([0, 1], repeat=12):
                if np.all(weights @ picks <= caps + 1e-12):
                    best = max(best, float(np.dot(values, picks)))
            assert solve_milp(p).objective == pytest.approx(best, abs=1e-6)


def pick_one(values, sos=True):
    """Binaries with sum <= 2, optionally restricted to a single nonzero by one sos1 group"""
    b = MilpBuilder()
    picks = [b.add_binary(f"y[{k}]", objective=v) for k, v in enumerate(values)]
    b.add_row([(k, 1.0) for k in picks], Relation.LE, 2.0, "pick")
    if sos:
        b.add_sos1(picks)
    return b.build()


def corrupt_points(monkeypatch, point, count=1):
    """Make the first `count` LP points read back from a tableau equal `point`"""
    original = milp_service._solution_point
    calls = []

    def patched(problem, form, tab):
        calls.append(None)
        if len(calls) <= count:
            x = np.array(point, dtype=float)
            return x, float(problem.objective @ x)
        return original(problem, form, tab)

    monkeypatch.setattr(milp_service, "_solution_point", patched)


class TestSos1:
    def test_single_nonzero(self):
        sol = solve_milp(pick_one([3.0, 5.0, 4.0, 1.0]))
        assert sol.status is MilpStatus.OPTIMAL
        assert sol.objective == pytest.approx(5.0)
        assert np.round(sol.values).tolist() == [0.0, 1.0, 0.0, 0.0]

    def test_without_the_group_two_are_picked(self):
        assert solve_milp(pick_one([3.0, 5.0, 4.0, 1.0], sos=False)).objective == pytest.approx(9.0)

    def test_random_groups_match_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            values = rng.uniform(1.0, 10.0, 6)
            assert solve_milp(pick_one(values)).objective == pytest.approx(values.max())

    @pytest.mark.parametrize("groups", [[[0]], [[0, 5]], [[0, 1]]])
    def test_invalid_groups(self, groups):
        integrality = np.array([True, False])
        with pytest.raises(ValueError):
            problem([1.0, 1.0], [[1.0, 1.0]], ["<="], [1.0], upper=np.ones(2), integrality=integrality, sos1=groups)

    def test_lp_file_section(self, tmp_path):
        text = write_lp_file(pick_one([3.0, 5.0]), tmp_path / "sos.lp").read_text()
        assert "SOS\n sos0: S1:: y_0_:1 y_1_:2\nEnd" in text


class TestBound:
    def test_exact_solve_closes_the_bound(self):
        sol = solve_milp(knapsack([10.0, 13.0, 7.0, 8.0], [3.0, 4.0, 2.0, 3.0], 7.0))
        assert sol.bound == pytest.approx(sol.objective)

    def test_lp_bound_is_its_objective(self):
        sol = solve_lp(problem([1.0, 1.0], [[1.0, 2.0]], ["<="], [4.0], upper=np.array([3.0, 3.0])))
        assert sol.objective == pytest.approx(3.5)
        assert sol.bound == pytest.approx(sol.objective)

    def test_gap_keeps_the_bound_valid(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            values = rng.uniform(1.0, 10.0, 8)
            weights = rng.uniform(1.0, 6.0, 8)
            capacity = float(weights.sum() / 2)
            best = brute_force_knapsack(values, weights, capacity)
            sol = solve_milp(knapsack(values, weights, capacity), gap=2.0)
            assert sol.objective >= best - 2.0 - 1e-9
            assert sol.bound >= best - 1e-9


class TestIncumbentCheck:
    def test_violating_incumbent_is_repaired(self, monkeypatch):
        # max 5a + c  s.t.  a + c <= 2.5, c <= 2; the first point read back breaks the row
        p = problem([5.0, 1.0], [[1.0, 1.0]], ["<="], [2.5], upper=np.array([1.0, 2.0]), integrality=np.array([True, False]))
        corrupt_points(monkeypatch, [1.0, 2.0])
        sol = solve_milp(p)
        assert sol.status is MilpStatus.OPTIMAL
        assert sol.values == pytest.approx([1.0, 1.5])
        assert sol.objective == pytest.approx(6.5)

    def test_unrepairable_incumbent_is_numerical(self, monkeypatch):
        # a + b <= 1 with both binaries at 1 has no continuous part to fix
        corrupt_points(monkeypatch, [1.0, 1.0])
        sol = solve_milp(knapsack([5.0, 4.0], [1.0, 1.0], 1.0))
        assert sol.status is MilpStatus.NUMERICAL
        assert len(sol.values) == 0

    def test_numerical_lp_point(self, monkeypatch):
        corrupt_points(monkeypatch, [3.0, 3.0], count=2)
        sol = solve_lp(problem([1.0, 1.0], [[1.0, 2.0]], ["<="], [4.0], upper=np.array([3.0, 3.0])))
        assert sol.status is MilpStatus.NUMERICAL


class TestBuilder:
    def test_named_rows_and_lp_file(self, tmp_path):
        b = MilpBuilder()
        x = b.add_binary("x[0]", objective=3.0)
        y = b.add_variable("y", 0.0, 4.0, objective=1.0)
        b.add_row([(x, 2.0), (y, 1.0), (y, 1.0)], Relation.LE, 5.0, "cap")
        built = b.build()
        assert built.var_names == ["x[0]", "y"] and built.row_names == ["cap"]
        assert built.a_matrix.tolist() == [[2.0, 2.0]]
        assert b.index("y") == y

        sol = solve_milp(built)
        assert sol.objective == pytest.approx(3.0 + 1.5)

        text = write_lp_file(built, tmp_path / "model.lp").read_text()
        assert text.startswith("\\ stackmarket MILP\nMaximize")
        assert " cap: " in text and "Binaries\n x_0_" in text and text.rstrip().endswith("End")

    def test_duplicate_variable(self):
        b = MilpBuilder()
        b.add_variable("p")
        with pytest.raises(ValueError):
            b.add_variable("p")

    def test_problem_validation(self):
        with pytest.raises(ValueError):
            problem([1.0], [[1.0]], ["<="], [1.0], lower=np.array([2.0]), upper=np.array([1.0]))
        with pytest.raises(ValueError):
            problem([1.0], [[1.0]], ["<="], [1.0], integrality=np.array([True]))
