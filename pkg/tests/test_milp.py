import math

import numpy as np
import pytest
from scipy.optimize import linprog

from gridcomm.milp import (
    EQ,
    GE,
    KERNELS,
    LE,
    MAX_BRUTE_FORCE_BINARIES,
    ModelBuilder,
    ModelError,
    Status,
    TooManyBinariesError,
    brute_force_milp,
    check_feasible,
    solve_lp,
    solve_milp,
)
from oracles import random_lp, solve_model_textbook


def toy_binary():
    mb = ModelBuilder("toy")
    z1 = mb.add_var("z1", binary=True)
    z2 = mb.add_var("z2", binary=True)
    mb.add_constraint({z1: 1, z2: 1}, LE, 1)
    mb.set_objective({z1: -1, z2: -1})
    return mb.build()


class TestLp:
    def test_box(self, kernel):
        mb = ModelBuilder()
        x = mb.add_var("x", 0, 1)
        mb.set_objective({x: -1})
        sol = solve_lp(mb.build(), kernel=kernel)
        assert sol.optimal and sol["x"] == 1.0 and sol.objective == -1.0

    def test_infeasible(self, kernel):
        mb = ModelBuilder()
        x = mb.add_var("x", -math.inf, math.inf)
        mb.add_constraint({x: 1}, GE, 2)
        mb.add_constraint({x: 1}, LE, 1)
        mb.set_objective({x: 1})
        assert solve_lp(mb.build(), kernel=kernel).status is Status.INFEASIBLE

    def test_unbounded(self, kernel):
        mb = ModelBuilder()
        x = mb.add_var("x")
        y = mb.add_var("y", -math.inf, math.inf)
        mb.add_constraint({x: 1, y: -1}, EQ, 0)
        mb.set_objective({y: -1})
        assert solve_lp(mb.build(), kernel=kernel).status is Status.UNBOUNDED

    def test_equality_and_free(self, kernel):
        mb = ModelBuilder()
        x = mb.add_var("x", -math.inf, math.inf)
        y = mb.add_var("y", -2, 5)
        mb.add_constraint({x: 1, y: 1}, EQ, 1)
        mb.add_constraint({x: 1, y: -1}, GE, -4)
        mb.set_objective({x: 1, y: 2})
        sol = solve_lp(mb.build(), kernel=kernel)
        assert sol["x"] == pytest.approx(3.0) and sol["y"] == pytest.approx(-2.0)

    def test_random_against_textbook_simplex(self, kernel):
        rng = np.random.default_rng(2024)
        agreed = 0
        for _ in range(200):
            n = int(rng.integers(2, 13))
            model = random_lp(rng, n, int(rng.integers(1, 10)), feasible=bool(rng.random() < 0.85))
            sol = solve_lp(model, kernel=kernel)
            status, x, obj = solve_model_textbook(model)
            if status == "infeasible":
                assert sol.status is Status.INFEASIBLE
                continue
            assert sol.optimal
            assert sol.objective == pytest.approx(obj, abs=1e-6)
            assert model.constraint_residual(sol.x) <= 1e-7
            agreed += 1
        assert agreed >= 150

    def test_random_against_highs(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            model = random_lp(rng, int(rng.integers(2, 13)), int(rng.integers(1, 10)))
            A_ub = np.vstack([model.A[model.sense == LE], -model.A[model.sense == GE]])
            b_ub = np.concatenate([model.rhs[model.sense == LE], -model.rhs[model.sense == GE]])
            ref = linprog(
                model.c, A_ub=A_ub if len(A_ub) else None, b_ub=b_ub if len(b_ub) else None,
                A_eq=model.A[model.sense == EQ] if (model.sense == EQ).any() else None,
                b_eq=model.rhs[model.sense == EQ] if (model.sense == EQ).any() else None,
                bounds=list(zip(model.lb, model.ub)), method="highs",
            )
            sol = solve_lp(model)
            assert ref.status == 0 and sol.optimal
            assert sol.objective == pytest.approx(ref.fun, abs=1e-6)

    def test_unfixed_binaries_need_relaxation(self):
        with pytest.raises(ValueError):
            solve_lp(toy_binary(), relaxed=False)

    def test_relaxation_of_toy(self):
        assert solve_lp(toy_binary()).objective == pytest.approx(-1.0)


class TestMilp:
    def test_toy_prefers_first(self, kernel):
        sol = solve_milp(toy_binary(), kernel=kernel)
        assert sol.objective == -1.0
        assert (sol["z1"], sol["z2"]) == (1.0, 0.0)
        ref = brute_force_milp(toy_binary(), kernel=kernel)
        assert ref.objective == -1.0

    def test_no_binaries_equals_lp(self):
        rng = np.random.default_rng(3)
        model = random_lp(rng, 6, 5)
        lp, milp, brute = solve_lp(model), solve_milp(model), brute_force_milp(model)
        assert lp.objective == milp.objective == brute.objective
        np.testing.assert_array_equal(lp.x, milp.x)

    def test_infeasible_integer(self):
        mb = ModelBuilder()
        z = mb.add_var("z", binary=True)
        mb.add_constraint({z: 2}, EQ, 1)
        model = mb.build()
        assert solve_lp(model).optimal
        assert solve_milp(model).status is Status.INFEASIBLE
        assert brute_force_milp(model).status is Status.INFEASIBLE

    def test_random_against_brute_force(self, kernel):
        rng = np.random.default_rng(11)
        for _ in range(100):
            nb = int(rng.integers(1, 9))
            nc = int(rng.integers(0, 11))
            model = random_lp(rng, nb + nc, int(rng.integers(1, 9)), n_binary=nb,
                              feasible=bool(rng.random() < 0.9))
            sol = solve_milp(model, kernel=kernel)
            ref = brute_force_milp(model, kernel=kernel)
            assert sol.status is ref.status
            if not sol.optimal:
                continue
            assert sol.objective == pytest.approx(ref.objective, abs=1e-6)
            # independent feasibility re-check and integrality
            assert model.constraint_residual(sol.x) <= 1e-7
            bins = sol.x[model.binary_indices]
            assert np.all(bins == np.round(bins))
            # weak duality
            assert solve_lp(model, kernel=kernel).objective <= sol.objective + 1e-9

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        model = random_lp(rng, 14, 10, n_binary=8)
        a, b = solve_milp(model), solve_milp(model)
        np.testing.assert_array_equal(a.x, b.x)
        assert a.nodes == b.nodes and a.lp_iterations == b.lp_iterations

    def test_brute_force_guard(self):
        mb = ModelBuilder()
        for i in range(MAX_BRUTE_FORCE_BINARIES + 1):
            mb.add_var(f"z{i}", binary=True)
        with pytest.raises(TooManyBinariesError):
            brute_force_milp(mb.build())


@pytest.mark.skipif(len(KERNELS) < 2, reason="compiled kernel not built")
def test_kernels_agree():
    rng = np.random.default_rng(99)
    for _ in range(60):
        model = random_lp(rng, 12, 8, n_binary=int(rng.integers(0, 7)))
        a = solve_milp(model, kernel="python")
        b = solve_milp(model, kernel="cython")
        assert a.status is b.status
        if a.optimal:
            np.testing.assert_allclose(a.x, b.x, atol=1e-9)
            assert a.nodes == b.nodes


class TestModel:
    def test_duplicate_variable(self):
        mb = ModelBuilder()
        mb.add_var("x")
        with pytest.raises(ModelError):
            mb.add_var("x")

    def test_binary_bounds(self):
        with pytest.raises(ModelError):
            ModelBuilder().add_var("z", 0, 2, binary=True)

    def test_empty_bounds(self):
        with pytest.raises(ModelError):
            ModelBuilder().add_var("x", 2, 1)

    def test_undeclared_variable(self):
        mb = ModelBuilder()
        mb.add_var("x")
        with pytest.raises(ModelError):
            mb.add_constraint({3: 1.0}, LE, 0)

    def test_nonfinite(self):
        mb = ModelBuilder()
        x = mb.add_var("x")
        mb.add_constraint({x: math.nan}, LE, 0)
        with pytest.raises(ModelError):
            mb.build()

    def test_frozen(self):
        model = toy_binary()
        with pytest.raises(ValueError):
            model.A[0, 0] = 5.0

    def test_lp_dump(self):
        mb = ModelBuilder("dump")
        x = mb.add_var("x", -1, math.inf)
        z = mb.add_var("z", binary=True)
        mb.add_constraint({x: 1, z: -2.5}, GE, 0.5, "row")
        mb.set_objective({x: 1})
        text = mb.build().to_lp_string()
        assert text.splitlines() == [
            "minimize",
            "  obj: + 1 x",
            "subject to",
            "  row: + 1 x - 2.5 z >= 0.5",
            "bounds",
            "  -1 <= x <= +inf",
            "binary",
            "  z",
            "end",
        ]

    def test_check_feasible(self):
        model = toy_binary()
        assert check_feasible(model, np.array([1.0, 0.0]))
        assert not check_feasible(model, np.array([1.0, 1.0]))
