from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from conftest import bus, gen, line, load
from gridcomm.cascade import run_cascade
from gridcomm.control import (
    AccountingError,
    ControlOutcome,
    build_full_model,
    build_partial_model,
    check_outcome,
    compute_yield,
    extract_outcome,
    prefer_stable_areas,
)
from gridcomm.grid import GridCase
from gridcomm.milp import brute_force_milp, solve_lp, solve_milp, solve_with_bounds
from gridcomm.partition import apply_mode, area_island, partition_areas
from instances import random_instance


def solve_full(case, failed=()):
    model = build_full_model(case, failed)
    sol = solve_milp(model)
    outcome = extract_outcome(case, model, sol, partition_areas(case, failed, ()))
    return model, sol, outcome


def solve_partial(case, unc, mode, failed=()):
    part = apply_mode(partition_areas(case, failed, unc), case, mode)
    model = build_partial_model(case, part)
    sol = prefer_stable_areas(model, solve_milp(model))
    outcome = extract_outcome(case, model, sol, part)
    served = {
        a.area_id: run_cascade(area_island(case, a), (case.omega_min, case.omega_max)).served
        for a in part.areas
        if not outcome.stable[a.area_id]
    }
    return part, model, sol, outcome, compute_yield(outcome, served, case)


@pytest.fixture(scope="module")
def half_saved_case():
    """A controllable pocket plus a weakly tied area that must island.

    The area's load cannot be met by its droop response and the 0.1 pu tie
    line, so it islands; its relays then shed one of two equal loads.
    """
    return GridCase(
        nodes=(
            gen("Gc", 1.0, 1.5), bus("Bc"), load("Lc", -1.0),
            bus("Bu"), gen("Gu", 0.5, 0.8), load("La", -0.5), load("Lb", -0.5),
        ),
        lines=(
            line("gc", "Gc", "Bc"), line("lc", "Bc", "Lc"),
            line("tie", "Bc", "Bu", f_max=0.1),
            line("gu", "Gu", "Bu"), line("la", "Bu", "La"), line("lb", "Bu", "Lb"),
        ),
    )


class TestFullModel:
    def test_census(self, case5):
        model = build_full_model(case5)
        kinds = Counter(name.split("[")[0] for name in model.var_names)
        assert kinds == {"theta": 5, "omega": 5, "pg": 1, "pl": 1, "f": 4, "z": 4}
        assert model.n_vars == 20
        assert int(model.binary.sum()) == 4

    def test_full_service(self, case5):
        model, sol, outcome = solve_full(case5)
        assert sol.objective == pytest.approx(-1.0, abs=1e-9)
        assert set(outcome.line_status.values()) == {1}
        assert outcome.served == {"L1": pytest.approx(-1.0, abs=1e-9)}
        assert compute_yield(outcome, {}, case5).ratio == pytest.approx(1.0, abs=1e-9)
        ref = brute_force_milp(model)
        assert ref.objective == pytest.approx(sol.objective, abs=1e-6)

    def test_no_transport(self, case5):
        blocked = replace(case5, lines=tuple(replace(ln, f_max=0.0) for ln in case5.lines))
        model, sol, outcome = solve_full(blocked)
        assert sol.objective == pytest.approx(0.0, abs=1e-9)
        assert set(outcome.flow.values()) == {0.0}

    def test_tight_line_matches_brute_force(self, case5):
        tight = replace(case5, lines=tuple(
            replace(ln, f_max=0.35) if ln.id == "l4" else ln for ln in case5.lines
        ))
        model, sol, outcome = solve_full(tight)
        assert sol.objective == pytest.approx(brute_force_milp(model).objective, abs=1e-6)
        assert -sol.objective < 1.0 - 1e-6

    def test_empty_grid(self, case5):
        model, sol, outcome = solve_full(case5, [n.id for n in case5.nodes])
        assert model.n_vars == 0
        assert sol.optimal and sol.objective == 0.0

    def test_tripped_line_has_no_flow(self, transit_case):
        model, sol, outcome = solve_full(transit_case, ["G2"])
        assert compute_yield(outcome, {}, transit_case).ratio == pytest.approx(0.6, abs=1e-9)
        for lid, z in outcome.line_status.items():
            if z == 0:
                assert outcome.flow[lid] == 0.0

    @pytest.mark.parametrize("fixture", ["case5", "transit_case", "case30"])
    def test_intact_grid_serves_everything(self, fixture, request):
        case = request.getfixturevalue(fixture)
        _, _, outcome = solve_full(case)
        assert compute_yield(outcome, {}, case).ratio == pytest.approx(1.0, abs=1e-9)


class TestPartialModel:
    def test_no_areas_is_full_model(self, case30):
        failed = ["G01", "G04"]
        part = apply_mode(partition_areas(case30, failed, ()), case30, "init")
        a, b = build_partial_model(case30, part), build_full_model(case30, failed)
        assert a.var_names == b.var_names and a.con_names == b.con_names
        for field in ("A", "rhs", "sense", "c", "lb", "ub", "binary"):
            np.testing.assert_array_equal(getattr(a, field), getattr(b, field))

    def test_requires_mode(self, case5):
        with pytest.raises(ValueError):
            build_partial_model(case5, partition_areas(case5, (), ["B3"]))

    @pytest.mark.parametrize("mode", ["init", "zero"])
    def test_transit_bus(self, transit_case, mode):
        _, sol_full, _ = solve_full(transit_case)
        part, model, sol, outcome, yld = solve_partial(transit_case, ["Bt"], mode)
        assert outcome.stable == {0: 1}
        assert sol.objective == pytest.approx(sol_full.objective, abs=1e-6)
        assert yld.ratio == pytest.approx(1.0, abs=1e-9)

    def test_generator_area_forced_unstable(self):
        case = GridCase(
            nodes=(gen("G1", 1.0, 1.5), bus("B1"), bus("B2"), load("L1", -0.6)),
            lines=(line("g", "G1", "B1"), line("m", "B1", "B2"), line("l", "B2", "L1")),
        )
        part, model, sol, outcome, yld = solve_partial(case, ["G1"], "init")
        assert outcome.stable == {0: 0}
        assert outcome.line_status["g"] == 0
        assert sol.objective == pytest.approx(0.0, abs=1e-9)
        ref = brute_force_milp(model)
        assert ref.objective == pytest.approx(0.0, abs=1e-9)
        forced = model.lb.copy(), model.ub.copy()
        forced[0][model.var("I[0]")] = 1.0
        assert not solve_with_bounds(model, *forced).optimal
        # with full control the generator simply ramps down
        assert -solve_full(case)[1].objective == pytest.approx(0.6, abs=1e-9)

    def test_transit_island_prefers_zero_mode(self, transit_case):
        *_, y_init = solve_partial(transit_case, ["Bt", "Lu"], "init", ["G2"])
        *_, y_zero = solve_partial(transit_case, ["Bt", "Lu"], "zero", ["G2"])
        assert y_init.ratio == 0.0
        assert y_zero.ratio == pytest.approx(0.25, abs=1e-9)

    def test_zero_mode_areas_stay_stable(self, case30):
        part, model, sol, outcome, _ = solve_partial(case30, ["B03", "L05", "G07"], "zero")
        assert all(outcome.stable.values())

    def test_unstable_area_accounting(self, half_saved_case):
        part, model, sol, outcome, yld = solve_partial(half_saved_case, ["Bu", "Gu", "La", "Lb"], "init")
        assert outcome.stable == {0: 0}
        assert outcome.line_status["tie"] == 0
        assert outcome.flow["la"] == outcome.flow["lb"] == 0.0
        assert set(outcome.served) == {"Lc"}
        assert {"Bu", "Gu", "La", "Lb"} == set(outcome.pending)
        # controllable 1.0 + stable areas 0 + cascade 0.5, over 2.0 initial
        assert outcome.served_total == pytest.approx(1.0, abs=1e-9)
        assert yld.served == pytest.approx(1.5, abs=1e-9)
        assert yld.ratio == pytest.approx(0.75, abs=1e-9)

    def test_oracle_equivalence_small(self):
        rng = np.random.default_rng(8)
        for i in range(30):
            inst = random_instance(rng, partial=bool(i % 2))
            sol = solve_milp(inst.model)
            ref = brute_force_milp(inst.model)
            assert sol.status is ref.status
            assert sol.objective == pytest.approx(ref.objective, abs=1e-6)


class TestYield:
    def outcome(self, served, stable=None):
        return ControlOutcome(
            dispatch={}, effective_output={}, served=served, flow={}, line_status={},
            omega={}, theta={}, stable=stable or {}, objective=0.0,
        )

    def test_arithmetic(self):
        case = GridCase(nodes=(load("L", -1.0),), lines=())
        assert compute_yield(self.outcome({"L": -0.77}), {}, case).ratio == pytest.approx(0.77)
        assert compute_yield(self.outcome({"L": -1.0}), {}, case).ratio == 1.0

    def test_cascade_results_must_match(self):
        case = GridCase(nodes=(load("L", -1.0),), lines=())
        with pytest.raises(ValueError):
            compute_yield(self.outcome({}, {0: 0}), {}, case)
        with pytest.raises(ValueError):
            compute_yield(self.outcome({}, {0: 1}), {0: 0.2}, case)

    def test_overcount_is_fatal(self):
        case = GridCase(nodes=(load("L", -1.0),), lines=())
        with pytest.raises(AccountingError):
            compute_yield(self.outcome({"L": -1.0}, {0: 0}), {0: 0.5}, case)


def test_outcomes_are_physical():
    rng = np.random.default_rng(21)
    for i in range(40):
        inst = random_instance(rng, partial=bool(i % 2), max_binaries=14)
        sol = prefer_stable_areas(inst.model, solve_milp(inst.model))
        outcome = extract_outcome(inst.case, inst.model, sol, inst.partition)
        assert check_outcome(inst.case, inst.partition, outcome) == []


def test_monotone_in_capacity():
    rng = np.random.default_rng(13)
    for _ in range(25):
        inst = random_instance(rng, partial=False, max_binaries=14)
        bigger = replace(inst.case, lines=tuple(
            replace(ln, f_max=ln.f_max * float(rng.uniform(1.0, 2.0))) for ln in inst.case.lines
        ))
        base = solve_milp(inst.model).objective
        relaxed = solve_milp(build_full_model(bigger, inst.failed)).objective
        assert relaxed <= base + 1e-6


def test_partial_never_beats_full():
    rng = np.random.default_rng(17)
    for _ in range(30):
        inst = random_instance(rng, partial=True, max_binaries=14)
        part = inst.partition
        unc = part.uncontrollable_nodes
        mode = part.areas[0].mode.value if part.areas else "init"
        *_, y_partial = solve_partial(inst.case, unc, mode, inst.failed)
        _, _, full = solve_full(inst.case, inst.failed)
        assert compute_yield(full, {}, inst.case).ratio >= y_partial.ratio - 1e-6


def test_relaxation_bounds_milp(case30):
    model = build_full_model(case30, ["G02", "G05"])
    assert solve_lp(model).objective <= solve_milp(model).objective + 1e-9
