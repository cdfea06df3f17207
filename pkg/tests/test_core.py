import math

import pytest
from hypothesis import given, strategies as st

from bidesp.core import (BOTTOM, TOP, InputError, Molecule, PlanResult, Reaction, Route,
                         Template, count_provenance, reaction_cost, route_cost, route_depth,
                         route_from_dict, route_to_dict, validate_route)


def R(rid, rs, p, pl=0.5):
    return Reaction(rid, frozenset(rs), p, "T", pl)


def test_molecule_and_template_checks():
    with pytest.raises(InputError):
        Molecule("a", 0, True)
    with pytest.raises(InputError):
        Template("t", 3)


def test_reaction_checks():
    with pytest.raises(InputError):
        R("r", [], "p")
    with pytest.raises(InputError):
        R("r", ["p"], "p")
    with pytest.raises(InputError):
        R("r", ["a"], "p", 0.0)
    with pytest.raises(InputError):
        R("r", ["a"], "p", 1.5)


def test_reaction_cost_modes():
    assert reaction_cost(0.5, "unit") == 1.0
    assert reaction_cost(0.5, "neg_log_plausibility") == -math.log(0.5)
    assert reaction_cost(1.0, "neg_log_plausibility") == 0.0
    assert math.copysign(1, reaction_cost(1.0, "neg_log_plausibility")) == 1
    with pytest.raises(InputError):
        reaction_cost(0.5, "bogus")


def test_valid_single_step():
    route = Route.build([R("r1", ["b1", "b2"], "p")])
    assert validate_route(route, "p", {"b1", "b2"}).valid


def test_c1_unsynthesized_reactant():
    route = Route.build([R("r1", ["a", "b"], "p")])
    rep = validate_route(route, "p", {"b"})
    assert not rep.valid and rep.violated == ("C1",)


def test_c2_target_not_produced_or_consumed():
    route = Route.build([R("r1", ["b"], "a")])
    assert "C2" in validate_route(route, "p", {"b"}).violated
    route = Route.build([R("r1", ["b"], "p"), R("r2", ["p"], "q")])
    assert "C2" in validate_route(route, "p", {"b"}).violated


def test_sm_constraints():
    route = Route.build([R("r1", ["a"], "i"), R("r2", ["i", "b"], "p")])
    # sm a is a non-buyable leaf: allowed by C4, used so C3 holds
    assert validate_route(route, "p", {"b"}, sm="a").valid
    # sm absent from the route
    rep = validate_route(route, "p", {"b", "a"}, sm="z")
    assert rep.violated == ("C3",)
    # sm present but produced inside the route
    rep = validate_route(route, "p", {"a", "b"}, sm="i")
    assert "C3" in rep.violated


def test_sm_set_any_member():
    route = Route.build([R("r1", ["a"], "p")])
    assert validate_route(route, "p", {"a"}, sm={"a", "x"}).valid
    with pytest.raises(InputError):
        validate_route(route, "p", {"a"}, sm=set())


def test_dag_violations_reported_together():
    # two producers of i, and target consumed
    route = Route.build([R("r1", ["b"], "i"), R("r2", ["c"], "i"), R("r3", ["i"], "p"),
                         R("r4", ["p"], "q")])
    rep = validate_route(route, "p", {"b", "c"})
    assert set(rep.violated) == {"DAG", "C2"}


def test_cycle_detected():
    route = Route.build([R("r1", ["a"], "b"), R("r2", ["b"], "a"), R("r3", ["a"], "p")])
    assert "DAG" in validate_route(route, "p", set()).violated


def test_empty_and_unknown():
    with pytest.raises(InputError):
        validate_route(Route(), "p", set())
    route = Route.build([R("r1", ["b"], "p")])
    with pytest.raises(InputError):
        validate_route(route, "p", {"b"}, known={"p"})


def test_route_metrics():
    route = Route.build([R("r1", ["b"], "a", 0.5), R("r2", ["a", "c"], "p", 0.25)],
                        {"r1": BOTTOM})
    assert route_cost(route, "unit") == 2.0
    assert route_cost(route) == math.fsum([-math.log(0.5), -math.log(0.25)])
    assert route_depth(route) == 2
    assert count_provenance(route) == (1, 1)
    assert route.roots() == ["p"]
    assert route.leaves() == {"b", "c"}
    assert route.provenance_of("r1") == BOTTOM
    assert route.provenance_of("r2") == TOP


def test_route_dict_roundtrip():
    route = Route.build([R("r1", ["b"], "a"), R("r2", ["a", "c"], "p")], {"r2": BOTTOM})
    d = route_to_dict(route, "p", "b")
    back, target, sm = route_from_dict(d)
    assert back == route and target == "p" and sm == "b"
    with pytest.raises(InputError):
        route_from_dict({"reactions": [{"id": "x"}]})


def test_bad_provenance():
    with pytest.raises(InputError):
        Route.build([R("r1", ["b"], "p")], "sideways")


def test_plan_result_set_route():
    res = PlanResult("x")
    route = Route.build([R("r1", ["b"], "a"), R("r2", ["a"], "p")], {"r1": BOTTOM})
    res.set_route(route, "unit")
    assert (res.route_cost, res.route_reactions, res.route_depth,
            res.forward_reaction_count) == (2.0, 2, 2, 1)


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=12))
def test_route_cost_order_independent(pls):
    rxns = [R(f"r{i}", [f"m{i}"], f"m{i + 1}", p) for i, p in enumerate(pls)]
    a = Route.build(rxns)
    b = Route.build(reversed(rxns))
    assert a == b
    assert route_cost(a) == route_cost(b)
    assert route_depth(a) == len(pls)
    assert validate_route(a, f"m{len(pls)}", {"m0"}).valid
