import itertools
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hbtucker import properties as props
from hbtucker.properties import AssignmentModel

from oracles import crp_eppf

CRP = AssignmentModel.crp
IND = AssignmentModel.independent_crp
PAM = AssignmentModel.pam_node
NCRP = AssignmentModel.generalized_ncrp


def _set_partitions_of_type(sizes) -> int:
    n = sum(sizes)
    count = math.factorial(n)
    for s in sizes:
        count //= math.factorial(s)
    for s in set(sizes):
        count //= math.factorial(sizes.count(s))
    return count


def test_singletons_have_probability_one():
    assert props.exact_partition_prob(CRP(2), [1]) == 1
    assert props.exact_partition_prob(IND(0.5, 3), [[1]]) == 1
    assert props.exact_partition_prob(NCRP(1, 0.5, 2, 0.25), [[1]]) == 1


def test_crp_two_one_partition():
    p = props.exact_partition_prob(CRP(1), [2, 1])
    assert p == Fraction(1, 2)
    assert math.isclose(float(p), 3 * crp_eppf([2, 1], 1.0))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=1, max_size=3).filter(lambda s: sum(s) <= 6), st.sampled_from([Fraction(1, 2), 1, 2, 3]))
def test_crp_enumerator_matches_eppf(sizes, gamma):
    sizes = sorted(sizes, reverse=True)
    p = props.exact_partition_prob(CRP(gamma), sizes)
    assert math.isclose(float(p), _set_partitions_of_type(sizes) * crp_eppf(sizes, float(gamma)), rel_tol=1e-12)


def test_symmetric_node_swap_is_equal():
    w = props.dirichlet_swap_witness((1, 1), (1, 2))
    assert w["separable"] == w["separable_swapped"] == Fraction(1, 6)
    assert w["exact_ratio"] == 1


def test_asymmetric_node_witness_values():
    w = props.dirichlet_swap_witness((1, 2), (1, 2))
    assert (w["separable"], w["separable_swapped"]) == (Fraction(1, 8), Fraction(1, 9))
    assert w["exact_ratio"] != 1


@pytest.mark.parametrize(
    "model",
    [IND(1, 1), IND(Fraction(1, 3), 4), PAM([1, 1], [1, 1]), PAM([1, 2], [[1, 3], [2, 1]]), NCRP(1, 0.5, 2, 0.5)],
    ids=["ind-sym", "ind-asym", "pam-sym", "pam-asym", "ncrp"],
)
def test_exchangeability_holds(model):
    assert props.check_exchangeability(model, 4).holds


@pytest.mark.parametrize("model", [CRP(1), IND(1, 2), PAM([1, 2], [1, 3]), NCRP(2, 0.5, 1, 0.25)])
@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_partition_probabilities_sum_to_one(model, n):
    total = sum(p for _, p in props.classes(model, n).values())
    assert total == 1


def test_loose_partition_symmetric_and_asymmetric():
    assert props.check_partition_property(PAM([1, 1], [1, 1]), 4, "loose").holds
    bad = props.check_partition_property(PAM([1], [[1, 2]]), 3, "loose")
    assert not bad.holds
    assert bad.witness["prob"] != bad.witness["permuted_prob"]


def test_loose_partition_for_unlabeled_models_notes_the_construction():
    rep = props.check_partition_property(IND(1, 2), 3, "loose")
    assert rep.holds and rep.note


def test_omega_value_and_strict_failure():
    assert props.omega(1, 2, 3, 3, 0) == Fraction(math.factorial(2) * math.factorial(2), math.factorial(3) * math.factorial(1))
    assert not props.check_partition_property(NCRP(1, 0, 1, 0), 3, "strict").holds


def test_rich_get_richer():
    assert props.check_rich_get_richer(IND(1, 1), 4, "independent").holds
    rep = props.check_rich_get_richer(PAM([10, Fraction(1, 10)], [1, 1]), 2, "hierarchical")
    assert not rep.holds and rep.witness["mode"] == 1
    assert props.check_rich_get_richer(PAM([1, 1], [1, 1]), 1, "hierarchical").holds


def test_rich_get_richer_row_sums_three_one():
    opts = props.options(IND(1, 1), ((3,), (1,)))
    xi = [sum(p for (i, _), p in opts.items() if i == r) for r in range(2)]
    assert xi[0] > xi[1]


def test_independent_flavor_rejects_nested_models():
    with pytest.raises(ValueError):
        props.check_rich_get_richer(NCRP(1, 0, 1, 0), 3, "independent")


def test_invalid_discount_is_reported_not_raised():
    rep = props.check_exchangeability(NCRP(1, 2, 1, 0), 3)
    assert not rep.holds and "invalid_parameters" in rep.witness


def test_linearity_check():
    assert props.linearity_check(lambda x: 3 * x)["exchangeable"]
    quad = props.linearity_check(lambda x: x * x)
    assert not quad["exchangeable"] and quad["mismatches"]
    assert props.linearity_check(lambda x: x)["derived_f"] == [1, 2, 3, 4, 5, 6]


def test_given_order_versus_all_orders():
    model = IND(1, 2)
    rho = [[2, 0], [0, 1]]
    orders = set(itertools.permutations([(0, 0), (0, 0), (1, 1)]))
    probs = {props.exact_partition_prob(model, rho, order=o) for o in orders}
    assert len(probs) == 1
    assert props.exact_partition_prob(model, rho) == 3 * probs.pop()


def test_checks_are_deterministic():
    m = NCRP(1, Fraction(1, 2), 1, Fraction(1, 2))
    a = [r.to_json() for r in (props.check_exchangeability(m, 3), props.check_partition_property(m, 3, "strict"))]
    b = [r.to_json() for r in (props.check_exchangeability(m, 3), props.check_partition_property(m, 3, "strict"))]
    assert a == b


def test_small_grid_scans():
    grid = (Fraction(1, 2), 2)
    assert all(c.all_pass for c in props.scan_grid("independent-crp", 4, grid))
    assert not any(c.all_pass for c in props.scan_grid("generalized-ncrp", 4, grid))
