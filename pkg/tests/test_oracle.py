import pytest
from hypothesis import given, settings, strategies as st

from avpark.errors import OracleLimitError
from avpark.instance import GeneratorConfig, generate_instance
from avpark.model import Assignment, check_feasibility, objective
from avpark.oracle import solve_exact, verify_optimal

from helpers import build, exhaustive_optimum


def test_single_av_parks_whole_window():
    # window [2, 3]
    inst = build(4, [{"t_start": 1, "t_end": 5, "m_to": 1, "m_back": 1}], [([0] * 4, 1)])
    a = solve_exact(inst)
    assert objective(a) == 2 == exhaustive_optimum(inst)


def test_two_avs_share_one_space():
    inst = build(4, [{"t_start": 1, "t_end": 6, "m_to": 1, "m_back": 1}] * 2, [([0] * 4, 1)])
    a = solve_exact(inst)
    assert objective(a) == 3 == exhaustive_optimum(inst)
    assert check_feasibility(inst, a) == []


def test_unmeetable_demand_is_infeasible():
    D = 6
    inst = build(D, [{"t_start": 1, "t_end": 8}, {"t_start": 1, "t_end": 3}],
                 [([0, 0, 0, 0, 2, 0], 2)])
    assert solve_exact(inst) is None
    assert exhaustive_optimum(inst) is None


def test_node_limit_raises():
    inst = generate_instance(GeneratorConfig(n_avs=10, n_facilities=3, D=12, seed=1))
    with pytest.raises(OracleLimitError):
        solve_exact(inst, max_nodes=3)


def test_output_is_deterministic():
    inst = generate_instance(GeneratorConfig(n_avs=8, n_facilities=2, D=12, seed=5))
    assert solve_exact(inst) == solve_exact(inst)


def test_verify_optimal():
    inst = generate_instance(GeneratorConfig(n_avs=6, n_facilities=2, D=10, seed=2))
    a = solve_exact(inst)
    assert verify_optimal(inst, a)
    k = next(k for k in range(inst.K) if len(a.slots[k]) > inst.plans.m_stay[k, a.facility[k]])
    dropped = list(a.slots)
    dropped[k] = dropped[k][1:]
    assert not verify_optimal(inst, Assignment(a.facility, tuple(dropped)))


@st.composite
def tiny_instance(draw):
    K = draw(st.integers(1, 3))
    F = draw(st.integers(1, 2))
    D = draw(st.integers(2, 5))
    avs = []
    for _ in range(K):
        t_start = draw(st.integers(0, D))
        avs.append({"t_start": t_start, "t_end": draw(st.integers(t_start, D + 2)),
                    "m_to": [draw(st.integers(0, 1)) for _ in range(F)],
                    "m_back": [draw(st.integers(0, 1)) for _ in range(F)],
                    "stay": [draw(st.integers(1, 3)) for _ in range(F)]})
    facs = []
    for _ in range(F):
        cap = draw(st.integers(0, 2))
        facs.append(([draw(st.integers(0, cap)) for _ in range(D)], cap))
    return build(D, avs, facs)


@settings(max_examples=150, deadline=None)
@given(tiny_instance())
def test_matches_exhaustive_enumeration(inst):
    expected = exhaustive_optimum(inst)
    got = solve_exact(inst)
    if expected is None:
        assert got is None
    else:
        assert got is not None and objective(got) == expected
        assert check_feasibility(inst, got) == []
