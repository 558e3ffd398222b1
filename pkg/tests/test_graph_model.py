import numpy as np
import pytest

from qgspectra import (
    DisconnectedGraph,
    MalformedMatching,
    NonPositiveLength,
    UnsupportedDegree,
    build_graph,
    standard_conditions,
    validate_matching,
)
from qgspectra.graph_model import MetricGraph

from conftest import cplx, matching_from_unitary, rand_unitary, step_interval_spec


def test_standard_kinds_are_valid():
    for kind, d in [("dirichlet", 1), ("dirichlet", 3), ("neumann", 2),
                    ("kirchhoff", 2), ("kirchhoff", 4), ("continuity_step", 2)]:
        mc = standard_conditions(kind, d)
        rep = validate_matching(mc.A, mc.B, d)
        assert rep.accepted
        assert rep.rank == d


def test_robin_needs_lambda_and_validates():
    with pytest.raises(MalformedMatching):
        standard_conditions("robin", 1)
    mc = standard_conditions("robin", 2, lam=-2.5)
    assert validate_matching(mc.A, mc.B, 2).accepted
    # phi' = lam phi encoded as -lam*I phi + I phi' = 0
    assert np.allclose(mc.A, -(-2.5) * np.eye(2))


def test_continuity_step_rejects_wrong_degree():
    with pytest.raises(UnsupportedDegree):
        standard_conditions("continuity_step", 3)


def test_random_unitary_pair_accepted():
    rng = np.random.default_rng(0)
    for d in [1, 2, 4]:
        A, B = matching_from_unitary(rand_unitary(rng, d))
        assert validate_matching(A, B, d).accepted


def test_corrupted_matching_rejected():
    # break hermiticity of A B^dagger
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    B = np.eye(2)
    rep = validate_matching(A, B, 2)
    assert not rep.accepted
    spec = step_interval_spec(1.0, 1.0, 5.0)
    spec["vertices"][1]["matching"] = {"A": cplx(A), "B": cplx(B)}
    with pytest.raises(MalformedMatching):
        build_graph(spec)


def test_rank_deficient_pair_rejected():
    A = np.zeros((2, 2))
    B = np.array([[1.0, 0.0], [0.0, 0.0]])
    rep = validate_matching(A, B, 2)
    assert rep.rank == 1 and not rep.accepted


def test_build_step_interval():
    g = build_graph(step_interval_spec(1.0, np.sqrt(3), 213.0))
    assert g.N_V == 3 and g.N_E == 2
    assert g.thresholds() == [0.0, 213.0]
    assert g.vertices[1].matching.kind == "kirchhoff"
    # star ordering fixes matrix rows to sorted outgoing directed indices
    assert g.vertices[1].matching.ordering == (1, 2)


def test_directed_edge_bookkeeping():
    g = build_graph(step_interval_spec(1.0, 2.0, 5.0))
    assert g.reverse(0) == 1 and g.reverse(3) == 2
    assert g.tail(0) == 0 and g.head(0) == 1
    assert g.tail(1) == 1 and g.head(1) == 0
    assert g.star_out(1) == [1, 2]
    assert np.allclose(g.lengths_directed(), [1, 1, 2, 2])


def test_loop_is_split_with_continuity_vertex():
    spec = {
        "vertices": [{"id": "v", "matching": {"kind": "neumann"}}],
        "edges": [{"id": "loop", "from": "v", "to": "v",
                   "length": 2.0, "potential": 1.0}],
    }
    g = build_graph(spec)
    assert g.N_E == 2 and g.N_V == 2
    assert all(abs(e.length - 1.0) < 1e-15 for e in g.edges)
    assert g.degree(0) == 2  # the loop still counts twice at v
    assert g.vertices[1].matching.kind == "kirchhoff"


def test_disconnected_and_bad_length():
    spec = {
        "vertices": [{"id": a, "matching": {"kind": "neumann"}} for a in "abcd"],
        "edges": [
            {"id": 0, "from": "a", "to": "b", "length": 1.0, "potential": 0.0},
            {"id": 1, "from": "c", "to": "d", "length": 1.0, "potential": 0.0},
        ],
    }
    with pytest.raises(DisconnectedGraph):
        build_graph(spec)
    bad = step_interval_spec(0.0, 1.0, 5.0)
    with pytest.raises(NonPositiveLength):
        build_graph(bad)


def test_multimode_expansion_and_mode_map():
    spec = {
        "vertices": [
            {"id": "a", "matching": {"kind": "dirichlet"}},
            {"id": "b", "matching": {"kind": "dirichlet"}},
        ],
        "edges": [{"id": "e", "from": "a", "to": "b",
                   "length": 1.5, "modes": [2.0, 40.0]}],
    }
    g = build_graph(spec)
    assert isinstance(g, MetricGraph)
    assert g.N_E == 2
    assert g.mode_map == {(0, 0): 0, (0, 1): 1}
    assert [e.potential for e in g.edges] == [2.0, 40.0]
    assert g.vertices[0].matching.degree == 2
