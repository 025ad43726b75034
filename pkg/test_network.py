"""
Spectral network tests: seeds, vertical trajectories, faces, Euler audit and the second-kind measure.
Run from project root:
  pytest test_network.py
"""
import os
import sys

PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, PROJECT_ROOT)

import networkx as nx
import numpy as np
import pytest

from curve import fiber
from errors import NotHyperelliptic
from families import degenerate_weierstrass, one_matrix, strebel_exterior, weierstrass
from network import (
    build_first_kind,
    build_second_kind,
    difference_curve,
    far_chart,
    index_at,
    seeds,
    stop_rules,
    trace_vertical,
    x_plane_edges,
)
from polygon import BivariatePolynomial

STREBEL_POINTS = [0.0, 1.0, 0.5 + 1.0j]


@pytest.fixture(scope="module")
def nodal_network():
    return build_first_kind(degenerate_weierstrass(1.0))


@pytest.fixture(scope="module")
def semicircle():
    return one_matrix([0.0, 0.5])


@pytest.fixture(scope="module")
def semicircle_first(semicircle):
    return build_first_kind(semicircle)


@pytest.fixture(scope="module")
def semicircle_second(semicircle):
    return build_second_kind(semicircle)


@pytest.fixture(scope="module")
def strebel():
    return strebel_exterior(STREBEL_POINTS, [1.0, 1.0, 1.0])


@pytest.fixture(scope="module")
def strebel_network(strebel):
    return build_first_kind(strebel)


# ---- Seeds ----

def test_constant_sheet_has_no_seeds():
    poly = BivariatePolynomial.from_terms({(0, 1): 1.0, (0, 0): -1.0})
    assert seeds(poly) == []
    graph = build_first_kind(poly)
    assert graph.edges == ()
    assert graph.faces == ()


def test_generic_branch_points_have_three_directions():
    found = seeds(weierstrass(1.0, 0.5))
    branch = [s for s in found if s.kind == "ramification"]
    assert len(branch) == 3
    for s in branch:
        assert s.order == 2
        assert len(s.local_angles) == 6
        gaps = np.diff(sorted(s.x_angles))
        assert len(s.x_angles) == 3
        assert np.allclose(gaps, 2 * np.pi / 3, atol=1e-6)


def test_nodal_curve_seeds():
    found = seeds(degenerate_weierstrass(1.0))
    kinds = sorted(s.kind for s in found)
    assert kinds == ["nodal", "nodal", "ramification"]
    branch = next(s for s in found if s.kind == "ramification")
    assert abs(branch.x + 2) < 1e-8
    assert branch.order == 2
    for s in found:
        if s.kind == "nodal":
            assert abs(s.x - 1) < 1e-8
            assert s.order == 1
            assert len(s.local_angles) == 4
    assert sum(s.order for s in found) == 4


def test_far_chart_keeps_the_curve():
    poly = strebel_exterior(STREBEL_POINTS, [1.0, 1.0, 1.0])
    chart = far_chart(poly)
    x = 7.0 + 2.0j
    for y in fiber(poly, x).roots:
        w, v = 1 / x, -y * x ** 2
        assert abs(chart(w, v)) < 1e-8 * chart.scale


# ---- First kind ----

def test_nodal_network_edges(nodal_network):
    assert len(nodal_network.edges) == 14
    assert all(not e.compact for e in nodal_network.edges)
    assert all(e.stop == "puncture" for e in nodal_network.edges)


def test_nodal_network_faces(nodal_network):
    counts = nodal_network.face_counts()
    assert counts == {"half_plane": 10, "strip": 2}
    widths = [f.width for f in nodal_network.faces if f.kind == "strip"]
    for w in widths:
        assert w == pytest.approx(12 * np.sqrt(3) / 5, rel=1e-5)


def test_nodal_network_audit(nodal_network):
    audit = nodal_network.audit
    assert audit["passed"]
    assert all(audit["identities"].values())
    assert audit["network_genus"] == 0
    assert audit["deg_zeros"] == 4
    assert audit["phi_drift"] < 1e-6


def test_trajectories_stay_vertical(nodal_network):
    for edge in nodal_network.edges:
        assert edge.phi_drift() < 1e-6
        assert np.all(np.diff(edge.arc) > -1e-9)


def test_network_graph_valence(nodal_network):
    g = nodal_network.graph()
    assert isinstance(g, nx.MultiGraph)
    for k, s in enumerate(nodal_network.seeds):
        assert g.degree(("seed", k)) == len(s.local_angles)


def test_semicircle_first_kind(semicircle_first):
    compact = [e for e in semicircle_first.edges if e.compact]
    assert len(compact) == 2
    for edge in compact:
        assert np.max(np.abs(edge.xs.imag)) <= 1e-6
    assert semicircle_first.face_counts() == {"half_plane": 8}
    assert semicircle_first.audit["passed"]


def test_semicircle_seed_directions(semicircle_first):
    for s in semicircle_first.seeds:
        assert abs(abs(s.x) - 2) < 1e-8
        assert np.allclose(np.diff(sorted(s.x_angles)), 2 * np.pi / 3, atol=1e-6)


def test_strebel_half_cylinders(strebel_network):
    counts = strebel_network.face_counts()
    assert counts == {"half_cylinder": 6}
    for face in strebel_network.faces:
        assert face.perimeter == pytest.approx(2 * np.pi, abs=1e-6)
        assert face.puncture is not None
    assert all(e.compact for e in strebel_network.edges)
    assert strebel_network.audit["passed"]


def test_strebel_x_plane_edges(strebel_network):
    assert len(x_plane_edges(strebel_network)) == 3


def test_free_trajectory_closes_around_a_marked_point(strebel):
    rules = stop_rules(strebel)
    x = 0.05
    y = fiber(strebel, x).roots[0]
    edge = trace_vertical(strebel, (x, y), 0.0, rules)
    assert edge.stop == "closed"
    assert edge.length == pytest.approx(2 * np.pi, abs=1e-5)
    assert abs(edge.xs[-1] - edge.xs[0]) < 1e-6


def test_network_serializes(nodal_network):
    data = nodal_network.to_dict()
    assert data["kind"] == "first"
    assert len(data["edges"]) == 14
    assert data["face_counts"]["strip"] == 2


# ---- Second kind ----

def test_difference_curve_of_even_curve(semicircle):
    diff = difference_curve(semicircle)
    for x in (0.3, 3.0 + 1.0j):
        ys = fiber(semicircle, x).roots
        w = ys[0] - ys[1]
        assert abs(diff(x, w)) < 1e-10


def test_difference_curve_with_linear_term():
    poly = BivariatePolynomial.from_terms({(0, 2): 1.0, (1, 1): 1.0, (2, 0): -1.0, (0, 0): 1.0})
    diff = difference_curve(poly)
    x = 0.7 + 0.2j
    ys = fiber(poly, x).roots
    assert abs(diff(x, ys[0] - ys[1])) < 1e-10


def test_second_kind_needs_two_sheets():
    line = BivariatePolynomial.from_terms({(0, 1): 1.0, (2, 0): -1.0, (0, 0): 0.5})
    with pytest.raises(NotHyperelliptic):
        build_second_kind(line)


def test_second_kind_on_three_sheets():
    # y^3 - 3y = x: simple branch points at x = -2 (y = 1) and x = 2 (y = -1)
    cubic = BivariatePolynomial.from_terms({(0, 3): 1.0, (0, 1): -3.0, (1, 0): -1.0})
    graph = build_second_kind(cubic)
    assert graph.kind == "second"
    assert sorted(s.x.real for s in graph.seeds) == pytest.approx([-2.0, 2.0], abs=1e-8)
    assert all(s.kind == "sheet_pair" and len(s.x_angles) == 3 for s in graph.seeds)
    assert 3 <= len(graph.edges) <= 6
    for edge in graph.edges:
        assert edge.kind == "second"
        assert {edge.start[0], edge.end[0]} <= {"seed", "puncture"}
    assert graph.audit["passed"]
    # the two sheets meeting at x = -2 are conjugate on the real ray to the left
    assert any(edge.stop == "puncture" and min(edge.xs[0].real, edge.xs[-1].real) < -10
               for edge in graph.edges)


def test_semicircle_measure(semicircle_second):
    assert len(semicircle_second.support) == 1
    (measure,) = semicircle_second.measures
    assert measure.mass == pytest.approx(1.0, abs=1e-6)
    assert measure.sign == "+"
    interior = slice(2, -2)
    xs = measure.xs[interior].real
    expected = np.sqrt(4 - xs ** 2) / (2 * np.pi)
    assert np.allclose(measure.density[interior], expected, atol=1e-5)
    assert abs(measure.density[0]) < 1e-6
    assert abs(measure.density[-1]) < 1e-6


def test_semicircle_has_no_virtual_vertices(semicircle_second):
    assert semicircle_second.virtual_vertices == ()


def test_index_orders_sheets_by_phi(semicircle):
    index = index_at(semicircle, 3.0)
    assert sum(index["phi"]) == pytest.approx(0.0, abs=1e-8)
    assert index["top"] == pytest.approx(np.sqrt(5) / 2, abs=1e-8)


def test_strebel_second_kind_matches_first(strebel):
    graph = build_second_kind(strebel, probe_index=False)
    assert len(graph.edges) == 3
    assert len(graph.support) == 3
