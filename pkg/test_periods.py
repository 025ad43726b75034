"""
Period tests: branch points, marking, periods, Riemann matrix, period Jacobian.
Run from project root:
  pytest test_periods.py
"""
import os
import sys

PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, PROJECT_ROOT)

import numpy as np
import pytest

from curve import fiber
from errors import NotHyperelliptic
from families import degenerate_weierstrass, strebel_exterior, weierstrass
from periods import (
    build_hyperelliptic_frame,
    circle_loop,
    evaluate_frame,
    hyperelliptic_model,
    loop_integral,
    periods,
    reanchor_frame,
    special_points,
    symplectic_basis,
)
from polygon import BivariatePolynomial, analyze

J2 = np.array([[0, 1], [-1, 0]])


@pytest.fixture(scope="module")
def lemniscatic():
    poly = weierstrass(1.0, 0.0)  # y^2 = x^3 - x
    basis = list(analyze(poly).moduli_basis)
    frame, jac = evaluate_frame(poly, build_hyperelliptic_frame(poly), basis)
    return poly, basis, frame, jac


def test_lemniscatic_model():
    model = hyperelliptic_model(weierstrass(1.0, 0.0))
    assert np.allclose(model.branch_points, [-1.0, 0.0, 1.0], atol=1e-10)
    assert model.branch_at_infinity
    assert model.genus == 1
    assert not model.nodes


def test_lemniscatic_marking_is_symplectic(lemniscatic):
    _, _, frame, _ = lemniscatic
    assert np.array_equal(frame.intersection, J2)
    assert abs(round(np.linalg.det(frame.combination))) == 1


def test_lemniscatic_tau(lemniscatic):
    _, _, frame, _ = lemniscatic
    assert abs(frame.tau[0, 0] - 1j) < 1e-6


def test_lemniscatic_cycle_symmetry(lemniscatic):
    # Y is real over (-1, 0) and imaginary over (0, 1)
    _, _, frame, _ = lemniscatic
    around_left, around_right = frame.chain_periods
    assert abs(around_left.real) < 1e-9
    assert abs(around_right.imag) < 1e-9
    assert abs(abs(around_left) - abs(around_right)) < 1e-9


def test_genus_of_weierstrass_and_its_degeneration():
    assert hyperelliptic_model(weierstrass(1.0, 0.5)).genus == 1
    model = hyperelliptic_model(degenerate_weierstrass(1.0))
    assert model.genus == 0
    assert len(model.nodes) == 1 and abs(model.nodes[0] - 1.0) < 1e-6
    assert len(model.branch_points) == 1 and abs(model.branch_points[0] + 2.0) < 1e-8


def test_degenerate_frame_is_empty():
    frame = periods(degenerate_weierstrass(1.0), build_hyperelliptic_frame(degenerate_weierstrass(1.0)))
    assert frame.genus == 0
    assert len(frame.zeta) == 0


def test_strebel4_is_elliptic():
    model = hyperelliptic_model(strebel_exterior([0.0, 1.0, 2.0, 4.0], [1.0, 1.0, 1.0, 1.0]))
    # the squared marked polynomial is deflated and leaves no nodes
    assert model.genus == 1
    assert not model.nodes
    assert len(model.branch_points) == 3


def test_cubic_in_y_is_not_hyperelliptic():
    poly = BivariatePolynomial.from_terms({(0, 3): 1.0, (1, 0): -1.0, (0, 0): 1.0})
    with pytest.raises(NotHyperelliptic):
        hyperelliptic_model(poly)


def test_symplectic_basis_of_a_chain():
    chain = np.array([[0, 1, 0, 0], [-1, 0, 1, 0], [0, -1, 0, 1], [0, 0, -1, 0]])
    c = symplectic_basis(chain)
    g = 2
    standard = np.block([[np.zeros((g, g), int), np.eye(g, dtype=int)], [-np.eye(g, dtype=int), np.zeros((g, g), int)]])
    assert np.array_equal(c @ chain @ c.T, standard)
    assert abs(round(np.linalg.det(c))) == 1


def test_periods_do_not_depend_on_tube_width():
    poly = weierstrass(1.0 + 0.5j, 0.3 - 0.2j)
    wide = periods(poly, build_hyperelliptic_frame(poly, inflation=0.2))
    narrow = periods(poly, build_hyperelliptic_frame(poly, inflation=0.1))
    assert np.allclose(sorted(np.abs(wide.chain_periods)), sorted(np.abs(narrow.chain_periods)), atol=1e-9)


def test_period_jacobian_matches_finite_differences():
    poly = weierstrass(1.0 + 0.3j, 0.5)
    basis = list(analyze(poly).moduli_basis)
    frame, jac = evaluate_frame(poly, build_hyperelliptic_frame(poly), basis)
    h = 1e-4
    shifted = []
    for sign in (1, -1):
        moved = poly.plus_interior(basis, [sign * h])
        shifted.append(periods(moved, reanchor_frame(moved, frame)).all_periods)
    fd = (shifted[0] - shifted[1]) / (2 * h)
    assert np.allclose(fd, jac[:, 0], atol=1e-6 * max(1.0, np.max(np.abs(jac))))


def test_reanchor_keeps_marking_for_small_moves():
    poly = weierstrass(1.0, 0.5)
    frame = build_hyperelliptic_frame(poly)
    moved = reanchor_frame(weierstrass(1.0, 0.5 + 1e-3), frame)
    assert np.array_equal(moved.combination, frame.combination)
    assert np.array_equal(moved.intersection, J2)


def test_residue_loop_around_finite_puncture():
    points, perimeters = [1.0, 2.0, 4.0], [1.0, 0.5, 2.0]
    poly = strebel_exterior(points, perimeters)
    model = hyperelliptic_model(poly)
    special = special_points(poly, model)
    # a branch point sits near x = 1.94
    loop = circle_loop(2.0, 0.02)
    for y0 in fiber(poly, loop[0]).roots:
        value = loop_integral(poly, loop, y0, avoid=special)
        assert abs(abs(value) - 0.5) < 1e-8
        assert abs(value.imag) < 1e-8
