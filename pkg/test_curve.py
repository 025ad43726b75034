"""
Curve tests: fibers, critical set, continuation, monodromy, puncture expansions.
Run from project root:
  pytest test_curve.py
"""
import os
import sys

PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, PROJECT_ROOT)

import numpy as np
import pytest

from curve import (
    base_point,
    continue_sheet,
    critical_set,
    fiber,
    fiber_roots_batch,
    monodromy_closure,
    path_integral,
    puncture_expansion,
)
from errors import RadiusTooLarge
from families import degenerate_weierstrass, one_matrix, strebel_exterior, weierstrass
from polygon import BivariatePolynomial, enumerate_punctures


def circle(center, radius, n=64):
    return center + radius * np.exp(2j * np.pi * np.arange(n + 1) / n)


def test_fiber_of_cusp():
    poly = BivariatePolynomial.from_terms({(0, 2): 1.0, (3, 0): -1.0})
    roots = fiber(poly, 1.0).roots
    assert np.allclose(sorted(roots.real), [-1.0, 1.0])
    assert fiber(poly, 1.0).infinite == 0


def test_fiber_of_weierstrass_at_origin():
    roots = fiber(weierstrass(0.0, -1.0), 0.0).roots
    assert np.allclose(sorted(roots.real), [-1.0, 1.0])
    assert np.allclose(roots.imag, 0.0)


def test_fiber_residual_random_quartic():
    rng = np.random.default_rng(7)
    terms = {(i, j): complex(*rng.normal(size=2)) for i in range(4) for j in range(5) if i + j <= 5}
    poly = BivariatePolynomial.from_terms(terms)
    x = complex(*rng.normal(size=2))
    f = fiber(poly, x)
    assert len(f.roots) == 4
    assert np.max(np.abs(poly(x, f.roots))) < 1e-10 * poly.scale * max(1.0, np.max(np.abs(f.roots))) ** 4


def test_fiber_flags_infinite_roots():
    poly = strebel_exterior([1.0, 2.0, 4.0], [1.0, 1.0, 1.0])
    f = fiber(poly, 2.0)
    assert f.infinite == 2
    assert len(f.roots) == 0


def test_batch_matches_scalar():
    poly = weierstrass(1.0 + 0.5j, 0.3)
    xs = np.array([0.3 + 0.1j, -1.2, 2.0j])
    batch = fiber_roots_batch(poly, xs)
    for x, row in zip(xs, batch):
        scalar = fiber(poly, x).roots
        assert np.allclose(sorted(row, key=lambda r: (r.real, r.imag)), scalar)


def test_weierstrass_branch_points():
    g2, g3 = 1.0, 0.5
    crit = critical_set(weierstrass(g2, g3))
    expected = np.roots([1.0, 0.0, -g2, -g3])
    found = np.array([p.x for p in crit.branch_points])
    assert len(found) == 3
    assert not crit.nodal_points
    for e in expected:
        assert np.min(np.abs(found - e)) < 1e-8
    assert all(p.ramification == 2 for p in crit.branch_points)


def test_degenerate_weierstrass_has_a_node():
    crit = critical_set(degenerate_weierstrass(1.0))
    assert len(crit.branch_points) == 1
    assert abs(crit.branch_points[0].x + 2.0) < 1e-7
    assert len(crit.nodal_points) == 1
    node = crit.nodal_points[0]
    assert abs(node.x - 1.0) < 1e-6
    assert abs(node.y) < 1e-6


def test_square_root_critical_set():
    poly = BivariatePolynomial.from_terms({(0, 2): 1.0, (1, 0): -1.0})
    crit = critical_set(poly)
    assert len(crit.branch_points) == 1
    assert abs(crit.branch_points[0].x) < 1e-12


def test_square_root_monodromy_swaps_sheets():
    poly = BivariatePolynomial.from_terms({(0, 2): 1.0, (1, 0): -1.0})
    ys = continue_sheet(poly, circle(0.0, 1.0), 1.0, avoid=np.array([0j]))
    assert abs(ys[-1] + 1.0) < 1e-9


def test_contractible_loop_returns_home():
    poly = weierstrass(1.0, 0.5)
    crit = critical_set(poly)
    y0 = fiber(poly, 5.0).roots[0]
    ys = continue_sheet(poly, circle(5.0, 0.5), y0, avoid=crit.special_xs())
    assert abs(ys[-1] - y0) < 1e-9


def test_monodromy_closure_weierstrass():
    poly = weierstrass(1.0, 0.5)
    crit = critical_set(poly)
    report = monodromy_closure(poly, crit, 0.37 + 0.91j)
    assert report["closed"]
    assert all(perm == [1, 0] for perm in report["local"])


def test_path_integral_of_polynomial_sheet():
    # y = x^2 on a one-sheeted curve: integral over [0, 1] is 1/3
    poly = BivariatePolynomial.from_terms({(0, 1): 1.0, (2, 0): -1.0})
    total, y_end = path_integral(poly, np.array([0.0, 1.0]), 0.0)
    assert abs(total[0] - 1.0 / 3.0) < 1e-12
    assert abs(y_end - 1.0) < 1e-12


@pytest.fixture(scope="module")
def weierstrass_expansion():
    g2, g3 = 1.2, 0.7
    poly = weierstrass(g2, g3)
    (spec,) = enumerate_punctures(poly)
    return g2, g3, poly, spec, puncture_expansion(poly, spec)


def test_weierstrass_times(weierstrass_expansion):
    g2, _, _, _, exp = weierstrass_expansion
    expected = np.zeros(6, dtype=complex)
    expected[5], expected[1] = -2.0, g2
    assert np.allclose(exp.times, expected, atol=1e-9)


def test_weierstrass_conjugate_times(weierstrass_expansion):
    g2, g3, _, _, exp = weierstrass_expansion
    assert abs(exp.conj_times[0] - g3) < 1e-9
    assert abs(exp.conj_times[4] - g2 * g3 / 10) < 1e-9


def test_times_do_not_depend_on_radius(weierstrass_expansion):
    _, _, poly, spec, exp = weierstrass_expansion
    half = puncture_expansion(poly, spec, radius=exp.radius / 2)
    assert np.allclose(half.times, exp.times, atol=1e-8)
    k = min(len(half.conj_times), len(exp.conj_times), 8)
    assert np.allclose(half.conj_times[:k], exp.conj_times[:k], atol=1e-8)


def test_laurent_series_reproduces_ydx(weierstrass_expansion):
    _, _, _, spec, exp = weierstrass_expansion
    n = len(exp.circle_y)
    zeta = exp.radius * np.exp(2j * np.pi * np.arange(n) / n)
    sampled = exp.circle_y * (-spec.a_order) * zeta ** (-spec.a_order - 1)
    assert np.max(np.abs(sampled - exp.laurent_ydx(zeta))) < 1e-8 * np.max(np.abs(sampled))


def test_radius_too_large_is_rejected():
    poly = weierstrass(1.0, 0.5)
    (spec,) = enumerate_punctures(poly)
    with pytest.raises(RadiusTooLarge):
        puncture_expansion(poly, spec, radius=2.0)


def test_strebel_residues():
    points, perimeters = [1.0, 2.0, 4.0], [1.0, 0.5, 2.0]
    poly = strebel_exterior(points, perimeters)
    crit = critical_set(poly)
    residues = []
    for spec in enumerate_punctures(poly):
        exp = puncture_expansion(poly, spec, crit=crit)
        residues.append(exp.times[0])
        if not spec.at_infinity:
            assert spec.r_order == 0
            assert abs(exp.times[0] - spec.leading_coeff) < 1e-9
    assert abs(sum(residues)) < 1e-9


def test_one_matrix_residues():
    poly = one_matrix([0.0, 0.5])
    total = 0
    for spec in enumerate_punctures(poly):
        exp = puncture_expansion(poly, spec)
        sign = np.sign(spec.leading_coeff.real)
        assert abs(exp.times[0] - sign) < 1e-9
        assert abs(exp.times[2] + sign * 0.5) < 1e-9
        total += exp.times[0]
    assert abs(total) < 1e-9


def test_base_point_is_seeded():
    poly = weierstrass(1.0, 0.5)
    crit = critical_set(poly)
    assert base_point(poly, crit, 11) == base_point(poly, crit, 11)
