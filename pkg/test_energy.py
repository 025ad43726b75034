"""
Energy tests: both definitions, gradient, Hessian, circle closed form.
Run from project root:
  pytest test_energy.py
"""
import os
import sys
from dataclasses import replace

PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, PROJECT_ROOT)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curve import PunctureExpansion, all_expansions, chart_dx, critical_set, puncture_expansion
from energy import (
    circle_integral_closed_form,
    circle_integral_quadrature,
    energy_gradient,
    energy_hessian,
    f_hat,
    prepotential_energy,
    regularized_area,
)
from errors import ImTauNotPositive
from families import degenerate_weierstrass, one_matrix, weierstrass
from periods import build_hyperelliptic_frame, evaluate_frame, periods, reanchor_frame
from polygon import analyze, enumerate_punctures


@pytest.fixture(scope="module")
def weierstrass_state():
    poly = weierstrass(1.0, 0.4 + 0.3j)
    crit = critical_set(poly)
    expansions = all_expansions(poly, crit=crit)
    basis = list(analyze(poly).moduli_basis)
    frame, jac = evaluate_frame(poly, build_hyperelliptic_frame(poly), basis)
    return poly, crit, expansions, basis, frame, jac


def f_check_at(poly, frame0):
    frame = periods(poly, reanchor_frame(poly, frame0))
    return prepotential_energy(poly, frame, all_expansions(poly)).F_check


def test_f_hat_of_weierstrass():
    g2, g3 = 1.3 - 0.2j, 0.7 + 0.1j
    poly = weierstrass(g2, g3)
    assert abs(f_hat(all_expansions(poly)) - 0.4 * g2 * g3) < 1e-8


def test_degenerate_weierstrass_energy():
    poly = degenerate_weierstrass(1.0)
    crit = critical_set(poly)
    expansions = all_expansions(poly, crit=crit)
    report = prepotential_energy(poly, None, expansions)
    assert abs(report.F_check - 12.0 / 5.0) < 1e-8
    area = regularized_area(poly, expansions, crit=crit)
    assert abs(area - 12.0 / 5.0) < 1e-5 * 12.0 / 5.0


def test_area_matches_prepotential_on_elliptic_curve(weierstrass_state):
    poly, crit, expansions, _, frame, _ = weierstrass_state
    f_check = prepotential_energy(poly, frame, expansions).F_check
    area = regularized_area(poly, expansions, crit=crit)
    assert abs(area - f_check) <= 1e-4 * max(1.0, abs(f_check))


def test_area_does_not_depend_on_radius():
    poly = one_matrix([0.0, 0.5])
    crit = critical_set(poly)
    expansions = all_expansions(poly, crit=crit)
    halved = all_expansions(poly, crit=crit, radii={k: e.radius / 2 for k, e in enumerate(expansions)})
    first = regularized_area(poly, expansions, crit=crit)
    second = regularized_area(poly, halved, crit=crit)
    assert abs(first - second) < 1e-6 * max(1.0, abs(first))
    assert abs(first - prepotential_energy(poly, None, expansions).F_check) < 1e-5 * max(1.0, abs(first))


def test_gradient_matches_finite_differences(weierstrass_state):
    poly, _, _, basis, frame, jac = weierstrass_state
    grad = energy_gradient(frame)
    h = 1e-4
    for direction, d_eps in ((1.0, jac[:, 0].real), (1j, -jac[:, 0].imag)):
        plus = f_check_at(poly.plus_interior(basis, [direction * h]), frame)
        minus = f_check_at(poly.plus_interior(basis, [-direction * h]), frame)
        fd = (plus - minus) / (2 * h)
        assert abs(fd - grad @ d_eps) <= 1e-4 * max(1.0, np.linalg.norm(grad) * np.linalg.norm(d_eps))


def test_hessian_matches_gradient_differences(weierstrass_state):
    poly, _, _, basis, frame, jac = weierstrass_state
    hess = energy_hessian(frame.tau)
    h = 1e-4
    for direction, d_eps in ((1.0, jac[:, 0].real), (1j, -jac[:, 0].imag)):
        grads = []
        for sign in (1, -1):
            moved = poly.plus_interior(basis, [sign * direction * h])
            grads.append(energy_gradient(periods(moved, reanchor_frame(moved, frame))))
        fd = (grads[0] - grads[1]) / (2 * h)
        assert np.allclose(fd, hess @ d_eps, atol=1e-4 * max(1.0, np.linalg.norm(hess @ d_eps)))


def test_energy_is_independent_of_the_marking(weierstrass_state):
    poly, _, expansions, _, frame, _ = weierstrass_state
    s = np.array([[1, 1], [0, 1]])
    moved = s @ frame.all_periods
    other = replace(frame, combination=s @ frame.combination, intersection=s @ frame.intersection @ s.T,
                    eta=moved[:1], eta_tilde=moved[1:])
    first = prepotential_energy(poly, frame, expansions).F_check
    second = prepotential_energy(poly, other, expansions).F_check
    assert abs(first - second) < 1e-9 * max(1.0, abs(first))


def test_gradient_vanishes_without_imaginary_periods(weierstrass_state):
    _, _, _, _, frame, _ = weierstrass_state
    flat = replace(frame, eta=frame.eta.real.astype(complex), eta_tilde=frame.eta_tilde.real.astype(complex))
    assert np.allclose(energy_gradient(flat), 0.0)


def test_gradient_formula_genus_one(weierstrass_state):
    _, _, _, _, frame, _ = weierstrass_state
    unit = replace(frame, eta=np.array([0.3 + 0j]), eta_tilde=np.array([-0.2 + 1j]))
    assert np.allclose(energy_gradient(unit), [2 * np.pi, 0.0])


def test_hessian_at_square_lattice():
    assert np.allclose(energy_hessian(np.array([[1j]])), 2 * np.pi * np.eye(2))


def test_hessian_at_skew_lattice():
    hess = energy_hessian(np.array([[0.3 + 1.2j]]))
    assert np.allclose(hess, hess.T)
    np.linalg.cholesky(hess)


def test_hessian_rejects_degenerate_tau():
    with pytest.raises(ImTauNotPositive):
        energy_hessian(np.array([[0.5 - 0.1j]]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_hessian_is_positive_definite(seed):
    rng = np.random.default_rng(seed)
    g = int(rng.integers(1, 4))
    a = rng.normal(size=(g, g))
    b = rng.normal(size=(g, g))
    tau = (a + a.T) / 2 + 1j * (b @ b.T + 0.1 * np.eye(g))
    hess = energy_hessian(tau)
    assert np.allclose(hess, hess.T)
    np.linalg.cholesky(hess)


def test_circle_closed_form_matches_quadrature():
    poly = weierstrass(1.0, 0.4 + 0.3j)
    (spec,) = enumerate_punctures(poly)
    exp = puncture_expansion(poly, spec, radius=0.1)
    closed = circle_integral_closed_form(exp)
    assert abs(closed - circle_integral_quadrature(exp)) < 1e-8 * max(1.0, abs(closed))
    # no residue, no logarithm: the value is real
    assert abs(closed.imag) < 1e-8 * max(1.0, abs(closed))


def test_circle_closed_form_with_residue_only():
    (spec,) = enumerate_punctures(weierstrass(1.0, 0.0))
    t0, radius, g_p = 0.7, 0.1, 0.25 - 0.5j
    exp = PunctureExpansion(spec, np.array([t0 + 0j]), np.zeros(0, dtype=complex), 0j, radius,
                            np.zeros(0, dtype=complex), (0j, 0j))
    expected = 2 * t0 ** 2 * np.log(radius) - t0 * g_p + 1j * np.pi * t0 ** 2
    assert abs(circle_integral_closed_form(exp, g_p) - expected) < 1e-14


def test_circle_starts_on_the_negative_axis():
    # g = t0 Log zeta with the cut on zeta < 0: the integral over ]-pi, pi] is t0^2 log R
    (spec,) = enumerate_punctures(weierstrass(1.0, 0.0))
    t0, radius, n = 0.7, 0.1, 64
    zeta = radius * np.exp(2j * np.pi * np.arange(n) / n)
    ys = t0 / zeta / chart_dx(spec, zeta)
    exp = PunctureExpansion(spec, np.array([t0 + 0j]), np.zeros(0, dtype=complex), 0j, radius,
                            ys, (0j, 0j))
    expected = t0 ** 2 * np.log(radius)
    assert circle_integral_closed_form(exp) == pytest.approx(expected, abs=1e-12)
    assert circle_integral_quadrature(exp) == pytest.approx(expected, abs=1e-12)
