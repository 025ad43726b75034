"""
Solver tests: Boutroux convergence, degenerate strata, Newton steps, certificate.
Run from project root:
  pytest test_solver.py
"""
import json
import os
import sys
from dataclasses import replace

PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, PROJECT_ROOT)

import numpy as np
import pytest

from curve import all_expansions
from energy import prepotential_energy
from errors import InputError, NonRealResidues, NotHyperelliptic
from families import degenerate_weierstrass, one_matrix, one_matrix_support, strebel_exterior, weierstrass
from periods import build_hyperelliptic_frame, evaluate_frame, periods
from polygon import BivariatePolynomial, analyze, moduli_dimension
from settings import get_active_settings
from solver import (
    SolverConfig,
    boutroux_residual,
    certificate,
    check_real_residues,
    isolation_probe,
    newton_step,
    solve,
)

STREBEL4 = ([0.0, 1.0, 2.0, 4.0], [1.0, 1.0, 1.0, 1.0])


@pytest.fixture(scope="module")
def weierstrass_result(tmp_path_factory):
    trace = tmp_path_factory.mktemp("trace") / "trace.jsonl"
    return solve(weierstrass(3.0), trace_path=str(trace)), trace


@pytest.fixture(scope="module")
def strebel_result():
    return solve(strebel_exterior(*STREBEL4))


def f_check_of(poly):
    frame = periods(poly, build_hyperelliptic_frame(poly))
    return prepotential_energy(poly, frame, all_expansions(poly)).F_check


def test_weierstrass_reaches_the_discriminant(weierstrass_result):
    result, _ = weierstrass_result
    assert moduli_dimension(analyze(result.exterior)) == 1
    # Newton moved g3 from the seed 0 to the discriminant
    assert len(result.interior) == 1
    assert abs(result.interior[0] - 2.0) < 1e-6
    g2 = 3.0
    g3 = result.poly.terms.get((0, 0), 0)
    assert abs(4 * g2 ** 3 - 27 * g3 ** 2) < 1e-6
    assert abs(g3 - 2.0) < 1e-6
    assert result.zeta_residual <= get_active_settings()["zeta_tolerance"]
    assert check_real_residues(result.poly) <= get_active_settings()["real_residue_tolerance"]


def test_cubic_exterior_is_not_hyperelliptic():
    exterior = BivariatePolynomial.from_terms({(0, 3): 1.0, (4, 0): -1.0, (0, 0): 0.5})
    assert moduli_dimension(analyze(exterior)) > 0
    with pytest.raises(NotHyperelliptic):
        solve(exterior)


def test_weierstrass_trace_is_json_lines(weierstrass_result):
    result, trace = weierstrass_result
    lines = trace.read_text().splitlines()
    assert len(lines) == len(result.trace)
    entries = [json.loads(line) for line in lines]
    assert all({"zeta_norm", "F_check", "genus", "damping", "accepted"} <= set(e) for e in entries)
    accepted = [e["zeta_norm"] for e in entries if e["accepted"]]
    assert accepted and accepted[-1] <= 1e-10


def test_newton_converges_quadratically(weierstrass_result):
    result, _ = weierstrass_result
    norms = [e["zeta_norm"] for e in result.trace if e["accepted"] and e["damping"] == 1.0]
    tail = [(a, b) for a, b in zip(norms, norms[1:]) if 1e-14 < a < 1e-2]
    for a, b in tail[-2:]:
        assert b / a ** 2 < 1e4


def test_result_stays_in_the_moduli_space(weierstrass_result):
    result, _ = weierstrass_result
    difference = {k: c for k, c in result.poly.terms.items() if k not in result.exterior.terms}
    assert set(difference) <= {(0, 0)}
    assert all(abs(result.poly.terms[k] - c) < 1e-14 for k, c in result.exterior.terms.items())


def test_certificate_passes(weierstrass_result):
    result, _ = weierstrass_result
    assert certificate(result)["passed"]


def test_weierstrass_f_check_at_the_solution(weierstrass_result):
    result, _ = weierstrass_result
    g3 = complex(result.poly.terms.get((0, 0), 0))
    assert f_check_of(result.poly) == pytest.approx(-0.4 * 3.0 * g3.real, abs=1e-6)


def test_one_matrix_gaussian_is_returned_unchanged():
    potential = [0.0, 0.5]
    seed = one_matrix(potential)
    result = solve(seed, support=one_matrix_support(potential))
    assert result.poly.terms == seed.terms
    assert result.genus == 0
    assert result.trace == ()
    assert result.poly.terms == {(0, 2): 1.0, (2, 0): -0.25, (0, 0): 1.0}


def test_strebel4_is_boutroux(strebel_result):
    assert strebel_result.genus == 1
    assert strebel_result.zeta_residual < 1e-10


def test_strebel4_minimizes_f_check(strebel_result):
    # F_check is convex in the period coordinates, so the Boutroux point beats its neighbours
    basis = list(analyze(strebel_result.exterior).moduli_basis)
    best = f_check_of(strebel_result.poly)
    for k in range(8):
        direction = 0.02 * np.exp(2j * np.pi * k / 8)
        moved = strebel_result.exterior.plus_interior(basis, strebel_result.interior + direction)
        assert f_check_of(moved) > best


def test_strebel4_is_isolated(strebel_result):
    probe = isolation_probe(strebel_result, directions=2)
    assert probe["passed"]


def test_newton_step_reduces_the_residual():
    exterior = weierstrass(3.0)
    basis = list(analyze(exterior).moduli_basis)
    poly = exterior.plus_interior(basis, [1.9])
    frame, jac = evaluate_frame(poly, build_hyperelliptic_frame(poly), basis)
    before = boutroux_residual(poly)
    q = newton_step(np.array([1.9]), frame, jac)
    after = boutroux_residual(exterior.plus_interior(basis, q))
    assert before > 0
    assert after < before


def test_newton_step_is_zero_at_a_boutroux_point():
    poly = weierstrass(1.0, 0.5)
    basis = list(analyze(poly).moduli_basis)
    frame, jac = evaluate_frame(poly, build_hyperelliptic_frame(poly), basis)
    flat = replace(frame, eta=frame.eta.real.astype(complex), eta_tilde=frame.eta_tilde.real.astype(complex))
    q = np.array([0.2 - 0.1j])
    assert np.allclose(newton_step(q, flat, jac), q)


def test_newton_step_on_genus_zero_is_a_no_op():
    poly = degenerate_weierstrass(1.0)
    frame = build_hyperelliptic_frame(poly)
    q = np.array([0.3 + 0j])
    assert np.array_equal(newton_step(q, frame, np.zeros((0, 1), dtype=complex)), q)


def test_lemniscatic_curve_is_not_boutroux():
    # Y is real over (-1, 0): that cycle has a purely imaginary eta
    assert boutroux_residual(weierstrass(1.0, 0.0)) > 1e-2


def test_non_real_residues_are_rejected():
    # scaling the y^0 part by s^2 scales every residue by s
    base = strebel_exterior([1.0, 2.0, 4.0], [1.0, 1.0, 1.0])
    s = 1.0 + 0.5j
    poly = BivariatePolynomial.from_terms({k: c * s ** 2 if k[1] == 0 else c for k, c in base.terms.items()})
    with pytest.raises(NonRealResidues):
        solve(poly)


def test_solver_config_validation():
    with pytest.raises(InputError):
        SolverConfig(damping=0.0)
    with pytest.raises(InputError):
        SolverConfig(zeta_tolerance=-1.0)
    config = SolverConfig.from_settings(get_active_settings({"max_iterations": 7}))
    assert config.max_iterations == 7
    assert config.to_dict()["seed_interior"] == []
