"""
Invariant-check tests: per-check summaries on small hand-made documents and the curve checks.
Run from project root:
  pytest test_audits.py
"""
import os
import sys

PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, PROJECT_ROOT)

import pytest

from audits import (
    AUDIT_LIMITS,
    check_energy,
    check_faces,
    check_mass,
    check_measure_duality,
    check_moments,
    check_monodromy,
    check_perimeters,
    check_phi_constancy,
    check_residue_sum,
    check_stieltjes,
    document_kind,
    run_checks,
)
from errors import InputError
from families import one_matrix, weierstrass
from formats import polynomial_to_json


def _package(**changes):
    doc = {
        "potential": [0.0, 0.5],
        "support": [{"edge": 0, "points": [-2.0, 0.0, 2.0], "density": [0.0, 0.3183, 0.0], "mass": 1.0}],
        "mass": 1.0,
        "moments": {"from_measure": [0.0, 1.0], "from_times": [0.0, 1.0]},
        "stieltjes": [{"x": {"re": 3.0, "im": 0.0}, "W_curve": 0.38, "W_measure": 0.38}],
        "energy": {"F_functional": 0.75, "F_check": 0.75},
    }
    doc.update(changes)
    return doc


# ---- Curve checks ----

def test_residue_sum_of_semicircle():
    summary = check_residue_sum(one_matrix([0.0, 0.5]))
    assert summary["check"] == "residue_sum"
    assert summary["passed"]
    assert summary["punctures"] == 2


def test_monodromy_closes_on_weierstrass():
    assert check_monodromy(weierstrass(3.0, 1.0))["passed"]


def test_curve_document_runs_curve_checks():
    report = run_checks({"polynomial": polynomial_to_json(one_matrix([0.0, 0.5]))}, isolation=False)
    assert report["kind"] == "curve"
    assert [c["check"] for c in report["checks"]] == ["residue_sum", "monodromy"]
    assert report["passed"]


# ---- Network checks ----

def test_phi_drift():
    doc = {"edges": [{"phi": [0.1, 0.1 + 1e-9]}, {"phi": [0.0, 0.0]}]}
    assert check_phi_constancy(doc)["passed"]
    doc["edges"].append({"phi": [0.0, 1e-3]})
    summary = check_phi_constancy(doc)
    assert not summary["passed"]
    assert summary["value"] == pytest.approx(1e-3)


def test_faces_flags_cylinders():
    good = {"face_counts": {"half_plane": 4, "cylinder": 0}, "audit": {"identities": {"edges": True}}}
    assert check_faces(good)["passed"]
    bad = {"face_counts": {"cylinder": 1}, "audit": {"identities": {"edges": True}}}
    assert not check_faces(bad)["passed"]
    broken = {"face_counts": {}, "audit": {"identities": {"edges": False}}}
    assert not check_faces(broken)["passed"]


def test_skipped_face_audit_passes():
    summary = check_faces({"audit": {"skipped": "not Boutroux"}})
    assert summary["passed"]
    assert summary["skipped"] == "not Boutroux"


def test_measure_duality_against_package():
    network = {"measures": [{"edge": 0, "mass": 1.0, "points": [], "density": []}]}
    assert check_measure_duality(network, _package())["passed"]
    off = _package(support=[{"edge": 0, "points": [], "density": [], "mass": 0.99}])
    assert not check_measure_duality(network, off)["passed"]


def test_measure_duality_on_traced_samples():
    # constant density 0.25 on [0, 4] has mass 1
    network = {"measures": [{"edge": 0, "mass": 1.0, "points": [0.0, 1.0, 2.0, 4.0],
                             "density": [0.25, 0.25, 0.25, 0.25]}]}
    summary = check_measure_duality(network)
    assert summary["passed"]
    assert summary["sampling"] == "traced"


# ---- Application checks ----

def test_package_checks_pass():
    doc = _package()
    for func in (check_mass, check_moments, check_stieltjes, check_energy):
        assert func(doc)["passed"], func.__name__


def test_mass_check_fails_on_wrong_mass_or_negative_density():
    assert not check_mass(_package(mass=0.5))["passed"]
    negative = _package(support=[{"edge": 0, "points": [0.0, 1.0], "density": [0.1, -0.01], "mass": 1.0}])
    summary = check_mass(negative)
    assert not summary["passed"]
    assert summary["density_min"] == pytest.approx(-0.01)


def test_moment_and_stieltjes_mismatch():
    doc = _package(moments={"from_measure": [0.0, 1.0], "from_times": [0.0, 1.1]},
                   stieltjes=[{"x": 3.0, "W_curve": 0.38, "W_measure": {"re": 0.38, "im": 1e-3}}])
    assert not check_moments(doc)["passed"]
    assert not check_stieltjes(doc)["passed"]


def test_energy_without_f_check_is_skipped():
    summary = check_energy(_package(energy={"F_functional": 0.75, "F_check": None}))
    assert summary["passed"]
    assert check_energy(_package(energy={"F_functional": 0.75, "F_check": 0.76}))["passed"] is False


def test_perimeters():
    doc = {"problem": {"points": [0.0, 1.0]},
           "faces": [{"perimeter": 6.2831853, "expected": 6.2831853},
                     {"perimeter": 6.2831853 + 1e-7, "expected": 6.2831853}]}
    assert check_perimeters(doc)["passed"]
    doc["faces"].pop()
    assert not check_perimeters(doc)["passed"]
    assert AUDIT_LIMITS["perimeter"] == 1e-6


# ---- Dispatch ----

def test_document_kind():
    assert document_kind(_package()) == "equilibrium"
    assert document_kind({"problem": {}, "faces": []}) == "strebel"
    assert document_kind({"edges": [], "kind": "first"}) == "network"
    assert document_kind({"exterior": {}, "polynomial": {}}) == "solver"
    with pytest.raises(InputError):
        document_kind({"hello": 1})
