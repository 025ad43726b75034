"""
Invariant checks on stored result documents.

Each check_* function is stateless: it reads a document (or the curve rebuilt from it)
and returns a summary dict {'check', 'passed', 'value', 'limit', ...}. run_checks picks
the checks that apply to a document and collects their summaries.
"""
import logging
from typing import List, Optional

import numpy as np

from curve import all_expansions, base_point, critical_set, monodromy_closure
from errors import BoutrouxError, InputError
from formats import complex_from_json, polynomial_from_json
from settings import DEFAULT_SETTINGS
from solver import boutroux_residual, isolation_probe, solve

logger = logging.getLogger(__name__)

# Limits as stated for the audited quantities
AUDIT_LIMITS = {
    'residue_sum': 1e-9,
    'real_residues': 1e-9,
    'zeta': 1e-8,
    'phi_drift': 1e-6,
    'duality': 1e-5,
    'mass': 1e-6,
    'density_floor': -1e-9,
    'moments': 1e-6,
    'stieltjes': 1e-6,
    'energy': 1e-4,
    'perimeter': 1e-6,
    'isolation': 1e-6,
}


def _cfg(settings):
    return settings if settings is not None else DEFAULT_SETTINGS


def _summary(name, value, limit, passed=None, **extra):
    value = float(value) if value is not None else None
    if passed is None:
        passed = value is not None and value <= limit
    return dict({'check': name, 'passed': bool(passed), 'value': value, 'limit': limit}, **extra)


def _complex_list(values) -> np.ndarray:
    return np.array([complex_from_json(v) for v in values or []], dtype=complex)


# ---- Curve checks ----

def check_residue_sum(poly, settings=None) -> dict:
    """Residue theorem: the t_0 of all punctures add up to zero."""
    residues = [complex(e.times[0]) for e in all_expansions(poly, _cfg(settings))]
    total = abs(sum(residues)) if residues else 0.0
    return _summary('residue_sum', total, AUDIT_LIMITS['residue_sum'], punctures=len(residues))


def check_real_residues(poly, settings=None) -> dict:
    residues = [complex(e.times[0]) for e in all_expansions(poly, _cfg(settings))]
    worst = max((abs(t.imag) for t in residues), default=0.0)
    return _summary('real_residues', worst, AUDIT_LIMITS['real_residues'])


def check_monodromy(poly, settings=None) -> dict:
    """Product of the local monodromies equals the monodromy around infinity."""
    cfg = _cfg(settings)
    if poly.degree_y < 2:
        return _summary('monodromy', 0.0, 0.0, passed=True, skipped='single sheet')
    crit = critical_set(poly, cfg)
    base, _ = base_point(poly, crit, cfg['basepoint_seed'])
    closure = monodromy_closure(poly, crit, base, cfg)
    return _summary('monodromy', None, None, passed=closure['closed'],
                    product=closure['product'], infinity=closure['infinity'])


def check_boutroux(poly, settings=None) -> dict:
    residual = boutroux_residual(poly, _cfg(settings))
    return _summary('boutroux', residual, AUDIT_LIMITS['zeta'])


def check_isolation(solver_doc: dict, settings=None, directions: int = 8) -> dict:
    """Restart from perturbed interior coefficients and require reconvergence to the same point."""
    cfg = _cfg(settings)
    exterior, support = polynomial_from_json(solver_doc['exterior'])
    interior = _complex_list(solver_doc.get('interior'))
    result = solve(exterior, cfg, support, seed_interior=interior)
    probe = isolation_probe(result, cfg, directions=directions)
    return _summary('isolation', probe['max_shift'], AUDIT_LIMITS['isolation'], directions=probe['directions'])


# ---- Network checks ----

def check_phi_constancy(network_doc: dict) -> dict:
    """phi is constant along every traced edge."""
    drifts = [float(np.ptp(e['phi'])) for e in network_doc.get('edges', []) if len(e.get('phi', []))]
    return _summary('phi_constancy', max(drifts, default=0.0), AUDIT_LIMITS['phi_drift'], edges=len(drifts))


def check_faces(network_doc: dict) -> dict:
    """No cylinders and the Euler bookkeeping identities hold."""
    audit = network_doc.get('audit', {})
    if audit.get('skipped'):
        return _summary('faces', None, None, passed=True, skipped=audit['skipped'])
    cylinders = network_doc.get('face_counts', {}).get('cylinder', 0)
    identities = audit.get('identities', {})
    passed = cylinders == 0 and all(identities.values())
    return _summary('faces', cylinders, 0, passed=passed, identities=identities)


def check_measure_duality(network_doc: dict, package_doc: Optional[dict] = None) -> dict:
    """
    Mass of every support edge two ways: Im of the traced integral over 2 pi and the
    quadrature of the sampled density.
    """
    measures = {m['edge']: m for m in network_doc.get('measures', [])}
    worst = 0.0
    if package_doc is not None:
        for arc in package_doc.get('support', []):
            stokes = measures.get(arc['edge'], {}).get('mass')
            if stokes is not None:
                worst = max(worst, abs(arc['mass'] - stokes))
        return _summary('measure_duality', worst, AUDIT_LIMITS['duality'])
    # trapezoid along the traced samples only resolves the square-root ends to a looser limit
    for m in measures.values():
        xs = _complex_list(m['points'])
        rho = np.asarray(m['density'], dtype=float)
        quad = float(np.sum((rho[1:] + rho[:-1]) / 2 * np.abs(np.diff(xs))))
        worst = max(worst, abs(quad - m['mass']))
    return _summary('measure_duality', worst, 1e-3, sampling='traced')


# ---- Application checks ----

def check_perimeters(strebel_doc: dict) -> dict:
    errors = [abs(f['perimeter'] - f['expected']) for f in strebel_doc.get('faces', [])]
    count = len(strebel_doc.get('faces', []))
    expected = len(strebel_doc.get('problem', {}).get('points', []))
    return _summary('perimeters', max(errors, default=0.0), AUDIT_LIMITS['perimeter'],
                    passed=count == expected and max(errors, default=0.0) <= AUDIT_LIMITS['perimeter'],
                    faces=count)


def check_mass(package_doc: dict) -> dict:
    densities = [arc['density'] for arc in package_doc.get('support', []) if len(arc['density'])]
    floor = min((min(d) for d in densities), default=0.0)
    error = abs(package_doc.get('mass', 0.0) - 1.0)
    passed = error <= AUDIT_LIMITS['mass'] and floor >= AUDIT_LIMITS['density_floor']
    return _summary('mass', error, AUDIT_LIMITS['mass'], passed=passed, density_min=floor)


def check_moments(package_doc: dict) -> dict:
    moments = package_doc.get('moments', {})
    a = _complex_list(moments.get('from_measure'))
    b = _complex_list(moments.get('from_times'))
    worst = float(np.max(np.abs(a - b))) if len(a) else 0.0
    return _summary('moments', worst, AUDIT_LIMITS['moments'], count=len(a))


def check_stieltjes(package_doc: dict) -> dict:
    rows = package_doc.get('stieltjes', [])
    worst = max((abs(complex_from_json(r['W_curve']) - complex_from_json(r['W_measure'])) for r in rows),
                default=0.0)
    return _summary('stieltjes', worst, AUDIT_LIMITS['stieltjes'], probes=len(rows))


def check_energy(package_doc: dict) -> dict:
    energy = package_doc.get('energy', {})
    if energy.get('F_check') is None:
        return _summary('energy', None, None, passed=True, skipped='no F_check')
    difference = abs(energy['F_functional'] - energy['F_check'])
    return _summary('energy', difference, AUDIT_LIMITS['energy'])


# ---- Dispatch ----

def document_kind(doc: dict) -> str:
    if 'potential' in doc and 'support' in doc:
        return 'equilibrium'
    if 'problem' in doc and 'faces' in doc:
        return 'strebel'
    if 'edges' in doc and 'kind' in doc:
        return 'network'
    if 'exterior' in doc and 'polynomial' in doc:
        return 'solver'
    if 'polynomial' in doc:
        return 'curve'
    raise InputError("no checks apply to this document", keys=sorted(doc))


def run_checks(doc: dict, settings: Optional[dict] = None, isolation: bool = True) -> dict:
    """
    Full invariant suite for a stored result document

    Args:
        doc (dict): solver result, network graph, Strebel graph or equilibrium package
        settings (dict, optional): Active settings
        isolation (bool): run the solver restarts of the isolation probe

    Returns:
        dict: kind, list of check summaries and the overall flag
    """
    cfg = _cfg(settings)
    kind = document_kind(doc)
    checks: List[dict] = []

    def attempt(name, func, *args, **kwargs):
        try:
            checks.append(func(*args, **kwargs))
        except BoutrouxError as exc:
            logger.warning("check %s raised %s", name, type(exc).__name__)
            checks.append(_summary(name, None, None, passed=False, error=exc.to_dict()))

    solver_doc = doc if kind == 'solver' else doc.get('solver')
    if 'polynomial' in doc:
        poly, _ = polynomial_from_json(doc['polynomial'])
        attempt('residue_sum', check_residue_sum, poly, cfg)
        attempt('monodromy', check_monodromy, poly, cfg)
        if solver_doc is not None:
            attempt('real_residues', check_real_residues, poly, cfg)
            attempt('boutroux', check_boutroux, poly, cfg)
    if solver_doc is not None and isolation:
        attempt('isolation', check_isolation, solver_doc, cfg)

    network_doc = doc if kind == 'network' else doc.get('network')
    if network_doc is not None:
        checks.append(check_phi_constancy(network_doc))
        if network_doc.get('kind') == 'first':
            checks.append(check_faces(network_doc))
        elif network_doc.get('measures'):
            checks.append(check_measure_duality(network_doc, doc if kind == 'equilibrium' else None))

    if kind == 'strebel':
        checks.append(check_perimeters(doc))
    if kind == 'equilibrium':
        for func in (check_mass, check_moments, check_stieltjes, check_energy):
            checks.append(func(doc))

    passed = all(c['passed'] for c in checks)
    logger.info("%s document: %d checks, %s", kind, len(checks), "passed" if passed else "FAILED")
    return {'kind': kind, 'checks': checks, 'passed': passed}
