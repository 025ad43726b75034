"""
Application pipelines built on the solver and the spectral networks:
Strebel graphs of marked spheres and the one-matrix equilibrium package
(measure on the support, Stieltjes transform, g-function data, energies).
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import numpy.polynomial.polynomial as npoly
from scipy.interpolate import CubicSpline

from curve import all_expansions, continue_sheet, critical_set, fiber, newton_polish
from errors import (
    AuditFailed,
    BranchMismatch,
    FaceCountMismatch,
    InputError,
    NegativeDensity,
    PathThroughBranchPoint,
    SheetCollision,
)
from families import one_matrix, one_matrix_support, potential_values, strebel_exterior, strebel_support
from formats import complex_from_json, polynomial_to_json
from network import (
    SpectralNetworkGraph,
    build_first_kind,
    build_second_kind,
    difference_curve,
    seed_levels,
    x_plane_edges,
)
from periods import polyline_crossings
from settings import DEFAULT_SETTINGS
from solver import BoutrouxResult, solve

logger = logging.getLogger(__name__)

TWO_PI = 2 * np.pi
MOMENTS = 4


def _cfg(settings):
    return settings if settings is not None else DEFAULT_SETTINGS


# ---- Strebel graphs ----

@dataclass(frozen=True)
class StrebelProblem:
    points: Tuple[complex, ...]
    perimeters: Tuple[float, ...]

    def __post_init__(self):
        self.exterior()

    def exterior(self):
        return strebel_exterior(self.points, self.perimeters)

    @classmethod
    def from_dict(cls, doc: dict) -> "StrebelProblem":
        return cls(tuple(complex_from_json(z) for z in doc["points"]), tuple(float(L) for L in doc["perimeters"]))

    def to_dict(self) -> dict:
        return {"points": list(self.points), "perimeters": list(self.perimeters)}


@dataclass(frozen=True)
class StrebelFace:
    point: complex
    perimeter: float
    expected: float
    lifts: int

    def to_dict(self) -> dict:
        return {"point": self.point, "perimeter": self.perimeter, "expected": self.expected, "lifts": self.lifts}


@dataclass(frozen=True, eq=False)
class StrebelGraph:
    problem: StrebelProblem
    result: BoutrouxResult
    network: SpectralNetworkGraph
    faces: Tuple[StrebelFace, ...]
    edges: Tuple[int, ...]                 # x-plane representatives among network.edges
    edge_lengths: Tuple[float, ...]
    level_spread: float

    def to_dict(self) -> dict:
        return {
            "problem": self.problem.to_dict(),
            "polynomial": polynomial_to_json(self.result.poly),
            "solver": self.result.to_dict(),
            "zeta_residual": self.result.zeta_residual,
            "faces": [f.to_dict() for f in self.faces],
            "edges": [self.network.edges[k].to_dict() for k in self.edges],
            "edge_lengths": list(self.edge_lengths),
            "level_spread": self.level_spread,
            "network": self.network.to_dict(),
        }


def strebel(problem: StrebelProblem, settings: Optional[dict] = None) -> StrebelGraph:
    """
    Strebel graph of a marked sphere with prescribed perimeters

    Args:
        problem (StrebelProblem): marked points and perimeter parameters
        settings (dict, optional): Active settings

    Returns:
        StrebelGraph: one face per marked point, perimeters 2 pi L, edge lengths in the |Y dX| metric
    """
    cfg = _cfg(settings)
    result = solve(problem.exterior(), cfg, strebel_support(len(problem.points)))
    poly = result.poly
    network = build_first_kind(poly, cfg)

    levels = seed_levels(poly, network.seeds, cfg)
    spread = float(np.ptp(levels)) if len(levels) else 0.0
    if spread > 100 * cfg["trace_tolerance"]:
        raise AuditFailed("the Strebel graph is not a single level set of phi", spread=spread)

    by_label = {}
    for exp in all_expansions(poly, cfg):
        if not exp.spec.at_infinity:
            by_label[exp.spec.label()] = exp.spec.base_x
    points = np.array(problem.points, dtype=complex)
    grouped = {k: [] for k in range(len(points))}
    for face in network.faces:
        if face.kind != "half_cylinder" or face.puncture not in by_label:
            raise FaceCountMismatch("a Strebel face is not a disc around a marked point", kind=face.kind)
        k = int(np.argmin(np.abs(points - by_label[face.puncture])))
        grouped[k].append(face.perimeter)
    empty = [problem.points[k] for k, found in grouped.items() if not found]
    if empty:
        raise FaceCountMismatch("marked points without a face", points=empty, faces=len(network.faces))

    faces = []
    for k, perimeters in grouped.items():
        expected = TWO_PI * problem.perimeters[k]
        measured = float(np.mean(perimeters))
        if abs(measured - expected) > 1e-6 * max(1.0, expected):
            raise AuditFailed("face perimeter differs from 2 pi L", point=problem.points[k],
                              perimeter=measured, expected=expected)
        faces.append(StrebelFace(complex(points[k]), measured, expected, len(perimeters)))

    edges = tuple(x_plane_edges(network))
    lengths = tuple(network.edges[k].length for k in edges)
    logger.info("Strebel graph: %d faces, %d edges", len(faces), len(edges))
    return StrebelGraph(problem, result, network, tuple(faces), edges, lengths, spread)


# ---- Measure on the support ----

@dataclass(frozen=True, eq=False)
class SupportArc:
    edge: int
    xs: np.ndarray             # cosine-spaced nodes along the edge
    weights: np.ndarray        # |dx| quadrature weights
    density: np.ndarray        # d mu / |dx|

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights * self.density))

    @property
    def endpoints(self) -> Tuple[complex, complex]:
        return complex(self.xs[0]), complex(self.xs[-1])

    def to_dict(self) -> dict:
        return {"edge": self.edge, "points": self.xs, "weights": self.weights,
                "density": self.density, "mass": self.mass}


def support_arc(diff, edge, index: int, nodes: int) -> SupportArc:
    """Resample a traced support edge at cosine-spaced arc-length nodes and evaluate the density there."""
    s = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(edge.xs)))])
    keep = np.concatenate([[True], np.diff(s) > 1e-14 * max(1.0, s[-1])])
    s, xs, ws = s[keep], edge.xs[keep], edge.ys[keep]
    path, values = CubicSpline(s, xs), CubicSpline(s, ws)
    theta = np.linspace(0.0, np.pi, nodes)
    length = s[-1]
    s_k = length * (1 - np.cos(theta)) / 2
    x_k = path(s_k)
    x_k[0], x_k[-1] = xs[0], xs[-1]
    dx = path(s_k, 1)
    speed = np.abs(dx)
    tangent = dx / np.where(speed > 0, speed, 1.0)
    w_k = newton_polish(diff, x_k, values(s_k), steps=8)
    # Re(w x') vanishes on the support; near the ends polishing may land on -w
    density = np.abs((w_k * tangent).imag) / TWO_PI
    weights = speed * length / 2 * np.sin(theta) * np.pi / (nodes - 1)
    return SupportArc(index, x_k, weights, density)


def _xlogx(u, power: int = 1):
    safe = np.where(u == 0, 1.0, u)
    return np.where(u == 0, 0.0, safe ** power * np.log(safe))


def _log_moments(c):
    """Re of the integrals of log(c - t) and t log(c - t) over t in [0, 1]."""
    u0, u1 = c, c - 1

    def h(u):
        return -c * (_xlogx(u) - u) + _xlogx(u, 2) / 2 - u ** 2 / 4

    i0 = (_xlogx(u0) - u0) - (_xlogx(u1) - u1)
    i1 = h(u1) - h(u0)
    return i0.real, i1.real


def log_potential(arcs: Sequence[SupportArc], points) -> np.ndarray:
    """
    Integral of log|x - s| d mu(s), exact for a density linear between consecutive nodes

    Args:
        arcs (list): SupportArc pieces of the measure
        points (array): evaluation points (on or off the support)

    Returns:
        np.ndarray: real values
    """
    points = np.atleast_1d(np.asarray(points, dtype=complex))
    total = np.zeros(len(points))
    for arc in arcs:
        a, b = arc.xs[:-1], arc.xs[1:]
        ra, rb = arc.density[:-1], arc.density[1:]
        d = b - a
        length = np.abs(d)
        ok = length > 0
        a, d, ra, rb, length = a[ok], d[ok], ra[ok], rb[ok], length[ok]
        c = (points[:, None] - a[None, :]) / d[None, :]
        i0, i1 = _log_moments(c)
        piece = (ra + rb) / 2 * np.log(length) + ra * i0 + (rb - ra) * i1
        total += np.sum(length * piece, axis=1)
    return total


# ---- One-matrix model ----

@dataclass(frozen=True, eq=False)
class EquilibriumPackage:
    potential: Tuple[float, ...]
    result: BoutrouxResult
    network: SpectralNetworkGraph
    arcs: Tuple[SupportArc, ...]
    euler_lagrange: float                  # Re V - 2 log potential on the support
    el_residual: float
    probes: np.ndarray
    w_curve: np.ndarray
    w_measure: np.ndarray
    energy: dict
    moments: dict
    crit: object = field(default=None, repr=False)
    settings: dict = field(default_factory=dict, repr=False)

    @property
    def mass(self) -> float:
        return float(sum(a.mass for a in self.arcs))

    @property
    def nodes(self) -> np.ndarray:
        return np.concatenate([a.xs for a in self.arcs])

    @property
    def masses(self) -> np.ndarray:
        return np.concatenate([a.weights * a.density for a in self.arcs])

    def support_lines(self) -> List[np.ndarray]:
        return [self.network.edges[a.edge].xs for a in self.arcs]

    def to_dict(self) -> dict:
        return {
            "potential": list(self.potential),
            "polynomial": polynomial_to_json(self.result.poly),
            "solver": self.result.to_dict(),
            "genus": self.result.genus,
            "zeta_residual": self.result.zeta_residual,
            "support": [a.to_dict() for a in self.arcs],
            "mass": self.mass,
            "euler_lagrange": self.euler_lagrange,
            "el_residual": self.el_residual,
            "stieltjes": [
                {"x": x, "W_curve": wc, "W_measure": wm}
                for x, wc, wm in zip(self.probes, self.w_curve, self.w_measure)
            ],
            "energy": self.energy,
            "moments": self.moments,
            "network": self.network.to_dict(),
        }


def _potential_derivative(potential: Sequence[float]) -> np.ndarray:
    return npoly.polyder(np.concatenate([[0.0], np.asarray(potential, dtype=float)]))


def _reach(crit) -> float:
    special = crit.special_xs()
    return max([1.0] + [abs(s) for s in special])


def physical_sheet(poly, potential: Sequence[float], x: complex, support_lines, crit, settings=None) -> complex:
    """
    Y on the sheet that behaves like V'/2 at infinity, cut along the support

    Continues from a far point on the ray through x and swaps sheets once per support crossing.
    """
    cfg = _cfg(settings)
    x = complex(x)
    radius = 4 * _reach(crit)
    if abs(x) >= radius:
        far = x
    else:
        far = radius * x / abs(x) if x != 0 else complex(radius)
    roots = fiber(poly, far).roots
    half_vp = npoly.polyval(far, _potential_derivative(potential)) / 2
    y_far = complex(roots[np.argmin(np.abs(roots - half_vp))])
    if far == x:
        return y_far
    special = crit.special_xs()
    for bend in (0.0, 0.05, -0.05, 0.2, -0.2):
        path = [far, x] if bend == 0 else [far, (far + x) / 2 + bend * 1j * (x - far), x]
        try:
            ys = continue_sheet(poly, path, y_far, cfg, avoid=special)
        except (PathThroughBranchPoint, SheetCollision):
            continue
        y = complex(ys[-1])
        crossings = sum(len(polyline_crossings(np.array(path, dtype=complex), line)) for line in support_lines)
        if crossings % 2:
            roots = fiber(poly, x).roots
            y = complex(roots[np.argmax(np.abs(roots - y))])
        return y
    raise BranchMismatch("no path from infinity reaches the point", x=x)


def stieltjes_transform(pkg: EquilibriumPackage, xs) -> np.ndarray:
    """W = V'/2 - Y on the physical sheet."""
    xs = np.atleast_1d(np.asarray(xs, dtype=complex))
    vp = _potential_derivative(pkg.potential)
    lines = pkg.support_lines()
    return np.array([
        npoly.polyval(x, vp) / 2 - physical_sheet(pkg.result.poly, pkg.potential, x, lines, pkg.crit, pkg.settings)
        for x in xs
    ])


def measure_transform(pkg: EquilibriumPackage, xs) -> np.ndarray:
    """Integral of d mu(s) / (x - s) by the support quadrature."""
    xs = np.atleast_1d(np.asarray(xs, dtype=complex))
    return np.sum(pkg.masses[None, :] / (xs[:, None] - pkg.nodes[None, :]), axis=1)


def _check_potential(potential) -> Tuple[float, ...]:
    values = tuple(float(v) for v in potential)
    if len(values) < 2 or values[-1] == 0:
        raise InputError("potential needs degree >= 2 with a nonzero leading coefficient", potential=list(values))
    return values


def _infinity_plus(expansions):
    at_inf = [e for e in expansions if e.spec.at_infinity]
    return min(at_inf, key=lambda e: abs(complex(e.times[0]) - 1)) if at_inf else None


def mm1_equilibrium(potential: Sequence[float], settings: Optional[dict] = None,
                    seed_interior: Optional[Sequence[complex]] = None, probes=None) -> EquilibriumPackage:
    """
    Equilibrium measure of the one-matrix model with potential V = sum v_k x^k

    Args:
        potential (list): v_1..v_d, d >= 2, v_d != 0
        settings (dict, optional): Active settings
        seed_interior (list, optional): solver start in the moduli basis
        probes (array, optional): points off the support where W is compared both ways

    Returns:
        EquilibriumPackage
    """
    cfg = _cfg(settings)
    potential = _check_potential(potential)
    result = solve(one_matrix(potential), cfg, one_matrix_support(potential), seed_interior=seed_interior)
    poly = result.poly
    network = build_second_kind(poly, cfg)
    if not network.support:
        raise NegativeDensity("the second-kind network carries no measure", potential=list(potential))
    for m in network.measures:
        if m.sign == "mixed":
            raise NegativeDensity("density changes sign along a support edge", edge=m.edge)

    crit = critical_set(poly, cfg)
    reach = _reach(crit)
    lines = [network.edges[k].xs for k in network.support]
    for k in network.support:
        edge = network.edges[k]
        mid = len(edge.xs) // 2
        tangent = edge.xs[min(mid + 1, len(edge.xs) - 1)] - edge.xs[max(mid - 1, 0)]
        tangent = tangent / abs(tangent)
        offset = 1e-4 * reach * 1j * tangent
        left = physical_sheet(poly, potential, edge.xs[mid] + offset, lines, crit, cfg)
        right = physical_sheet(poly, potential, edge.xs[mid] - offset, lines, crit, cfg)
        jump = ((left - right) * tangent).imag / TWO_PI
        if jump < 0:
            raise NegativeDensity("the Boutroux point found carries a negative measure", edge=k,
                                  x=edge.xs[mid], density=jump)
    if result.genus is not None and len(network.support) != result.genus + 1:
        logger.warning("%d support arcs on a genus %d curve", len(network.support), result.genus)

    diff = difference_curve(poly, cfg)
    arcs = tuple(support_arc(diff, network.edges[k], k, cfg["measure_nodes"]) for k in network.support)
    nodes = np.concatenate([a.xs for a in arcs])
    masses = np.concatenate([a.weights * a.density for a in arcs])
    mass = float(np.sum(masses))
    if abs(mass - 1) > 1e-6:
        logger.warning("equilibrium mass is %.9f", mass)

    v_nodes = potential_values(potential, nodes).real
    log_pot = log_potential(arcs, nodes)
    lagrange = v_nodes - 2 * log_pot
    ell = float(np.sum(masses * lagrange) / mass)
    el_residual = float(np.max(np.abs(lagrange - ell)))
    f_functional = float(np.sum(masses * v_nodes) - np.sum(masses * log_pot))
    energy = {
        "F_functional": f_functional,
        "F_alternative": float(np.sum(masses * v_nodes) / 2 + ell / 2),
        "F_check": result.energy.F_check,
    }

    expansions = all_expansions(poly, cfg, crit)
    plus = _infinity_plus(expansions)
    moments = {"from_measure": [], "from_times": []}
    if plus is not None:
        for k in range(1, min(MOMENTS, len(plus.conj_times)) + 1):
            moments["from_measure"].append(complex(np.sum(masses * nodes ** k)))
            moments["from_times"].append(complex(k * plus.conj_times[k - 1]))
        moments["residue"] = complex(plus.times[0])

    if probes is None:
        probes = 1.5 * reach * np.exp(2j * np.pi * (np.arange(20) + 0.25) / 20)
    probes = np.asarray(probes, dtype=complex)
    pkg = EquilibriumPackage(
        potential=potential, result=result, network=network, arcs=arcs, euler_lagrange=ell,
        el_residual=el_residual, probes=probes, w_curve=np.zeros(0, dtype=complex),
        w_measure=np.zeros(0, dtype=complex), energy=energy, moments=moments, crit=crit, settings=cfg,
    )
    w_curve = stieltjes_transform(pkg, probes)
    w_measure = measure_transform(pkg, probes)
    logger.info("equilibrium: %d arcs, mass %.10f, F %.8f", len(arcs), mass, f_functional)
    return EquilibriumPackage(
        potential=potential, result=result, network=network, arcs=arcs, euler_lagrange=ell,
        el_residual=el_residual, probes=probes, w_curve=w_curve, w_measure=w_measure,
        energy=energy, moments=moments, crit=crit, settings=cfg,
    )


def mm1_energy_check(pkg: EquilibriumPackage) -> dict:
    """The energy functional of the measure against F_check of the curve."""
    f, f_check = pkg.energy["F_functional"], pkg.energy["F_check"]
    return {
        "F_functional": f,
        "F_check": f_check,
        "F_alternative": pkg.energy["F_alternative"],
        "difference": abs(f - f_check) if f_check is not None else None,
    }


def g_values(pkg: EquilibriumPackage, xs) -> np.ndarray:
    """g = V/2 - integral of log(x - s) d mu(s) - l/2, so that Re g = 0 on the support."""
    xs = np.atleast_1d(np.asarray(xs, dtype=complex))
    real = potential_values(pkg.potential, xs) / 2 - log_potential(pkg.arcs, xs) - pkg.euler_lagrange / 2
    angles = np.angle(xs[:, None] - pkg.nodes[None, :])
    return real - 1j * np.sum(pkg.masses[None, :] * angles, axis=1)


def g_function_export(pkg: EquilibriumPackage, grid=None) -> dict:
    """
    Support, vertex growth, sampled g and its Laurent data at infinity

    Args:
        pkg (EquilibriumPackage): solved one-matrix model
        grid (array, optional): sample points; defaults to a 21 x 21 square around the support

    Returns:
        dict: JSON-ready document
    """
    if grid is None:
        half = 1.5 * _reach(pkg.crit)
        axis = np.linspace(-half, half, 21)
        grid = (axis[None, :] + 1j * axis[:, None]).ravel()
    grid = np.asarray(grid, dtype=complex)
    ends = [x for a in pkg.arcs for x in a.endpoints]
    vertices = []
    for seed in pkg.network.seeds:
        if any(abs(seed.x - e) < 1e-8 * max(1.0, abs(e)) for e in ends):
            vertices.append({
                "x": seed.x,
                "exponent": (seed.order + 1) / seed.ramification,
                "coefficient": seed.coefficient / 2,
            })
    plus = _infinity_plus(all_expansions(pkg.result.poly, pkg.settings, pkg.crit))
    laurent = None
    if plus is not None:
        laurent = {
            "times": plus.times,
            "conj_times": plus.conj_times,
            "constant": -pkg.euler_lagrange / 2,
        }
    return {
        "potential": list(pkg.potential),
        "support": [{"edge": a.edge, "points": pkg.network.edges[a.edge].xs} for a in pkg.arcs],
        "vertices": vertices,
        "grid": [{"x": x, "g": g} for x, g in zip(grid, g_values(pkg, grid))],
        "laurent_at_infinity": laurent,
        "euler_lagrange": pkg.euler_lagrange,
    }
