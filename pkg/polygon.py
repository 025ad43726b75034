"""
Newton polygon combinatorics of a plane curve P(x, y) = 0.
Classifies lattice points, builds the moduli-space basis, enumerates punctures from
minimal hull segments and rebuilds the exterior of P from puncture times.
Lattice classification is exact integer arithmetic; only coefficients are floating point.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.linalg import null_space

from errors import CollinearSupport, DegenerateSegment, ReconstructionUnsupported, ResidueSumNonzero

logger = logging.getLogger(__name__)

Point = Tuple[int, int]

COEFFICIENT_DROP = 1e-14
ROOT_CLUSTER_TOLERANCE = 1e-6
SHIFT_DROP = 1e-9


# ---- Polynomial type ----

@dataclass(frozen=True)
class BivariatePolynomial:
    """Sparse P(x, y) = sum P_ij x^i y^j with a dense coefficient matrix cached alongside."""

    terms: Dict[Point, complex]
    matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.terms:
            raise CollinearSupport("polynomial has no terms")
        nx = max(i for i, _ in self.terms) + 1
        ny = max(j for _, j in self.terms) + 1
        m = np.zeros((nx, ny), dtype=complex)
        for (i, j), c in self.terms.items():
            m[i, j] = c
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_terms(cls, terms, drop: float = COEFFICIENT_DROP) -> "BivariatePolynomial":
        """Build from {(i, j): coeff}, discarding coefficients below drop * max|coeff|."""
        items = {(int(i), int(j)): complex(c) for (i, j), c in dict(terms).items()}
        scale = max((abs(c) for c in items.values()), default=0.0)
        kept = {k: c for k, c in items.items() if abs(c) > drop * scale and c != 0}
        return cls(dict(sorted(kept.items())))

    @classmethod
    def from_matrix(cls, m, drop: float = COEFFICIENT_DROP) -> "BivariatePolynomial":
        m = np.asarray(m, dtype=complex)
        return cls.from_terms({(i, j): m[i, j] for i, j in zip(*np.nonzero(m))}, drop=drop)

    @property
    def support(self) -> frozenset:
        return frozenset(self.terms)

    @property
    def degree_y(self) -> int:
        return max(j for _, j in self.terms)

    @property
    def degree_x(self) -> int:
        return max(i for i, _ in self.terms)

    @property
    def scale(self) -> float:
        return max(abs(c) for c in self.terms.values())

    def __call__(self, x, y):
        return npoly.polyval2d(x, y, self.matrix)

    def dx(self, x, y):
        return npoly.polyval2d(x, y, npoly.polyder(self.matrix, axis=0))

    def dy(self, x, y):
        return npoly.polyval2d(x, y, npoly.polyder(self.matrix, axis=1))

    def y_coefficients(self, x):
        """Coefficients P_0(x)..P_d(x) of P as a polynomial in y; shape (d+1,) + shape(x)."""
        return npoly.polyval(x, self.matrix)

    def leading_x_coefficients(self) -> np.ndarray:
        """Ascending coefficients of P_d(x), trailing zeros trimmed."""
        return npoly.polytrim(self.matrix[:, self.degree_y])

    def shifted(self, x0: complex, drop: float = SHIFT_DROP) -> "BivariatePolynomial":
        """P(x + x0, y), with round-off coefficients below drop * scale removed."""
        if x0 == 0:
            return self
        out = np.zeros_like(self.matrix)
        shift = npoly.Polynomial([x0, 1.0])
        for j in range(self.matrix.shape[1]):
            col = npoly.Polynomial(self.matrix[:, j])(shift).coef
            out[: len(col), j] = col
        return BivariatePolynomial.from_matrix(out, drop=drop)

    def __add__(self, other: "BivariatePolynomial") -> "BivariatePolynomial":
        terms = dict(self.terms)
        for k, c in other.terms.items():
            terms[k] = terms.get(k, 0) + c
        return BivariatePolynomial.from_terms(terms)

    def scaled(self, factor: complex) -> "BivariatePolynomial":
        return BivariatePolynomial({k: c * factor for k, c in self.terms.items()})

    def plus_interior(self, basis: List["BivariatePolynomial"], coefficients) -> "BivariatePolynomial":
        """P + sum q_k B_k; keeps every exterior term even if a basis element cancels it."""
        terms = dict(self.terms)
        for q, b in zip(coefficients, basis):
            for k, c in b.terms.items():
                terms[k] = terms.get(k, 0) + complex(q) * c
        return BivariatePolynomial.from_terms(terms, drop=1e-15)


def cluster_roots(roots, tolerance: float = ROOT_CLUSTER_TOLERANCE) -> List[Tuple[complex, int]]:
    """Group numerically repeated roots; returns (mean, multiplicity) sorted by (real, imag)."""
    roots = [complex(r) for r in roots]
    scale = max([1.0] + [abs(r) for r in roots])
    clusters: List[List[complex]] = []
    for r in roots:
        for c in clusters:
            if abs(np.mean(c) - r) <= tolerance * scale:
                c.append(r)
                break
        else:
            clusters.append([r])
    found = [(complex(np.mean(c)), len(c)) for c in clusters]
    return sorted(found, key=lambda t: (round(t[0].real, 12), round(t[0].imag, 12)))


# ---- Lattice geometry ----

def _cross(o: Point, a: Point, b: Point) -> int:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> List[Point]:
    """Monotone chain; counter-clockwise, collinear points dropped."""
    pts = sorted(set(points))
    if len(pts) < 3:
        return pts
    lower: List[Point] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: List[Point] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _hull_edges(hull: List[Point]) -> List[Tuple[Point, Point]]:
    return [(hull[k], hull[(k + 1) % len(hull)]) for k in range(len(hull))]


def _locate(hull: List[Point], p: Point) -> int:
    """+1 strictly inside, 0 on the boundary, -1 outside."""
    signs = [_cross(a, b, p) for a, b in _hull_edges(hull)]
    if any(s < 0 for s in signs):
        return -1
    return 0 if any(s == 0 for s in signs) else 1


def lattice_classification(support) -> Dict[str, frozenset]:
    """Completion, interior (shifted), boundary and 2nd/3rd kind sets of a support."""
    hull = convex_hull(support)
    if len(hull) < 3:
        raise CollinearSupport("support points are collinear", support=sorted(support))
    xs = [p[0] for p in hull]
    ys = [p[1] for p in hull]
    completion = {
        (i, j)
        for i in range(min(xs), max(xs) + 1)
        for j in range(min(ys), max(ys) + 1)
        if _locate(hull, (i, j)) >= 0
    }
    # interior points may fall outside the completion (y^2 = x^3 - 3x has no (0, 0) term)
    interior = {
        (i, j)
        for i in range(min(xs) - 1, max(xs))
        for j in range(min(ys) - 1, max(ys))
        if _locate(hull, (i + 1, j + 1)) > 0
    }
    third, second = set(), set()
    for (i, j) in completion - interior:
        if _locate(hull, (i + 1, j + 1)) == 0:
            third.add((i, j))
        else:
            second.add((i, j))
    boundary = completion - {(i + 1, j + 1) for i, j in interior}
    return {
        "hull": tuple(hull),
        "completion": frozenset(completion),
        "interior": frozenset(interior),
        "boundary": frozenset(boundary),
        "third_kind": frozenset(third),
        "second_kind": frozenset(second),
    }


# ---- Polygon analysis ----

@dataclass(frozen=True)
class NewtonPolygonData:
    support: frozenset
    hull_vertices: Tuple[Point, ...]
    completion: frozenset
    interior: frozenset
    boundary: frozenset
    second_kind: frozenset
    third_kind: frozenset
    moduli_basis: Tuple[BivariatePolynomial, ...]
    leading_zeros: Tuple[Tuple[complex, int], ...]


def leading_zeros(poly: BivariatePolynomial, tolerance: float = ROOT_CLUSTER_TOLERANCE):
    """Distinct zeros of P_d(x) with multiplicities."""
    coeffs = poly.leading_x_coefficients()
    if len(coeffs) <= 1:
        return ()
    return tuple(cluster_roots(npoly.polyroots(coeffs), tolerance))


def _moduli_basis(poly: BivariatePolynomial, interior, zeros) -> Tuple[BivariatePolynomial, ...]:
    monomials = sorted(interior, key=lambda p: (p[1], p[0]))
    if not monomials:
        return ()
    rows = []
    for x0, _ in zeros:
        allowed = lattice_classification(poly.shifted(x0).support)["interior"]
        # coefficient of x^k y^j in (x + x0)^i y^j must vanish outside the shifted interior
        targets = sorted({(k, j) for i, j in monomials for k in range(i + 1)} - set(allowed))
        for k, jj in targets:
            row = np.zeros(len(monomials), dtype=complex)
            for col, (i, j) in enumerate(monomials):
                if j == jj and k <= i:
                    row[col] = _binomial(i, k) * x0 ** (i - k)
            rows.append(row)
    if rows:
        kernel = null_space(np.array(rows), rcond=1e-9)
    else:
        kernel = np.eye(len(monomials), dtype=complex)
    basis = []
    for vec in kernel.T:
        vec = vec / vec[np.argmax(np.abs(vec))]
        basis.append(BivariatePolynomial.from_terms(dict(zip(monomials, vec)), drop=1e-12))
    return tuple(basis)


def _binomial(n: int, k: int) -> int:
    out = 1
    for m in range(k):
        out = out * (n - m) // (m + 1)
    return out


def analyze(poly: BivariatePolynomial, settings: Optional[dict] = None, support=None) -> NewtonPolygonData:
    """
    Classify the lattice points of the Newton polygon and build the moduli basis

    Args:
        poly (BivariatePolynomial): Curve
        settings (dict, optional): Active settings (root clustering tolerance)
        support (iterable, optional): lattice support of the whole family when it is
            larger than the support of this member (e.g. a vanishing constant term)

    Returns:
        NewtonPolygonData: classification sets and basis of C[interior]
    """
    tolerance = (settings or {}).get("root_cluster_tolerance", ROOT_CLUSTER_TOLERANCE)
    support = frozenset(tuple(p) for p in support) | poly.support if support is not None else poly.support
    sets = lattice_classification(support)
    zeros = leading_zeros(poly, tolerance)
    basis = _moduli_basis(poly, sets["interior"], zeros)
    logger.debug("polygon: %d interior points, moduli dimension %d", len(sets["interior"]), len(basis))
    return NewtonPolygonData(
        support=support,
        hull_vertices=sets["hull"],
        completion=sets["completion"],
        interior=sets["interior"],
        boundary=sets["boundary"],
        second_kind=sets["second_kind"],
        third_kind=sets["third_kind"],
        moduli_basis=basis,
        leading_zeros=zeros,
    )


def moduli_dimension(data: NewtonPolygonData) -> int:
    return len(data.moduli_basis)


def _points(points) -> List[List[int]]:
    return [list(p) for p in sorted(points)]


def polygon_report(poly: BivariatePolynomial, settings: Optional[dict] = None, support=None) -> dict:
    """Lattice classification, moduli dimension and punctures of a curve, JSON-ready."""
    data = analyze(poly, settings, support)
    return {
        "support": _points(data.support),
        "hull_vertices": [list(p) for p in data.hull_vertices],
        "completion": _points(data.completion),
        "interior": _points(data.interior),
        "boundary": _points(data.boundary),
        "second_kind": _points(data.second_kind),
        "third_kind": _points(data.third_kind),
        "moduli_dimension": moduli_dimension(data),
        "moduli_basis": [
            [{"i": i, "j": j, "re": float(c.real), "im": float(c.imag)} for (i, j), c in sorted(b.terms.items())]
            for b in data.moduli_basis
        ],
        "leading_zeros": [{"x": x, "multiplicity": m} for x, m in data.leading_zeros],
        "punctures": [p.to_dict() for p in enumerate_punctures(poly, settings)],
    }


# ---- Punctures ----

@dataclass(frozen=True)
class PunctureSpec:
    """One puncture: X ~ zeta^-a (a > 0, over infinity) or X - X_a ~ zeta^|a| (a < 0), Y ~ C zeta^-b."""

    segment: Tuple[Point, Point]
    a_order: int
    b_order: int
    base_x: Optional[complex]
    leading_coeff: complex

    @property
    def at_infinity(self) -> bool:
        return self.base_x is None

    @property
    def has_pole(self) -> bool:
        return self.a_order + self.b_order >= 0

    @property
    def r_order(self) -> int:
        return max(self.a_order + self.b_order, 0)

    @property
    def predicted_top_time(self) -> complex:
        """Res zeta^r Y dX = -a C."""
        return -self.a_order * self.leading_coeff if self.has_pole else 0j

    def label(self) -> str:
        where = "inf" if self.at_infinity else f"{self.base_x.real:.6g}{self.base_x.imag:+.6g}j"
        return f"{where}:{self.leading_coeff.real:.6g}{self.leading_coeff.imag:+.6g}j"

    def to_dict(self) -> dict:
        return {
            "label": self.label(),
            "segment": [list(p) for p in self.segment],
            "a_order": self.a_order,
            "b_order": self.b_order,
            "r_order": self.r_order,
            "at_infinity": self.at_infinity,
            "base_x": self.base_x,
            "leading_coeff": self.leading_coeff,
        }


def _segment_punctures(poly: BivariatePolynomial, p: Point, q: Point, base_x) -> List[PunctureSpec]:
    di, dj = q[0] - p[0], q[1] - p[1]
    g = gcd(abs(di), abs(dj))
    si, sj = di // g, dj // g
    u, v = -sj, si  # inward normal of a counter-clockwise edge
    a, b = -u, -v
    on_edge = [(p[0] + k * si, p[1] + k * sj) for k in range(g + 1)]
    jmin = min(j for _, j in on_edge)
    jmax = max(j for _, j in on_edge)
    c_poly = np.zeros(jmax - jmin + 1, dtype=complex)
    for (i, j) in on_edge:
        c_poly[j - jmin] += poly.terms.get((i, j), 0)
    c_roots = [r for r in npoly.polyroots(c_poly) if abs(r) > 0]
    # the |a| roots C of one orbit share w = C^|a|
    w_clusters = cluster_roots([r ** abs(a) for r in c_roots], 1e-7)
    specs = []
    for w, mult in w_clusters:
        if mult != abs(a):
            raise DegenerateSegment(
                "repeated leading coefficient on hull segment",
                segment=[p, q], multiplicity=mult, expected=abs(a),
            )
        orbit = [r for r in c_roots if abs(r ** abs(a) - w) <= 1e-6 * max(1.0, abs(w))]
        rep = min(orbit, key=lambda c: np.angle(c) % (2 * np.pi))
        specs.append(PunctureSpec(segment=(p, q), a_order=a, b_order=b, base_x=base_x, leading_coeff=complex(rep)))
    return specs


def enumerate_punctures(poly: BivariatePolynomial, settings: Optional[dict] = None) -> List[PunctureSpec]:
    """
    One puncture per minimal hull segment, over infinity and over each zero of P_d

    Args:
        poly (BivariatePolynomial): Curve
        settings (dict, optional): Active settings

    Returns:
        list: PunctureSpec entries, infinity first then finite points by (real, imag)
    """
    tolerance = (settings or {}).get("root_cluster_tolerance", ROOT_CLUSTER_TOLERANCE)
    hull = convex_hull(poly.support)
    if len(hull) < 3:
        raise CollinearSupport("support points are collinear", support=sorted(poly.support))
    punctures = []
    for p, q in _hull_edges(hull):
        if q[1] - p[1] > 0:  # u < 0: x tends to infinity
            punctures.extend(_segment_punctures(poly, p, q, None))
    for x0, _ in leading_zeros(poly, tolerance):
        local = poly.shifted(x0)
        local_hull = convex_hull(local.support)
        for p, q in _hull_edges(local_hull):
            u, v = -(q[1] - p[1]), q[0] - p[0]
            if u > 0 and v < 0:
                punctures.extend(_segment_punctures(local, p, q, complex(x0)))
    return punctures


# ---- Reconstruction from times ----

def puncture_times(poly: BivariatePolynomial, spec: PunctureSpec) -> np.ndarray:
    """
    Times t_0..t_r of Y dX at a puncture, from the Puiseux series of its representative sheet

    In the chart X = zeta^-a (or X - X_a = zeta^|a|) the sheet is Y = zeta^-b (C + c_1 zeta + ...),
    and t_k = -a c_{r-k}.

    Args:
        poly (BivariatePolynomial): Curve
        spec (PunctureSpec): puncture from enumerate_punctures

    Returns:
        np.ndarray: t_0..t_r, or [0] when Y dX has no pole there
    """
    if not spec.has_pole:
        return np.zeros(1, dtype=complex)
    local = poly if spec.at_infinity else poly.shifted(spec.base_x)
    a, b, r = spec.a_order, spec.b_order, spec.r_order
    powers = {p: -a * p[0] - b * p[1] for p in local.terms}
    low = min(powers.values())
    lead = sum(j * c * spec.leading_coeff ** (j - 1)
               for (i, j), c in local.terms.items() if powers[(i, j)] == low and j > 0)
    n = r + 1
    w = np.zeros(n, dtype=complex)
    w[0] = spec.leading_coeff
    # each pass fixes one more coefficient of w
    for _ in range(n):
        w_pow = [np.eye(1, n, dtype=complex)[0]]
        for _power in range(local.degree_y):
            w_pow.append(npoly.polymul(w_pow[-1], w)[:n])
        residual = np.zeros(n, dtype=complex)
        for (i, j), c in local.terms.items():
            e = powers[(i, j)] - low
            if e < n:
                residual[e:] += c * w_pow[j][: n - e]
        w = w - residual / lead
    return np.array([-a * w[r - k] for k in range(r + 1)])


def _series_mul(s1: Dict[Fraction, complex], s2: Dict[Fraction, complex]) -> Dict[Fraction, complex]:
    out: Dict[Fraction, complex] = {}
    for e1, c1 in s1.items():
        for e2, c2 in s2.items():
            out[e1 + e2] = out.get(e1 + e2, 0) + c1 * c2
    return out


def _merge(s1: Dict[Fraction, complex], s2: Dict[Fraction, complex]) -> Dict[Fraction, complex]:
    out = dict(s1)
    for e, c in s2.items():
        out[e] = out.get(e, 0) + c
    return out


def _sheet_product(entries, offset: int) -> List[Dict[Fraction, complex]]:
    """y^offset * prod over the sheets of each puncture of (y - Y_hat), coefficients as series in x or x - X_a."""
    product: List[Dict[Fraction, complex]] = [{} for _ in range(offset)] + [{Fraction(0): 1.0 + 0j}]
    for spec, t in entries:
        a = spec.a_order
        omega = np.exp(2j * np.pi / abs(a))
        for sheet in range(1, abs(a) + 1):
            y_hat = {}
            for k, tk in enumerate(t):
                if tk == 0:
                    continue
                e = Fraction(k, a) - 1
                y_hat[e] = y_hat.get(e, 0) - complex(tk) * omega ** (-sheet * k) / a
            shifted = [{}] + product
            minus = [_series_mul(coef, {e: -c for e, c in y_hat.items()}) for coef in product] + [{}]
            product = [_merge(s, m) for s, m in zip(shifted, minus)]
    return product


def _group_finite(punctures, times, tolerance: float):
    groups: List[Tuple[complex, list]] = []
    for spec, t in zip(punctures, times):
        if spec.at_infinity:
            continue
        for x0, members in groups:
            if abs(spec.base_x - x0) <= tolerance * max(1.0, abs(x0)):
                members.append((spec, t))
                break
        else:
            groups.append((spec.base_x, [(spec, t)]))
    return groups


def _exterior_positions(punctures, d_poly: np.ndarray, degree: int, tolerance: float) -> frozenset:
    """Non-interior lattice points of the polygon spanned by the infinity segments, the D(x) row and the origin side."""
    points = {(i, degree) for i, c in enumerate(d_poly) if abs(c) > tolerance * np.max(np.abs(d_poly))}
    at_origin = False
    for spec in punctures:
        if spec.at_infinity:
            points.update(spec.segment)
        elif abs(spec.base_x) <= tolerance:
            points.update(spec.segment)
            at_origin = True
    if not at_origin:
        points.add((0, 0))
    sets = lattice_classification(points)
    return sets["completion"] - sets["interior"]


def reconstruct_from_times(punctures: List[PunctureSpec], times, settings: Optional[dict] = None) -> BivariatePolynomial:
    """
    Rebuild the exterior of a curve with P_d = D(x) monic from the times of all its punctures

    P = D(x) (P_inf + sum_a P_a), where P_inf is the polynomial part of prod (y - Y_hat) over the
    sheets at infinity and P_a the principal part at X_a of y^(d - n_a) prod (y - Y_hat) over the
    n_a sheets of the poles over X_a; D = prod (x - X_a)^(sum of b over those poles).
    Only the non-interior points of the polygon spanned by the puncture segments are kept,
    truncated principal parts leave debris to the right of it.

    Args:
        punctures (list): PunctureSpec entries from enumerate_punctures
        times (list): per puncture, the vector t_0..t_r
        settings (dict, optional): Active settings (residue_sum_tolerance, reconstruction_tolerance)

    Returns:
        BivariatePolynomial: the exterior, interior coefficients set to zero
    """
    cfg = settings or {}
    residue_tolerance = cfg.get("residue_sum_tolerance", 1e-9)
    drop = cfg.get("reconstruction_tolerance", 1e-8)
    residue_sum = sum(complex(t[0]) for t in times)
    if abs(residue_sum) > residue_tolerance:
        raise ResidueSumNonzero("residues do not sum to zero", residue_sum=residue_sum)
    for spec in punctures:
        if not spec.at_infinity and not spec.has_pole:
            raise ReconstructionUnsupported(
                "Y dX is regular at a pole of Y, its times do not fix the leading coefficient",
                puncture=spec.label(),
            )

    at_infinity = [(p, t) for p, t in zip(punctures, times) if p.at_infinity]
    degree = sum(p.a_order for p, _ in at_infinity)
    groups = _group_finite(punctures, times, cfg.get("root_cluster_tolerance", ROOT_CLUSTER_TOLERANCE))
    orders = [sum(p.b_order for p, _ in members) for _, members in groups]
    factors = [npoly.polypow([-x0, 1.0], m) for (x0, _), m in zip(groups, orders)]
    d_poly = np.array([1.0 + 0j])
    for f in factors:
        d_poly = npoly.polymul(d_poly, f)

    columns = [np.zeros(1, dtype=complex) for _ in range(degree + 1)]
    for j, coef in enumerate(_sheet_product(at_infinity, 0)):
        part = np.zeros(1 + max([int(e) for e in coef if e.denominator == 1 and e >= 0], default=0), dtype=complex)
        for e, c in coef.items():
            if e.denominator == 1 and e >= 0:
                part[int(e)] += c
        columns[j] = npoly.polyadd(columns[j], npoly.polymul(d_poly, part))
    for k, ((x0, members), m) in enumerate(zip(groups, orders)):
        others = np.array([1.0 + 0j])
        for kk, f in enumerate(factors):
            if kk != k:
                others = npoly.polymul(others, f)
        offset = degree - sum(abs(p.a_order) for p, _ in members)
        for j, coef in enumerate(_sheet_product(members, offset)):
            for e, c in coef.items():
                if e.denominator == 1 and -m <= e < 0:
                    term = c * npoly.polymul(others, npoly.polypow([-x0, 1.0], m + int(e)))
                    columns[j] = npoly.polyadd(columns[j], term)

    allowed = _exterior_positions(punctures, d_poly, degree, cfg.get("root_cluster_tolerance", ROOT_CLUSTER_TOLERANCE))
    terms = {(i, j): c for j, col in enumerate(columns) for i, c in enumerate(col) if (i, j) in allowed}
    result = BivariatePolynomial.from_terms(terms, drop=drop)
    logger.debug("reconstructed %d exterior terms from %d punctures", len(result.terms), len(punctures))
    return result
