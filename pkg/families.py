"""
Curve families used by the pipelines and the test-suite:
- Weierstrass:   y^2 - x^3 + g2 x + g3
- Strebel:       D(x)^2 y^2 - sum_a L_a^2 D'(z_a) D(x) / (x - z_a),  D = prod (x - z_a)
- one-matrix:    y^2 - V'(x)^2 / 4 + t_d x^(d-2)

Potentials are given as the coefficients v_1..v_d of V(x) = sum v_k x^k, so t_k = k v_k.
"""
from typing import Dict, List, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly

from errors import InputError
from polygon import BivariatePolynomial


def weierstrass(g2: complex, g3: complex = 0.0) -> BivariatePolynomial:
    return BivariatePolynomial.from_terms({(0, 2): 1.0, (3, 0): -1.0, (1, 0): g2, (0, 0): g3})


def degenerate_weierstrass(u: float) -> BivariatePolynomial:
    """(x - u)^2 (x + 2u) = y^2: a nodal point at x = u and a branch point at x = -2u."""
    return weierstrass(3 * u * u, -2 * u ** 3)


def marked_polynomial(points: Sequence[complex]) -> np.ndarray:
    """Ascending coefficients of D(x) = prod (x - z_a)."""
    return npoly.polyfromroots(np.asarray(points, dtype=complex))


def strebel_exterior(points: Sequence[complex], perimeters: Sequence[float]) -> BivariatePolynomial:
    """
    Strebel curve of N marked points with perimeter parameters L_a

    Args:
        points (list): N distinct complex marked points
        perimeters (list): N positive reals

    Returns:
        BivariatePolynomial: D^2 y^2 - sum L_a^2 D'(z_a) D / (x - z_a)
    """
    points = [complex(z) for z in points]
    if len(points) < 3:
        raise InputError("a Strebel problem needs at least three marked points", count=len(points))
    if len(perimeters) != len(points):
        raise InputError("one perimeter per marked point", points=len(points), perimeters=len(perimeters))
    if any(float(L) <= 0 for L in perimeters):
        raise InputError("perimeters must be positive", perimeters=list(perimeters))
    if min(abs(a - b) for k, a in enumerate(points) for b in points[k + 1:]) < 1e-12:
        raise InputError("marked points must be distinct", points=points)
    d = marked_polynomial(points)
    dd = npoly.polyder(d)
    rest = np.zeros(len(points), dtype=complex)
    for z, L in zip(points, perimeters):
        quotient, _ = npoly.polydiv(d, [-z, 1.0])
        rest = npoly.polyadd(rest, float(L) ** 2 * npoly.polyval(z, dd) * quotient)
    terms: Dict[Tuple[int, int], complex] = {}
    for i, c in enumerate(npoly.polymul(d, d)):
        terms[(i, 2)] = c
    for i, c in enumerate(rest):
        terms[(i, 0)] = -c
    return BivariatePolynomial.from_terms(terms)


def strebel_support(count: int) -> frozenset:
    """Lattice support of the Strebel family with `count` marked points: (0,0), (N-1,0), (2N,2), (0,2)."""
    return frozenset([(i, 2) for i in range(2 * count + 1)] + [(i, 0) for i in range(count)])


def parse_potential(text: str) -> List[float]:
    """'0,0.5' -> [0.0, 0.5], the coefficients of x^1..x^d in V."""
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError("potential must be comma-separated numbers", potential=text) from exc
    if len(values) < 2 or values[-1] == 0:
        raise InputError("potential needs degree >= 2 with a nonzero leading coefficient", potential=text)
    return values


def times_of_potential(potential: Sequence[float]) -> np.ndarray:
    """t_1..t_d from V = sum v_k x^k."""
    return np.array([k * v for k, v in enumerate(potential, start=1)], dtype=float)


def one_matrix(potential: Sequence[float]) -> BivariatePolynomial:
    """Seed member y^2 - V'^2/4 + t_d x^(d-2) of the one-matrix moduli space (Q = 0)."""
    t = times_of_potential(potential)
    d = len(t)
    v_prime = t  # V' = sum t_k x^(k-1)
    exterior = -npoly.polymul(v_prime, v_prime) / 4
    exterior = npoly.polyadd(exterior, np.eye(1, d - 1, d - 2).ravel() * t[-1])
    terms = {(0, 2): 1.0}
    for i, c in enumerate(exterior):
        terms[(i, 0)] = c
    return BivariatePolynomial.from_terms(terms)


def one_matrix_support(potential: Sequence[float]) -> frozenset:
    """Lattice support of the whole one-matrix family: the triangle (0,0), (2d-2,0), (0,2)."""
    d = len(potential)
    return frozenset([(0, 2)] + [(i, 0) for i in range(2 * d - 1)])


def potential_values(potential: Sequence[float], x) -> np.ndarray:
    return npoly.polyval(x, np.concatenate([[0.0], np.asarray(potential, dtype=float)]))
