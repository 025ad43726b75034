"""
Numerical function theory on a plane curve P(x, y) = 0.
Fibers of X, branch and nodal points, sheet continuation along x-paths,
path integrals of Y dX, and Laurent data (times, conjugate times) at punctures.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly
from numpy.polynomial.legendre import leggauss

from errors import (
    BranchMismatch,
    IllConditionedDiscriminant,
    PathThroughBranchPoint,
    QuadratureNonConvergent,
    RadiusTooLarge,
    SheetCollision,
)
from polygon import BivariatePolynomial, PunctureSpec, cluster_roots, enumerate_punctures, leading_zeros
from settings import DEFAULT_SETTINGS

logger = logging.getLogger(__name__)


def _cfg(settings):
    return settings if settings is not None else DEFAULT_SETTINGS


# ---- Fibers ----

@dataclass(frozen=True)
class Fiber:
    x: complex
    roots: np.ndarray
    condition: float
    infinite: int = 0


def fiber(poly: BivariatePolynomial, x: complex) -> Fiber:
    """Roots of P(x, .) by companion eigenvalues; infinite roots flagged when P_d(x) ~ 0."""
    coeffs = np.asarray(poly.y_coefficients(complex(x)), dtype=complex)
    scale = np.max(np.abs(coeffs)) or 1.0
    d = len(coeffs) - 1
    top = d
    while top > 0 and abs(coeffs[top]) <= 1e-13 * scale:
        top -= 1
    roots = npoly.polyroots(coeffs[: top + 1]) if top > 0 else np.array([], dtype=complex)
    roots = np.array(sorted(roots, key=lambda r: (r.real, r.imag)), dtype=complex)
    if len(roots) > 1:
        gaps = np.abs(roots[:, None] - roots[None, :]) + np.eye(len(roots)) * np.inf
        condition = float(np.min(gaps))
    else:
        condition = float("inf")
    return Fiber(x=complex(x), roots=roots, condition=condition, infinite=d - top)


def fiber_roots_batch(poly: BivariatePolynomial, xs) -> np.ndarray:
    """All d roots at many x at once, shape (len(xs), d); assumes P_d(x) != 0 there."""
    xs = np.asarray(xs, dtype=complex).ravel()
    coeffs = np.moveaxis(np.asarray(poly.y_coefficients(xs), dtype=complex), 0, -1)
    d = coeffs.shape[-1] - 1
    monic = coeffs[:, :d] / coeffs[:, d:]
    if d == 1:
        return -monic
    if d == 2:
        b, c = monic[:, 1], monic[:, 0]
        disc = np.sqrt(b * b - 4 * c)
        return np.stack([(-b + disc) / 2, (-b - disc) / 2], axis=-1)
    companion = np.zeros((len(xs), d, d), dtype=complex)
    companion[:, 1:, :-1] = np.eye(d - 1)
    companion[:, :, -1] = -monic
    return np.linalg.eigvals(companion)


def newton_polish(poly: BivariatePolynomial, x, y, steps: int = 4):
    """A few Newton iterations on P(x, .) starting from y (vectorized)."""
    y = np.asarray(y, dtype=complex)
    for _ in range(steps):
        dy = poly.dy(x, y)
        safe = np.where(np.abs(dy) > 0, dy, 1.0)
        y = y - np.where(np.abs(dy) > 0, poly(x, y) / safe, 0.0)
    return y


def slope(poly: BivariatePolynomial, x, y):
    """dY/dx = -P_x / P_y on the curve."""
    return -poly.dx(x, y) / poly.dy(x, y)


# ---- Critical set ----

@dataclass(frozen=True)
class CriticalPoint:
    x: complex
    y: complex
    kind: str                      # 'branch' | 'nodal'
    ramification: int = 1
    sheet_pair: Optional[Tuple[int, int]] = None
    tangency: int = 0


@dataclass(frozen=True)
class CriticalSet:
    branch_points: Tuple[CriticalPoint, ...]
    nodal_points: Tuple[CriticalPoint, ...]
    leading_zeros: Tuple[complex, ...] = field(default=())

    @property
    def points(self) -> Tuple[CriticalPoint, ...]:
        return self.branch_points + self.nodal_points

    def special_xs(self) -> np.ndarray:
        """x-values every path must avoid: critical points and zeros of P_d."""
        xs = [p.x for p in self.points] + list(self.leading_zeros)
        return np.array(sorted(set(xs), key=lambda z: (z.real, z.imag)), dtype=complex)


def discriminant_coefficients(poly: BivariatePolynomial) -> np.ndarray:
    """Ascending coefficients of Res_y(P, P_y) in x."""
    d = poly.degree_y
    cols = [poly.matrix[:, j] for j in range(d + 1)]
    if d == 1:
        return npoly.polytrim(cols[1])
    if d == 2:
        return npoly.polytrim(npoly.polysub(npoly.polymul(cols[1], cols[1]), 4 * npoly.polymul(cols[0], cols[2])))
    bound = (2 * d - 1) * poly.degree_x
    n = 1 << int(np.ceil(np.log2(bound + 8)))

    def sample(radius):
        xs = radius * np.exp(2j * np.pi * np.arange(n) / n)
        values = np.array([np.linalg.det(_sylvester(poly, x)) for x in xs])
        coeffs = np.fft.fft(values) / n
        return coeffs * radius ** (-np.arange(n, dtype=float))

    coeffs = sample(1.0)
    guess = npoly.polyroots(npoly.polytrim(coeffs[: bound + 1], 1e-12 * np.max(np.abs(coeffs))))
    radius = float(np.median(np.abs(guess))) if len(guess) else 1.0
    if radius > 0 and abs(np.log(radius)) > 0.5:
        coeffs = sample(radius)
    scale = np.max(np.abs(coeffs))
    tail = np.max(np.abs(coeffs[bound + 1:])) if n > bound + 1 else 0.0
    if tail > 1e-8 * scale:
        raise IllConditionedDiscriminant("interpolated discriminant has a large tail", tail=tail, scale=scale)
    return npoly.polytrim(coeffs[: bound + 1], 1e-13 * scale)


def _sylvester(poly: BivariatePolynomial, x: complex) -> np.ndarray:
    p = np.asarray(poly.y_coefficients(x), dtype=complex)[::-1]
    dp = np.asarray(npoly.polyder(poly.y_coefficients(x)), dtype=complex)[::-1]
    d = len(p) - 1
    size = 2 * d - 1
    m = np.zeros((size, size), dtype=complex)
    for r in range(d - 1):
        m[r, r: r + d + 1] = p
    for r in range(d):
        m[d - 1 + r, r: r + d] = dp
    return m


def critical_set(poly: BivariatePolynomial, settings: Optional[dict] = None) -> CriticalSet:
    """
    Find and classify all finite common zeros of P and P_y

    Args:
        poly (BivariatePolynomial): Curve
        settings (dict, optional): Active settings

    Returns:
        CriticalSet: branch points (monodromy cycles) and nodal points (coalescing fixed sheets)
    """
    cfg = _cfg(settings)
    zeros = [z for z, _ in leading_zeros(poly, cfg["root_cluster_tolerance"])]
    disc = discriminant_coefficients(poly)
    candidates = cluster_roots(npoly.polyroots(disc), cfg["root_cluster_tolerance"]) if len(disc) > 1 else []
    scale = max([1.0] + [abs(c) for c, _ in candidates])
    candidates = [(c, m) for c, m in candidates if all(abs(c - z) > 1e-6 * scale for z in zeros)]

    branch, nodal = [], []
    everything = [c for c, _ in candidates] + zeros
    for xc, mult in candidates:
        others = [abs(xc - o) for o in everything if o != xc]
        radius = cfg["classification_radius_ratio"] * (min(others) if others else 1.0)
        found_branch, found_nodal = _classify(poly, xc, mult, radius, cfg)
        branch.extend(found_branch)
        nodal.extend(found_nodal)
    logger.debug("critical set: %d branch, %d nodal", len(branch), len(nodal))
    return CriticalSet(tuple(branch), tuple(nodal), tuple(complex(z) for z in zeros))


def _classify(poly, xc, mult, radius, cfg):
    n = 64
    circle = xc + radius * np.exp(2j * np.pi * np.arange(n + 1) / n)
    start = fiber(poly, circle[0]).roots
    ends = []
    for y0 in start:
        ys = continue_sheet(poly, circle, y0, settings=cfg, avoid=np.array([xc]))
        ends.append(ys[-1])
    perm = [int(np.argmin(np.abs(start - e))) for e in ends]
    center = fiber(poly, xc).roots
    seen, cycles = set(), []
    for i in range(len(perm)):
        if i in seen:
            continue
        cycle, k = [], i
        while k not in seen:
            seen.add(k)
            cycle.append(k)
            k = perm[k]
        cycles.append(cycle)

    branch, fixed = [], []
    for cycle in cycles:
        if len(cycle) > 1:
            guess = np.mean(start[cycle])
            yb = center[np.argmin(np.abs(center - guess))]
            branch.append(CriticalPoint(x=complex(xc), y=complex(yb), kind="branch", ramification=len(cycle)))
        else:
            fixed.append(cycle[0])

    nodal = []
    ramified_order = sum(len(c) - 1 for c in cycles)
    spare = mult - ramified_order
    near = {i: center[np.argmin(np.abs(center - start[i]))] for i in fixed}
    for i, j in itertools.combinations(fixed, 2):
        yi, yj = start[i], start[j]
        if abs(near[i] - near[j]) < 1e-6 * max(1.0, abs(near[i])) and abs(yi - yj) < 10 * radius ** 0.5 * max(1.0, abs(yi)):
            nodal.append(CriticalPoint(
                x=complex(xc), y=complex((near[i] + near[j]) / 2), kind="nodal",
                sheet_pair=(i, j), tangency=max(spare // 2, 1),
            ))
    return branch, nodal


# ---- Continuation ----

def _distance_to_points(x: complex, points: np.ndarray) -> float:
    return float(np.min(np.abs(points - x))) if len(points) else np.inf


def _segment_distance(a: complex, b: complex, points: np.ndarray) -> float:
    if not len(points):
        return np.inf
    ab = b - a
    denom = abs(ab) ** 2
    if denom == 0:
        return _distance_to_points(a, points)
    t = np.clip(((points - a) * np.conj(ab)).real / denom, 0.0, 1.0)
    return float(np.min(np.abs(points - (a + t * ab))))


def continue_sheet(poly: BivariatePolynomial, path, y_start: complex, settings: Optional[dict] = None,
                   avoid: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Follow one root of P(x, .) along an x-polyline

    Args:
        poly (BivariatePolynomial): Curve
        path (sequence): x-polyline vertices
        y_start (complex): root of P(path[0], .)
        settings (dict, optional): Active settings
        avoid (array, optional): special x-values; steps shrink near them

    Returns:
        np.ndarray: y at every path vertex
    """
    cfg = _cfg(settings)
    path = np.asarray(path, dtype=complex)
    avoid = np.asarray(avoid if avoid is not None else [], dtype=complex)
    span = max(1.0, float(np.max(np.abs(path))) if len(path) else 1.0)
    margin = cfg["path_margin"] * span
    cap = cfg["continuation_step_cap"]
    h_min = 1e-13 * span
    out = np.empty(len(path), dtype=complex)
    y = complex(y_start)
    out[0] = y
    for k in range(len(path) - 1):
        a, b = path[k], path[k + 1]
        if _segment_distance(a, b, avoid) < margin:
            raise PathThroughBranchPoint("path passes through a special x-value", x_from=a, x_to=b)
        x = a
        h = abs(b - a)
        while abs(b - x) > 0:
            dist = _distance_to_points(x, avoid)
            step = min(h, abs(b - x), cap * dist)
            x_new = b if step >= abs(b - x) else x + (b - x) / abs(b - x) * step
            y_pred = y + slope(poly, x, y) * (x_new - x)
            roots = fiber(poly, x_new).roots
            order = np.argsort(np.abs(roots - y_pred))
            d0 = abs(roots[order[0]] - y_pred)
            d1 = abs(roots[order[1]] - y_pred) if len(roots) > 1 else np.inf
            if d0 < 0.3 * d1:
                x, y = x_new, complex(roots[order[0]])
                h = step * 1.5
            else:
                h = step / 2
                if h < h_min:
                    raise SheetCollision("continuation step underflow", x=x, y=y)
        out[k + 1] = y
    return out


def refine_path(path, avoid: np.ndarray, ratio: float = 0.25) -> np.ndarray:
    """Split polyline segments so each piece is at most ratio * distance to the nearest special x."""
    path = np.asarray(path, dtype=complex)
    out = [path[0]]
    for a, b in zip(path[:-1], path[1:]):
        x = a
        while abs(b - x) > 0:
            dist = _distance_to_points(x, avoid)
            step = ratio * dist if np.isfinite(dist) else abs(b - x)
            step = max(step, 1e-12 * max(1.0, abs(x)))
            if step >= abs(b - x) * 0.999:
                x = b
            else:
                x = x + (b - x) / abs(b - x) * step
            out.append(x)
    return np.array(out, dtype=complex)


def _nodes_along(poly, a, b, y_a, t_nodes):
    """y at x = a + t (b - a) for increasing t in [0, 1], stepping node to node."""
    ys = np.empty(len(t_nodes), dtype=complex)
    x_prev, y_prev = a, y_a
    for k, t in enumerate(t_nodes):
        x = a + t * (b - a)
        y = y_prev + slope(poly, x_prev, y_prev) * (x - x_prev)
        y = complex(newton_polish(poly, x, y))
        ys[k] = y
        x_prev, y_prev = x, y
    return ys


def path_integral(poly: BivariatePolynomial, path, y_start: complex,
                  integrands: Optional[Sequence[Callable]] = None, avoid=None,
                  settings: Optional[dict] = None) -> Tuple[np.ndarray, complex]:
    """
    Integrate f(x, Y) dx along an x-polyline on the sheet through y_start

    Args:
        poly (BivariatePolynomial): Curve
        path (sequence): x-polyline
        y_start (complex): starting root
        integrands (list, optional): callables f(x, y); default [Y]
        avoid (array, optional): special x-values
        settings (dict, optional): Active settings

    Returns:
        tuple: (integrals, y at the end of the path)
    """
    cfg = _cfg(settings)
    integrands = integrands or [lambda x, y: y]
    avoid = np.asarray(avoid if avoid is not None else [], dtype=complex)
    order = cfg["gauss_order"]
    pieces = refine_path(path, avoid)
    ys = continue_sheet(poly, pieces, y_start, settings=cfg, avoid=avoid)

    def integrate(vertices, y_vertices, n):
        nodes, weights = leggauss(n)
        t = (nodes + 1) / 2
        totals = np.zeros(len(integrands), dtype=complex)
        for k in range(len(vertices) - 1):
            a, b = vertices[k], vertices[k + 1]
            y_nodes = _nodes_along(poly, a, b, y_vertices[k], t)
            xs = a + t * (b - a)
            for m, f in enumerate(integrands):
                totals[m] += (b - a) / 2 * np.sum(weights * f(xs, y_nodes))
        return totals

    first = integrate(pieces, ys, order)
    for _ in range(cfg["max_gauss_doublings"]):
        second = integrate(pieces, ys, 2 * order)
        scale = max(1.0, float(np.max(np.abs(second))))
        if np.max(np.abs(second - first)) <= cfg["period_tolerance"] * scale:
            return second, complex(ys[-1])
        # halve every piece and retry
        mids = (pieces[:-1] + pieces[1:]) / 2
        merged = np.empty(2 * len(pieces) - 1, dtype=complex)
        merged[0::2], merged[1::2] = pieces, mids
        pieces = merged
        ys = continue_sheet(poly, pieces, y_start, settings=cfg, avoid=avoid)
        first = second
    raise QuadratureNonConvergent("path quadrature did not stabilize", pieces=len(pieces))


# ---- Monodromy ----

def loop_around(base: complex, center: complex, radius: float, n: int = 24) -> np.ndarray:
    """Spoke from base to the circle around center, one counter-clockwise turn, and back."""
    u = (base - center) / abs(base - center)
    turn = center + radius * u * np.exp(2j * np.pi * np.arange(n + 1) / n)
    return np.concatenate([[base], turn, [base]])


def monodromy_permutation(poly: BivariatePolynomial, loop, avoid=None, settings=None) -> List[int]:
    """Permutation of the sorted fiber over loop[0] induced by continuation along a closed loop."""
    start = fiber(poly, loop[0]).roots
    perm = []
    for y0 in start:
        end = continue_sheet(poly, loop, y0, settings=settings, avoid=avoid)[-1]
        perm.append(int(np.argmin(np.abs(start - end))))
    return perm


def monodromy_closure(poly: BivariatePolynomial, crit: CriticalSet, base: complex, settings=None) -> dict:
    """
    Compare the concatenated local loops (in angular order around base) with a loop around infinity

    Returns:
        dict: local permutations, product permutation, infinity permutation and a closed flag
    """
    points = crit.special_xs()
    if not len(points):
        return {"local": [], "product": [], "infinity": [], "closed": True}
    # angles increase counter-clockwise starting from the westward ray
    order = sorted(points, key=lambda c: (np.angle(c - base) + np.pi) % (2 * np.pi))
    radii = []
    for c in order:
        others = [abs(c - o) for o in points if o != c]
        radii.append(0.3 * min(others + [abs(c - base)]))
    locals_ = []
    concat = [base]
    for c, r in zip(order, radii):
        loop = loop_around(base, c, r)
        locals_.append(monodromy_permutation(poly, loop, points, settings))
        concat.extend(loop[1:])
    product = monodromy_permutation(poly, np.array(concat), points, settings)
    big = 2.0 * max(abs(points - base)) + 1.0
    west = base - big
    turn = base + big * np.exp(1j * (np.pi + 2 * np.pi * np.arange(65) / 64))
    infinity = monodromy_permutation(poly, np.concatenate([[base], [west], turn[1:], [base]]), points, settings)
    return {"local": locals_, "product": product, "infinity": infinity, "closed": product == infinity}


# ---- Punctures ----

@dataclass(frozen=True)
class PunctureExpansion:
    spec: PunctureSpec
    times: np.ndarray              # t_0..t_r
    conj_times: np.ndarray         # t~_1..t~_K
    conj_time_zero: complex
    radius: float
    circle_y: np.ndarray           # Y on the circle nodes zeta_n = R e^{2 pi i n / N}
    base_point: Tuple[complex, complex]

    @property
    def truncation(self) -> int:
        return len(self.conj_times)

    def g_local(self, zeta):
        """g_alpha(zeta) = -sum t_k/k zeta^-k + t_0 Log zeta + sum t~_k zeta^k (cut on zeta < 0)."""
        zeta = np.asarray(zeta, dtype=complex)
        out = self.times[0] * np.log(zeta)
        for k in range(1, len(self.times)):
            out = out - self.times[k] / k * zeta ** (-k)
        for k, tk in enumerate(self.conj_times, start=1):
            out = out + tk * zeta ** k
        return out

    def laurent_ydx(self, zeta):
        """Y dX / d zeta from the truncated Laurent series."""
        zeta = np.asarray(zeta, dtype=complex)
        out = np.zeros_like(zeta)
        for k, tk in enumerate(self.times):
            out = out + tk * zeta ** (-k - 1)
        for k, tk in enumerate(self.conj_times, start=1):
            out = out + k * tk * zeta ** (k - 1)
        return out


def chart_x(spec: PunctureSpec, zeta):
    origin = 0 if spec.at_infinity else spec.base_x
    return origin + np.asarray(zeta, dtype=complex) ** (-spec.a_order)


def chart_dx(spec: PunctureSpec, zeta):
    return -spec.a_order * np.asarray(zeta, dtype=complex) ** (-spec.a_order - 1)


def default_radius(spec: PunctureSpec, special: np.ndarray) -> float:
    """R such that the puncture disc keeps well away from every special x."""
    if spec.at_infinity:
        reach = float(np.max(np.abs(special))) if len(special) else 0.0
        return float((2.5 * max(reach, 1.0)) ** (-1.0 / spec.a_order))
    others = [abs(s - spec.base_x) for s in special if abs(s - spec.base_x) > 1e-9]
    dist = min(others) if others else 1.0
    return float((0.4 * dist) ** (1.0 / abs(spec.a_order)))


def _check_radius(spec, radius, special):
    if spec.at_infinity:
        edge = radius ** (-spec.a_order)
        inside = [s for s in special if abs(s) >= 0.9 * edge]
    else:
        edge = radius ** abs(spec.a_order)
        inside = [s for s in special if 1e-9 < abs(s - spec.base_x) <= 1.1 * edge]
    if inside:
        raise RadiusTooLarge("puncture disc contains a special point", radius=radius, points=inside)


def sample_puncture_circle(poly, spec, radius, n, special, settings=None, thetas=None) -> np.ndarray:
    """Y along zeta = R e^{i theta}, starting on the Puiseux branch fixed by the leading coefficient."""
    full_turn = thetas is None
    if full_turn:
        thetas = 2 * np.pi * np.arange(n) / n
    thetas = np.concatenate([[0.0], np.asarray(thetas, dtype=float)])
    zeta = radius * np.exp(1j * thetas)
    xs = chart_x(spec, zeta)
    start = fiber(poly, xs[0]).roots
    guess = spec.leading_coeff * zeta[0] ** (-spec.b_order)
    y0 = start[np.argmin(np.abs(start - guess))]
    if full_turn:
        xs = np.concatenate([xs, xs[:1]])
    ys = continue_sheet(poly, xs, y0, settings=settings, avoid=special)[1:]
    if full_turn:
        if abs(ys[-1] - ys[0]) > 1e-6 * max(1.0, abs(ys[0])):
            raise BranchMismatch("puncture circle does not close on its sheet", puncture=spec.label())
        return ys[:-1]
    return ys


def puncture_expansion(poly: BivariatePolynomial, spec: PunctureSpec, truncation: Optional[int] = None,
                       radius: Optional[float] = None, settings: Optional[dict] = None,
                       crit: Optional[CriticalSet] = None) -> PunctureExpansion:
    """
    Times and conjugate times of one puncture by trapezoid quadrature on |zeta| = R

    Args:
        poly (BivariatePolynomial): Curve
        spec (PunctureSpec): Puncture
        truncation (int, optional): K; default r + truncation_extra, raised while terms matter
        radius (float, optional): R in the canonical coordinate
        settings (dict, optional): Active settings
        crit (CriticalSet, optional): precomputed critical set

    Returns:
        PunctureExpansion
    """
    cfg = _cfg(settings)
    crit = crit or critical_set(poly, cfg)
    special = crit.special_xs()
    if radius is None:
        radius = default_radius(spec, special)
    _check_radius(spec, radius, special)
    r = spec.r_order

    def coefficients(n):
        ys = sample_puncture_circle(poly, spec, radius, n, special, cfg)
        zeta = radius * np.exp(2j * np.pi * np.arange(n) / n)
        f = zeta * ys * chart_dx(spec, zeta)
        spectrum = np.fft.fft(f) / n
        kmax = n // 4
        ks = np.arange(kmax + 1)
        t_all = spectrum[(-ks) % n] * radius ** ks
        conj_all = spectrum[ks[1:]] * radius ** (-ks[1:].astype(float)) / ks[1:]
        return t_all, conj_all, ys

    n = cfg["residue_nodes"]
    t_prev, c_prev, _ = coefficients(n)
    for _ in range(cfg["max_residue_doublings"]):
        n *= 2
        t_all, conj_all, ys = coefficients(n)
        k_cmp = min(len(c_prev), r + cfg["truncation_extra"])
        scale = max(1.0, float(np.max(np.abs(t_all[: r + 1]))))
        if (np.max(np.abs(t_all[: r + 1] - t_prev[: r + 1])) <= cfg["residue_agreement"] * scale
                and np.max(np.abs(conj_all[:k_cmp] - c_prev[:k_cmp])) <= cfg["residue_agreement"] * scale):
            break
        t_prev, c_prev = t_all, conj_all
    else:
        raise QuadratureNonConvergent("puncture residues did not stabilize", puncture=spec.label())

    times = t_all[: r + 1] if spec.has_pole else np.zeros(1, dtype=complex)
    if spec.has_pole:
        expected = spec.predicted_top_time
        if abs(times[r] - expected) > 1e-6 * max(1.0, abs(expected)):
            raise BranchMismatch("leading time disagrees with the Puiseux coefficient",
                                 puncture=spec.label(), computed=times[r], expected=expected)
    if truncation is None:
        truncation = r + cfg["truncation_extra"]
        mags = np.abs(conj_all) * radius ** np.arange(1, len(conj_all) + 1)
        floor = 1e-14 * max(1.0, float(np.max(mags)))
        while truncation < len(conj_all) and np.max(mags[truncation:]) > floor:
            truncation += 1
    conj = conj_all[:truncation]

    base = base_point(poly, crit, cfg["basepoint_seed"])
    p_x = chart_x(spec, radius)
    g_p = integrate_between(poly, base, (complex(p_x), complex(ys[0])), crit, cfg)
    partial = PunctureExpansion(spec, times, conj, 0j, float(radius), ys, base)
    t0_conj = complex(g_p - partial.g_local(radius))
    logger.debug("puncture %s: times %s", spec.label(), np.round(times, 10))
    return PunctureExpansion(spec, times, conj, t0_conj, float(radius), ys, base)


def all_expansions(poly: BivariatePolynomial, settings: Optional[dict] = None, crit: Optional[CriticalSet] = None,
                   radii: Optional[dict] = None) -> List[PunctureExpansion]:
    cfg = _cfg(settings)
    crit = crit or critical_set(poly, cfg)
    out = []
    for k, spec in enumerate(enumerate_punctures(poly, cfg)):
        radius = (radii or {}).get(k)
        out.append(puncture_expansion(poly, spec, radius=radius, settings=cfg, crit=crit))
    return out


# ---- Base point and abelian integrals ----

def base_point(poly: BivariatePolynomial, crit: CriticalSet, seed: int) -> Tuple[complex, complex]:
    """Seeded generic point o on the first sorted sheet."""
    special = crit.special_xs()
    rng = np.random.default_rng(seed)
    center = complex(np.mean(special)) if len(special) else 0j
    spread = max(1.0, float(np.max(np.abs(special - center)))) if len(special) else 1.0
    for _ in range(200):
        x = center + spread * complex(rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7))
        if _distance_to_points(x, special) > 0.15 * spread:
            break
    roots = fiber(poly, x).roots
    return complex(x), complex(roots[0])


def integrate_between(poly: BivariatePolynomial, start: Tuple[complex, complex], end: Tuple[complex, complex],
                      crit: CriticalSet, settings: Optional[dict] = None, max_loops: int = 2) -> complex:
    """
    Integral of Y dX from a point of the curve to another, along a straight path
    preceded by loops around special points until the path lands on the target sheet
    """
    cfg = _cfg(settings)
    special = crit.special_xs()
    x0, y0 = start
    x1, y1 = end
    tol = 1e-6 * max(1.0, abs(y1))
    radii = {}
    for c in special:
        others = [abs(c - o) for o in special if o != c]
        radii[c] = 0.3 * min(others + [abs(c - x0)])
    rng = np.random.default_rng(cfg["basepoint_seed"] + 1)
    for depth in range(max_loops + 1):
        for combo in itertools.product(list(special), repeat=depth):
            prefix = [x0]
            for c in combo:
                prefix.extend(loop_around(x0, c, radii[c])[1:])
            for attempt in range(4):
                path = list(prefix)
                if attempt:
                    path.append(x0 + (x1 - x0) / 2 + abs(x1 - x0) * complex(rng.normal(), rng.normal()) * 0.3)
                path.append(x1)
                try:
                    total, y_end = path_integral(poly, np.array(path), y0, avoid=special, settings=cfg)
                except PathThroughBranchPoint:
                    continue
                if abs(y_end - y1) <= tol:
                    return complex(total[0])
                break
    raise BranchMismatch("no path from the base point reaches the target sheet", target_x=x1, target_y=y1)
