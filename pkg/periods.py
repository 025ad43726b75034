"""
Homology and periods of hyperelliptic curves A(x) y^2 + B(x) y + C(x) = 0.
Cycles are tube contours around consecutive branch points (a chain); an integer
symplectic reduction of their intersection form gives the A/B marking.
Periods eta = (1/2 pi i) * loop integral of Y dX, epsilon = Re, zeta = Im.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.linalg import null_space
from scipy.optimize import linear_sum_assignment

from curve import continue_sheet, fiber, path_integral
from errors import (
    ImTauNotPositive,
    MarkingJump,
    NotHyperelliptic,
    SingularNormalization,
    UnpairableBranchPoints,
)
from polygon import BivariatePolynomial, cluster_roots, leading_zeros
from settings import DEFAULT_SETTINGS

logger = logging.getLogger(__name__)

TWO_PI_I = 2j * np.pi

# radius factors alternate so caps around a shared branch point never coincide
_CAP_FACTORS = (1.0, 0.6)
_BULGES = (0.0, 0.3, -0.3, 0.6, -0.6)


def _cfg(settings):
    return settings if settings is not None else DEFAULT_SETTINGS


# ---- Model ----

@dataclass(frozen=True)
class HyperellipticModel:
    leading: np.ndarray          # A(x), y^2 coefficient
    discriminant: np.ndarray     # U = B^2 - 4 A C
    branch_points: Tuple[complex, ...]
    branch_at_infinity: bool
    nodes: Tuple[complex, ...]
    cut_pairing: Tuple[Tuple[int, int], ...]   # indices into branch_points, -1 = infinity
    genus: int
    chain_order: Tuple[int, ...] = field(default=())


def _column(poly: BivariatePolynomial, j: int) -> np.ndarray:
    if j >= poly.matrix.shape[1]:
        return np.zeros(1, dtype=complex)
    return npoly.polytrim(poly.matrix[:, j])


def _greedy_pairing(points: Sequence[complex], at_infinity: bool) -> List[Tuple[int, int]]:
    remaining = list(range(len(points)))
    pairs = []
    while len(remaining) > (1 if at_infinity else 0):
        best = min(
            ((a, b) for k, a in enumerate(remaining) for b in remaining[k + 1:]),
            key=lambda ab: (round(abs(points[ab[0]] - points[ab[1]]), 9), ab),
        )
        pairs.append(best)
        remaining = [k for k in remaining if k not in best]
    if at_infinity:
        pairs.append((remaining[0], -1))
    return pairs


def hyperelliptic_model(poly: BivariatePolynomial, settings: Optional[dict] = None,
                        pairing: Optional[Sequence[Tuple[int, int]]] = None) -> HyperellipticModel:
    """
    Branch points, nodes, genus and cut pairing of a degree-2 curve

    Args:
        poly (BivariatePolynomial): Curve with deg_y = 2
        settings (dict, optional): Active settings (merge tolerance)
        pairing (list, optional): user cut pairing as index pairs into the sorted branch points

    Returns:
        HyperellipticModel
    """
    cfg = _cfg(settings)
    if poly.degree_y != 2:
        raise NotHyperelliptic("curve is not of degree 2 in y", degree_y=poly.degree_y)
    a, b, c = _column(poly, 2), _column(poly, 1), _column(poly, 0)
    u = npoly.polysub(npoly.polymul(b, b), 4 * npoly.polymul(a, c))
    u = npoly.polytrim(u, 1e-14 * np.max(np.abs(u)))
    full_degree = len(u) - 1

    zeros = []
    rest = u
    for z, _ in leading_zeros(poly, cfg["root_cluster_tolerance"]):
        mult = 0
        scale = np.max(np.abs(rest)) * max(1.0, abs(z)) ** (len(rest) - 1)
        while len(rest) > 1 and abs(npoly.polyval(z, rest)) <= 1e-9 * scale:
            rest, _ = npoly.polydiv(rest, np.array([-z, 1.0]))
            mult += 1
        if mult:
            zeros.append((complex(z), mult, True))
    roots = npoly.polyroots(rest) if len(rest) > 1 else np.array([])
    if len(roots):
        deriv = npoly.polyder(rest)
        for _ in range(2):
            d = npoly.polyval(roots, deriv)
            roots = roots - np.where(np.abs(d) > 0, npoly.polyval(roots, rest) / np.where(d == 0, 1, d), 0)
    for value, mult in cluster_roots(roots, cfg["merge_tolerance"]):
        zeros.append((value, mult, False))

    branch = sorted((z for z, m, _ in zeros if m % 2 == 1), key=lambda z: (z.real, z.imag))
    nodes = tuple(sorted((z for z, m, on_a in zeros if m % 2 == 0 and not on_a), key=lambda z: (z.real, z.imag)))
    at_infinity = full_degree % 2 == 1
    count = len(branch) + int(at_infinity)
    if count % 2:
        raise UnpairableBranchPoints("odd number of branch points", count=count, branch_points=branch)
    genus = max(count // 2 - 1, 0)
    pairs = [tuple(p) for p in pairing] if pairing is not None else _greedy_pairing(branch, at_infinity)
    order = [k for p in pairs for k in p if k >= 0]
    logger.debug("hyperelliptic model: %d branch points, %d nodes, genus %d", len(branch), len(nodes), genus)
    return HyperellipticModel(
        leading=a,
        discriminant=u,
        branch_points=tuple(branch),
        branch_at_infinity=at_infinity,
        nodes=nodes,
        cut_pairing=tuple(pairs),
        genus=genus,
        chain_order=tuple(order),
    )


def special_points(poly: BivariatePolynomial, model: HyperellipticModel) -> np.ndarray:
    zeros = [z for z, _ in leading_zeros(poly)]
    return np.array(list(model.branch_points) + list(model.nodes) + zeros, dtype=complex)


# ---- Contours ----

@dataclass(frozen=True)
class Contour:
    points: np.ndarray
    sheet: int
    y_start: complex
    ends: Tuple[complex, complex]


def _core(a: complex, b: complex, bulge: float, n: int = 41):
    s = np.linspace(0.0, 1.0, n)
    delta = b - a
    core = a + delta * (s + 2j * bulge * s * (1 - s))
    tangent = delta * (1 + 2j * bulge * (1 - 2 * s))
    return core, tangent / np.abs(tangent)


def _distance(points: np.ndarray, targets: np.ndarray) -> float:
    if not len(targets):
        return np.inf
    return float(np.min(np.abs(points[:, None] - targets[None, :])))


def _tube(core, tangent, radius, cap_points: int = 12) -> np.ndarray:
    """Counter-clockwise loop: right offset forward, cap, left offset backward, cap."""
    theta = np.linspace(0.0, np.pi, cap_points + 1)[1:-1]
    right = core - 1j * radius * tangent
    left = (core + 1j * radius * tangent)[::-1]
    cap_end = core[-1] + radius * (-1j * tangent[-1]) * np.exp(1j * theta)
    cap_start = core[0] + radius * (1j * tangent[0]) * np.exp(1j * theta)
    return np.concatenate([right, cap_end, left, cap_start, right[:1]])


def chain_contours(poly: BivariatePolynomial, model: HyperellipticModel, settings: Optional[dict] = None,
                   inflation: Optional[float] = None) -> List[Contour]:
    """Tube contours around consecutive branch points of the chain order (first 2g of them)."""
    cfg = _cfg(settings)
    inflation = cfg["contour_inflation"] if inflation is None else inflation
    pts = [model.branch_points[k] for k in model.chain_order]
    special = special_points(poly, model)
    n_loops = 2 * model.genus
    cores = []
    for k in range(n_loops):
        a, b = pts[k], pts[k + 1]
        foreign = np.array([s for s in special if abs(s - a) > 1e-12 and abs(s - b) > 1e-12], dtype=complex)
        best = None
        for bulge in _BULGES:
            core, tangent = _core(a, b, bulge)
            clearance = _distance(core, foreign)
            if best is None or clearance > best[0] * 1.05:
                best = (clearance, core, tangent)
        cores.append(best)
    contours = []
    for k, (clearance, core, tangent) in enumerate(cores):
        others = [cores[j][1] for j in range(n_loops) if abs(j - k) >= 2]
        if others:
            clearance = min(clearance, _distance(core, np.concatenate(others)))
        if not np.isfinite(clearance):
            clearance = abs(pts[k + 1] - pts[k])
        radius = inflation * clearance * _CAP_FACTORS[k % 2]
        loop = _tube(core, tangent, radius)
        roots = fiber(poly, loop[0]).roots
        contours.append(Contour(points=loop, sheet=0, y_start=complex(roots[0]), ends=(pts[k], pts[k + 1])))
    return contours


def circle_loop(center: complex, radius: float, n: int = 64) -> np.ndarray:
    return center + radius * np.exp(2j * np.pi * np.arange(n + 1) / n)


# ---- Intersections and marking ----

def _sheet_values(poly, contour, special, settings):
    return continue_sheet(poly, contour.points, contour.y_start, settings=settings, avoid=special)


def polyline_crossings(p: np.ndarray, q: np.ndarray):
    """(i, t, j, u) for each proper crossing of polyline segments p[i]p[i+1] and q[j]q[j+1]."""
    r = np.diff(p)[:, None]
    s = np.diff(q)[None, :]
    qp = q[None, :-1] - p[:-1, None]
    denom = (np.conj(r) * s).imag
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (np.conj(qp) * s).imag / denom
        u = (np.conj(qp) * r).imag / denom
    hit = (denom != 0) & (t >= 0) & (t < 1) & (u >= 0) & (u < 1)
    out = []
    for i, j in zip(*np.nonzero(hit)):
        out.append((int(i), float(t[i, j]), int(j), float(u[i, j])))
    return out


def intersection_matrix(poly: BivariatePolynomial, contours: Sequence[Contour], special: np.ndarray,
                        settings: Optional[dict] = None) -> np.ndarray:
    """Algebraic intersection numbers of the lifted contours (sign from the x-plane tangents)."""
    n = len(contours)
    ys = [_sheet_values(poly, c, special, settings) for c in contours]
    coeffs = [_column(poly, j) for j in range(3)]
    m = np.zeros((n, n), dtype=int)
    for k in range(n):
        for l in range(k + 1, n):
            p, q = contours[k].points, contours[l].points
            total = 0
            for i, t, j, u in polyline_crossings(p, q):
                x = p[i] + t * (p[i + 1] - p[i])
                yk = ys[k][i] + t * (ys[k][i + 1] - ys[k][i])
                yl = ys[l][j] + u * (ys[l][j + 1] - ys[l][j])
                other = -npoly.polyval(x, coeffs[1]) / npoly.polyval(x, coeffs[2]) - yk
                if abs(yk - yl) < abs(other - yl):
                    total += int(np.sign((np.conj(p[i + 1] - p[i]) * (q[j + 1] - q[j])).imag))
            m[k, l], m[l, k] = total, -total
    return m


def symplectic_basis(form: np.ndarray) -> np.ndarray:
    """
    Integer change of basis C with C form C^t = [[0, I], [-I, 0]]

    Args:
        form (np.ndarray): unimodular antisymmetric integer matrix

    Returns:
        np.ndarray: rows A_1..A_g, B_1..B_g as integer combinations of the input basis
    """
    n = form.shape[0]
    omega = lambda v, w: int(v @ form @ w)
    remaining = [np.eye(n, dtype=int)[k] for k in range(n)]
    a_rows, b_rows = [], []
    while remaining:
        pair = None
        for i, v in enumerate(remaining):
            for j, w in enumerate(remaining):
                if i != j and abs(omega(v, w)) == 1:
                    pair = (i, j)
                    break
            if pair:
                break
        if pair is None:
            raise UnpairableBranchPoints("intersection form is not unimodular", form=form.tolist())
        u, v = remaining[pair[0]], remaining[pair[1]]
        if omega(u, v) == -1:
            v = -v
        a_rows.append(u)
        b_rows.append(v)
        rest = [w for k, w in enumerate(remaining) if k not in pair]
        remaining = [w - omega(w, v) * u + omega(w, u) * v for w in rest]
    return np.array(a_rows + b_rows, dtype=int)


# ---- Frame ----

@dataclass(frozen=True)
class PeriodFrame:
    model: HyperellipticModel
    contours: Tuple[Contour, ...]
    chain_intersection: np.ndarray
    combination: np.ndarray          # 2g x 2g integer rows: A then B loops in chain coordinates
    intersection: np.ndarray         # E = combination . chain . combination^t
    chain_periods: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    eta: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    eta_tilde: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    tau: Optional[np.ndarray] = None

    @property
    def genus(self) -> int:
        return self.model.genus

    @property
    def all_periods(self) -> np.ndarray:
        return np.concatenate([self.eta, self.eta_tilde])

    @property
    def epsilon(self) -> np.ndarray:
        return self.all_periods.real

    @property
    def zeta(self) -> np.ndarray:
        return self.all_periods.imag

    def to_dict(self) -> dict:
        return {
            "genus": self.genus,
            "branch_points": list(self.model.branch_points),
            "branch_at_infinity": self.model.branch_at_infinity,
            "nodes": list(self.model.nodes),
            "cut_pairing": [list(p) for p in self.model.cut_pairing],
            "contours": [{"points": c.points, "sheet": c.sheet, "y_start": c.y_start} for c in self.contours],
            "combination": self.combination.tolist(),
            "intersection": self.intersection.tolist(),
            "eta": self.eta,
            "eta_tilde": self.eta_tilde,
            "epsilon": self.epsilon,
            "zeta": self.zeta,
            "tau": self.tau if self.tau is not None else [],
        }


def _frame_from_contours(poly, model, contours, settings):
    g = model.genus
    if g == 0:
        empty = np.zeros((0, 0), dtype=int)
        return PeriodFrame(model, (), empty, empty, empty)
    special = special_points(poly, model)
    chain = intersection_matrix(poly, contours, special, settings)
    comb = symplectic_basis(chain)
    e = comb @ chain @ comb.T
    return PeriodFrame(model, tuple(contours), chain, comb, e)


def build_hyperelliptic_frame(poly: BivariatePolynomial, settings: Optional[dict] = None,
                              pairing=None, inflation: Optional[float] = None) -> PeriodFrame:
    """
    Marking of a hyperelliptic curve

    Args:
        poly (BivariatePolynomial): Curve with deg_y = 2
        settings (dict, optional): Active settings
        pairing (list, optional): user cut pairing
        inflation (float, optional): tube radius relative to clearance

    Returns:
        PeriodFrame: contours, intersection form E (standard symplectic) and the A/B combination
    """
    model = hyperelliptic_model(poly, settings, pairing)
    contours = chain_contours(poly, model, settings, inflation)
    frame = _frame_from_contours(poly, model, contours, settings)
    logger.info("frame: genus %d, %d contours", frame.genus, len(frame.contours))
    return frame


def reanchor_frame(poly: BivariatePolynomial, old: PeriodFrame, settings: Optional[dict] = None) -> PeriodFrame:
    """
    Carry a marking over to a nearby curve

    Old contours are kept when every matched branch point keeps its winding number
    with respect to every contour; otherwise contours are rebuilt along the matched
    chain order and the intersection form must stay the same.
    """
    cfg = _cfg(settings)
    model = hyperelliptic_model(poly, cfg)
    if model.genus != old.genus or old.genus == 0:
        return build_hyperelliptic_frame(poly, cfg)
    old_pts = np.array(old.model.branch_points)
    new_pts = np.array(model.branch_points)
    rows, cols = linear_sum_assignment(np.abs(old_pts[:, None] - new_pts[None, :]))
    match = dict(zip(rows.tolist(), cols.tolist()))
    pairs = tuple((match[a], match[b] if b >= 0 else -1) for a, b in old.model.cut_pairing)
    model = replace(model, cut_pairing=pairs, chain_order=tuple(match[k] for k in old.model.chain_order))

    moved = new_pts[[match[k] for k in range(len(old_pts))]]
    special_new = special_points(poly, model)
    special_old = special_points(poly, old.model) if len(old.model.branch_points) else special_new
    keep = all(
        np.array_equal(winding_numbers(c.points, old_pts), winding_numbers(c.points, moved))
        and _distance(c.points, special_new) > 0.2 * _distance(c.points, special_old)
        for c in old.contours
    )
    if keep:
        contours = []
        for c in old.contours:
            roots = fiber(poly, c.points[0]).roots
            contours.append(replace(c, y_start=complex(roots[np.argmin(np.abs(roots - c.y_start))])))
        return replace(old, model=model, contours=tuple(contours), chain_periods=np.zeros(0, dtype=complex),
                       eta=np.zeros(0, dtype=complex), eta_tilde=np.zeros(0, dtype=complex), tau=None)

    logger.info("re-anchoring rebuilds the contours")
    frame = _frame_from_contours(poly, model, chain_contours(poly, model, cfg), cfg)
    if not np.array_equal(frame.chain_intersection, old.chain_intersection):
        raise MarkingJump("intersection form changed while re-anchoring the marking",
                          old=old.chain_intersection.tolist(), new=frame.chain_intersection.tolist())
    return replace(frame, combination=old.combination, intersection=old.intersection)


def winding_numbers(loop: np.ndarray, points: np.ndarray) -> np.ndarray:
    if not len(points):
        return np.zeros(0, dtype=int)
    angles = np.angle((loop[1:, None] - points[None, :]) / (loop[:-1, None] - points[None, :]))
    return np.rint(np.sum(angles, axis=0) / (2 * np.pi)).astype(int)


# ---- Integrals ----

def _chain_integrals(poly: BivariatePolynomial, frame: PeriodFrame, integrands, settings) -> np.ndarray:
    """(1/2 pi i) * loop integral of f dx for every chain contour and integrand; shape (loops, integrands)."""
    special = special_points(poly, frame.model)
    out = np.zeros((len(frame.contours), len(integrands)), dtype=complex)
    for k, c in enumerate(frame.contours):
        totals, y_end = path_integral(poly, c.points, c.y_start, integrands, avoid=special, settings=settings)
        if abs(y_end - c.y_start) > 1e-6 * max(1.0, abs(c.y_start)):
            raise MarkingJump("contour does not close on its starting sheet", contour=k)
        out[k] = totals / TWO_PI_I
    return out


def loop_integral(poly: BivariatePolynomial, loop, y_start: complex, avoid=None,
                  settings: Optional[dict] = None) -> complex:
    """(1/2 pi i) * integral of Y dX along an arbitrary closed x-loop."""
    totals, _ = path_integral(poly, np.asarray(loop), y_start, avoid=avoid, settings=settings)
    return complex(totals[0] / TWO_PI_I)


def _with_periods(frame: PeriodFrame, chain: np.ndarray) -> PeriodFrame:
    g = frame.genus
    combined = frame.combination @ chain
    return replace(frame, chain_periods=chain, eta=combined[:g], eta_tilde=combined[g:])


def periods(poly: BivariatePolynomial, frame: PeriodFrame, settings: Optional[dict] = None) -> PeriodFrame:
    """Frame with eta, eta_tilde (and hence epsilon, zeta) filled in."""
    if frame.genus == 0:
        return frame
    chain = _chain_integrals(poly, frame, [lambda x, y: y], _cfg(settings))[:, 0]
    return _with_periods(frame, chain)


def form_integrand(poly: BivariatePolynomial, form: BivariatePolynomial):
    dy = poly.dy
    return lambda x, y: form(x, y) / dy(x, y)


def holomorphic_forms(poly: BivariatePolynomial, frame: PeriodFrame, basis: Sequence[BivariatePolynomial]):
    """Combinations of the basis numerators vanishing at every node; returns a coefficient matrix (len(basis), m)."""
    if not basis:
        return np.zeros((0, 0), dtype=complex)
    rows = []
    for xn in frame.model.nodes:
        roots = fiber(poly, xn).roots
        yn = complex(np.mean(roots))
        rows.append([complex(b(xn, yn)) for b in basis])
    if not rows:
        return np.eye(len(basis), dtype=complex)
    return null_space(np.array(rows), rcond=1e-9)


def riemann_matrix(poly: BivariatePolynomial, frame: PeriodFrame, basis: Sequence[BivariatePolynomial],
                   settings: Optional[dict] = None, form_periods: Optional[np.ndarray] = None) -> np.ndarray:
    """
    tau from the A- and B-periods of the normalized holomorphic forms

    Args:
        poly (BivariatePolynomial): Curve
        frame (PeriodFrame): Marking
        basis (list): moduli basis numerators B_k (forms B_k dx / P_y)
        settings (dict, optional): Active settings
        form_periods (np.ndarray, optional): precomputed (2g, len(basis)) periods of the forms

    Returns:
        np.ndarray: symmetric g x g matrix with positive definite imaginary part
    """
    cfg = _cfg(settings)
    g = frame.genus
    if g == 0:
        return np.zeros((0, 0), dtype=complex)
    if form_periods is None:
        chain = _chain_integrals(poly, frame, [form_integrand(poly, b) for b in basis], cfg)
        form_periods = frame.combination @ chain
    restrict = holomorphic_forms(poly, frame, basis)
    restricted = form_periods @ restrict
    if restricted.shape[1] < g:
        raise SingularNormalization("fewer holomorphic forms than the genus", forms=restricted.shape[1], genus=g)
    k_hat = restricted[:g]
    if restricted.shape[1] == g:
        cond = np.linalg.cond(k_hat)
        if cond > cfg["normalization_condition"]:
            raise SingularNormalization("A-period matrix of the forms is singular", condition=cond)
        k = np.linalg.inv(k_hat)
    else:
        logger.warning("more candidate forms (%d) than genus %d; using a least-squares normalization",
                       restricted.shape[1], g)
        k = np.linalg.pinv(k_hat)
    tau = restricted[g:] @ k
    asym = np.max(np.abs(tau - tau.T))
    if asym > 1e-6 * max(1.0, np.max(np.abs(tau))):
        logger.warning("Riemann matrix asymmetric by %.2e", asym)
    try:
        np.linalg.cholesky((tau.imag + tau.imag.T) / 2)
    except np.linalg.LinAlgError as exc:
        raise ImTauNotPositive("imaginary part of tau is not positive definite", tau=tau) from exc
    return (tau + tau.T) / 2


def period_jacobian(poly: BivariatePolynomial, frame: PeriodFrame, basis: Sequence[BivariatePolynomial],
                    settings: Optional[dict] = None) -> np.ndarray:
    """d eta_l / d q_k = -(1/2 pi i) * loop integral of B_k / P_y dx for all 2g loops; shape (2g, len(basis))."""
    if frame.genus == 0 or not basis:
        return np.zeros((2 * frame.genus, len(basis)), dtype=complex)
    chain = _chain_integrals(poly, frame, [form_integrand(poly, b) for b in basis], _cfg(settings))
    return -(frame.combination @ chain)


def evaluate_frame(poly: BivariatePolynomial, frame: PeriodFrame, basis: Sequence[BivariatePolynomial],
                   settings: Optional[dict] = None, with_tau: bool = True):
    """
    Periods, Jacobian and tau in one pass over the contours

    Returns:
        tuple: (frame with periods and tau, jacobian (2g, len(basis)))
    """
    cfg = _cfg(settings)
    g = frame.genus
    if g == 0:
        return frame, np.zeros((0, len(basis)), dtype=complex)
    integrands = [lambda x, y: y] + [form_integrand(poly, b) for b in basis]
    chain = _chain_integrals(poly, frame, integrands, cfg)
    frame = _with_periods(frame, chain[:, 0])
    form_periods = frame.combination @ chain[:, 1:]
    tau = riemann_matrix(poly, frame, basis, cfg, form_periods=form_periods) if with_tau and basis else None
    return replace(frame, tau=tau), -form_periods
