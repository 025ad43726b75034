"""
Energy of a curve in two forms:
- regularized area: (1/4)[(1/pi) area of Sigma outside the puncture discs + Laurent corrections]
- prepotential form: F_check = -Re F_hat + pi zeta^t E^-1 epsilon
plus the gradient and Hessian of F_check in period coordinates epsilon.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from curve import CriticalSet, PunctureExpansion, all_expansions, chart_dx, critical_set, fiber_roots_batch
from errors import DiscsOverlap, ImTauNotPositive, QuadratureNonConvergent
from periods import PeriodFrame, build_hyperelliptic_frame, evaluate_frame
from polygon import BivariatePolynomial, analyze
from settings import DEFAULT_SETTINGS

logger = logging.getLogger(__name__)


def _cfg(settings):
    return settings if settings is not None else DEFAULT_SETTINGS


@dataclass(frozen=True)
class EnergyReport:
    F_check: Optional[float]
    F_hat: complex
    F0: Optional[complex]
    F_area: Optional[float] = None
    gradient: np.ndarray = field(default_factory=lambda: np.zeros(0))
    hessian: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    radii: Dict[str, float] = field(default_factory=dict)
    genus: int = 0

    @property
    def difference(self) -> Optional[float]:
        if self.F_area is None or self.F_check is None:
            return None
        return self.F_area - self.F_check

    def to_dict(self) -> dict:
        return {
            "F_area": self.F_area,
            "F_check": self.F_check,
            "F_hat": self.F_hat,
            "F0": self.F0,
            "difference": self.difference,
            "gradient": self.gradient,
            "hessian": self.hessian,
            "radii": self.radii,
            "genus": self.genus,
        }


# ---- Laurent corrections ----

def circle_integral_closed_form(expansion: PunctureExpansion, g_at_p: Optional[complex] = None) -> complex:
    """
    (1/2 pi i) * counter-clockwise integral of conj(g_alpha) Y dX over |zeta| = R, arg zeta in ]-pi, pi]

    Args:
        expansion (PunctureExpansion): Laurent data of the puncture
        g_at_p (complex, optional): g_alpha at the circle's starting point zeta = R e^{i pi}; default from the series

    Returns:
        complex
    """
    R = expansion.radius
    t = expansion.times
    k_t = np.arange(1, len(t))
    k_c = np.arange(1, len(expansion.conj_times) + 1)
    t0 = t[0]
    if g_at_p is None:
        g_at_p = complex(expansion.g_local(-R + 0j))
    value = -np.sum(np.abs(t[1:]) ** 2 * R ** (-2.0 * k_t) / k_t)
    value += np.sum(k_c * np.abs(expansion.conj_times) ** 2 * R ** (2.0 * k_c))
    value += 2 * t0 * t0 * np.log(R) - t0 * g_at_p + 1j * np.pi * t0 * t0
    return complex(value)


def circle_integral_quadrature(expansion: PunctureExpansion) -> complex:
    """Trapezoid rule on the sampled circle values; spectrally accurate when t_0 = 0."""
    ys = expansion.circle_y
    n = len(ys)
    R = expansion.radius
    zeta = R * np.exp(2j * np.pi * np.arange(n) / n)
    ydx = ys * chart_dx(expansion.spec, zeta) * 1j * zeta  # per d theta
    theta = np.angle(zeta)
    # the log jumps by 2 pi i at zeta = -R; the trapezoid node there takes the mean of both sides
    theta = np.where(np.isclose(np.abs(theta), np.pi), 0.0, theta)
    g = np.array(expansion.g_local(zeta)) - expansion.times[0] * np.log(zeta)
    g = g + expansion.times[0] * (np.log(R) + 1j * theta)
    return complex(np.sum(np.conj(g) * ydx) * (2 * np.pi / n) / (2j * np.pi))


def laurent_corrections(expansions: Sequence[PunctureExpansion]) -> float:
    """Correction terms of 4F that only involve times, conjugate times and radii."""
    total = 0.0
    for exp in expansions:
        R = exp.radius
        t = exp.times
        k_t = np.arange(1, len(t))
        k_c = np.arange(1, len(exp.conj_times) + 1)
        total -= float(np.sum(np.abs(t[1:]) ** 2 * R ** (-2.0 * k_t) / k_t))
        total += 2 * abs(t[0]) ** 2 * np.log(R)
        total += float(np.sum(k_c * np.abs(exp.conj_times) ** 2 * R ** (2.0 * k_c)))
        m = min(len(t) - 1, len(exp.conj_times))
        total -= 2 * float(np.real(np.sum(t[1:m + 1] * exp.conj_times[:m])))
    return total


# ---- Surface integral ----

def _smooth_step(s):
    """1 for s <= 1/2, 0 for s >= 1, C-infinity in between."""
    u = np.clip((np.asarray(s, dtype=float) - 0.5) / 0.5, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return b / (a + b)


@dataclass(frozen=True)
class _Patch:
    center: complex
    inner: float      # removed disc radius (0 around critical points)
    width: float
    power: int = 1    # radial substitution r = inner + width s^power


def sheet_density(poly: BivariatePolynomial, xs) -> np.ndarray:
    """Sum over sheets of |Y|^2 at each x."""
    xs = np.asarray(xs, dtype=complex)
    roots = fiber_roots_batch(poly, xs.ravel())
    return np.sum(np.abs(roots) ** 2, axis=1).reshape(xs.shape)


def _disc_layout(expansions: Sequence[PunctureExpansion], crit: CriticalSet):
    rho_inf = None
    holes: Dict[complex, float] = {}
    for exp in expansions:
        spec = exp.spec
        if spec.at_infinity:
            rho = exp.radius ** (-spec.a_order)
            if rho_inf is not None and abs(rho - rho_inf) > 1e-9 * rho_inf:
                raise DiscsOverlap("punctures over infinity need one common x-radius", radii=[rho, rho_inf])
            rho_inf = rho
        else:
            rho = exp.radius ** abs(spec.a_order)
            key = next((h for h in holes if abs(h - spec.base_x) < 1e-9), spec.base_x)
            if key in holes and abs(holes[key] - rho) > 1e-9 * rho:
                raise DiscsOverlap("punctures over one x need one common x-radius", x=key)
            holes[key] = rho
    if rho_inf is None:
        raise QuadratureNonConvergent("the area needs a puncture over infinity to bound the domain")
    crit_xs = np.array([p.x for p in crit.points], dtype=complex)
    for x0, rho in holes.items():
        if abs(x0) + rho >= rho_inf:
            raise DiscsOverlap("puncture disc reaches the disc at infinity", x=x0)
        if len(crit_xs) and np.min(np.abs(crit_xs - x0)) <= rho:
            raise DiscsOverlap("puncture disc contains a critical point", x=x0)
        for y0, other in holes.items():
            if y0 != x0 and abs(x0 - y0) <= rho + other:
                raise DiscsOverlap("puncture discs overlap", x=[x0, y0])
    if len(crit_xs) and np.max(np.abs(crit_xs)) >= rho_inf:
        raise DiscsOverlap("critical point inside the disc at infinity")
    return rho_inf, holes


def _patches(crit: CriticalSet, rho_inf: float, holes: Dict[complex, float]):
    # one patch per distinct critical x
    crit_pts: Dict[complex, int] = {}
    for p in crit.points:
        key = next((c for c in crit_pts if abs(c - p.x) < 1e-9), complex(p.x))
        crit_pts[key] = max(crit_pts.get(key, 2), p.ramification)
    hole_patches = []
    for x0, rho in holes.items():
        gaps = [0.5 * rho, 0.9 * (rho_inf - abs(x0) - rho)]
        gaps += [0.45 * (abs(x0 - y0) - rho - r2) for y0, r2 in holes.items() if y0 != x0]
        gaps += [0.45 * (abs(c - x0) - rho) for c in crit_pts]
        hole_patches.append(_Patch(complex(x0), rho, min(gaps)))
    crit_patches = []
    for c, power in crit_pts.items():
        gaps = [0.9 * (rho_inf - abs(c))]
        gaps += [0.45 * abs(c - q) for q in crit_pts if q != c]
        gaps += [0.9 * (abs(c - h.center) - h.inner - h.width) for h in hole_patches]
        crit_patches.append(_Patch(c, 0.0, min(gaps), power=power))
    reach = [abs(h.center) + h.inner + h.width for h in hole_patches]
    reach += [abs(c.center) + c.width for c in crit_patches]
    outer = 0.5 * (rho_inf - max(reach + [0.0]))
    if outer <= 0:
        raise DiscsOverlap("no room between the patches and the disc at infinity")
    return crit_patches + hole_patches, outer


def _polar_integral(func, patch: _Patch, cfg) -> float:
    """Integral of func over inner <= |x - center| <= inner + width (func includes the weight)."""
    n_r, n_t = cfg["area_radial_nodes"], cfg["area_angular_nodes"]
    prev = None
    for _ in range(cfg["max_area_doublings"] + 1):
        s, w = leggauss(n_r)
        s, w = (s + 1) / 2, w / 2
        r = patch.inner + patch.width * s ** patch.power
        dr = patch.width * patch.power * s ** (patch.power - 1) * w
        theta = 2 * np.pi * np.arange(n_t) / n_t
        xs = patch.center + r[:, None] * np.exp(1j * theta)[None, :]
        vals = func(xs)
        value = float(np.sum(dr * r * np.sum(vals, axis=1)) * 2 * np.pi / n_t)
        if prev is not None and abs(value - prev) <= cfg["area_tolerance"] * max(abs(value), 1e-300):
            return value
        prev = value
        n_r, n_t = 2 * n_r, 2 * n_t
    raise QuadratureNonConvergent("polar patch quadrature did not converge", center=patch.center)


def _adaptive_square(func, half: float, cfg, max_cells: int = 400000) -> float:
    """Adaptive quadtree with 8x8 Gauss cells on [-half, half]^2."""
    g, w = leggauss(8)
    ww = np.outer(w, w).ravel()
    gx = np.repeat(g, 8)
    gy = np.tile(g, 8)

    def cell_values(cx, cy, h):
        xs = (cx[:, None] + h[:, None] * gx[None, :]) + 1j * (cy[:, None] + h[:, None] * gy[None, :])
        return np.sum(func(xs) * ww[None, :], axis=1) * h * h

    def split(cx, cy, h):
        q = h / 2
        offsets = [(-q, -q), (q, -q), (-q, q), (q, q)]
        return (np.concatenate([cx + a for a, _ in offsets]),
                np.concatenate([cy + b for _, b in offsets]),
                np.concatenate([q] * 4))

    # start from a 4x4 grid so that small features near the origin are seen
    base = np.linspace(-half, half, 9)[1::2]
    cx, cy = np.meshgrid(base, base)
    cx, cy = cx.ravel(), cy.ravel()
    h = np.full(cx.shape, half / 4)
    coarse = cell_values(cx, cy, h)
    estimate = max(abs(float(np.sum(coarse))), 1e-300)
    area = (2 * half) ** 2
    total = 0.0
    cells = 0
    while len(cx):
        kx, ky, kh = split(cx, cy, h)
        fine = cell_values(kx, ky, kh).reshape(4, -1)
        refined = np.sum(fine, axis=0)
        estimate = max(estimate, abs(total + float(np.sum(refined))))
        tol = cfg["area_tolerance"] * estimate * (4 * h * h) / area
        ok = np.abs(refined - coarse) <= np.maximum(tol, 1e-15 * estimate * (4 * h * h) / area)
        total += float(np.sum(refined[ok]))
        keep = np.tile(~ok, 4)
        cx, cy, h, coarse = kx[keep], ky[keep], kh[keep], fine.ravel()[keep]
        cells += len(cx)
        if cells > max_cells:
            raise QuadratureNonConvergent("adaptive area quadrature exceeded its cell budget", cells=cells)
    return total


def surface_integral(poly: BivariatePolynomial, expansions: Sequence[PunctureExpansion],
                     settings: Optional[dict] = None, crit: Optional[CriticalSet] = None) -> float:
    """
    (1/pi) * sum over sheets of the area integral of |Y|^2 outside the puncture discs

    Critical points and puncture holes get polar patches with a smooth partition of
    unity; the smooth remainder goes to an adaptive quadtree.
    """
    cfg = _cfg(settings)
    crit = crit or critical_set(poly, cfg)
    rho_inf, holes = _disc_layout(expansions, crit)
    patches, outer = _patches(crit, rho_inf, holes)

    def patch_weight(patch, xs):
        return _smooth_step((np.abs(xs - patch.center) - patch.inner) / patch.width)

    def outer_weight(xs):
        return _smooth_step((rho_inf - np.abs(xs)) / outer)

    def density_where(weight, xs):
        out = np.zeros(xs.shape)
        mask = weight > 0
        if np.any(mask):
            out[mask] = weight[mask] * sheet_density(poly, xs[mask])
        return out

    total = 0.0
    for patch in patches:
        total += _polar_integral(lambda xs, p=patch: density_where(patch_weight(p, xs), xs), patch, cfg)
    band = _Patch(0j, rho_inf - outer, outer)
    total += _polar_integral(lambda xs: density_where(outer_weight(xs), xs), band, cfg)

    def remainder(xs):
        weight = 1.0 - outer_weight(xs)
        for patch in patches:
            weight = weight - patch_weight(patch, xs)
        return density_where(np.clip(weight, 0.0, 1.0), xs)

    total += _adaptive_square(remainder, rho_inf, cfg)
    logger.debug("surface integral %.12g over %d patches", total / np.pi, len(patches))
    return total / np.pi


def regularized_area(poly: BivariatePolynomial, expansions: Sequence[PunctureExpansion],
                     settings: Optional[dict] = None, crit: Optional[CriticalSet] = None) -> float:
    """
    Energy as the regularized area of the curve

    Args:
        poly (BivariatePolynomial): Curve
        expansions (list): PunctureExpansion of every puncture (their radii set the discs)
        settings (dict, optional): Active settings
        crit (CriticalSet, optional): precomputed critical set

    Returns:
        float: F
    """
    surface = surface_integral(poly, expansions, settings, crit)
    return (surface + laurent_corrections(expansions)) / 4


# ---- Prepotential ----

def f_hat(expansions: Sequence[PunctureExpansion]) -> complex:
    total = 0j
    for exp in expansions:
        t = exp.times
        m = min(len(t) - 1, len(exp.conj_times))
        total += np.sum(t[1:m + 1] * exp.conj_times[:m]) + t[0] * exp.conj_time_zero
    return complex(total / 2)


def prepotential_energy(poly: BivariatePolynomial, frame: Optional[PeriodFrame],
                        expansions: Sequence[PunctureExpansion]) -> EnergyReport:
    """
    F_hat, F_check and F0 from times, conjugate times and periods

    Args:
        poly (BivariatePolynomial): Curve
        frame (PeriodFrame): Marking with periods (None or genus 0 for rational strata)
        expansions (list): PunctureExpansion of every puncture

    Returns:
        EnergyReport: without the area value
    """
    fh = f_hat(expansions)
    radii = {exp.spec.label(): exp.radius for exp in expansions}
    if frame is None or frame.genus == 0:
        return EnergyReport(F_check=-fh.real, F_hat=fh, F0=fh, radii=radii, genus=0)
    zeta, eps = frame.zeta, frame.epsilon
    e_inv = np.linalg.inv(frame.intersection)
    f_check = -fh.real + np.pi * float(zeta @ e_inv @ eps)
    f0 = fh + 1j * np.pi * complex(np.sum(frame.eta * frame.eta_tilde))
    grad = energy_gradient(frame)
    hess = energy_hessian(frame.tau) if frame.tau is not None else np.zeros((0, 0))
    return EnergyReport(F_check=float(f_check), F_hat=fh, F0=f0, gradient=grad, hessian=hess,
                        radii=radii, genus=frame.genus)


def energy_gradient(frame: PeriodFrame) -> np.ndarray:
    """dF_check / d epsilon = 2 pi (E^-1)^t zeta."""
    if frame.genus == 0:
        return np.zeros(0)
    return 2 * np.pi * np.linalg.inv(frame.intersection).T @ frame.zeta


def energy_hessian(tau) -> np.ndarray:
    """
    Hessian of F_check in epsilon

    Args:
        tau (np.ndarray): Riemann matrix R + iI with I positive definite

    Returns:
        np.ndarray: 2 pi [[I + R I^-1 R, -R I^-1], [-I^-1 R, I^-1]]
    """
    tau = np.atleast_2d(np.asarray(tau, dtype=complex))
    re, im = tau.real, tau.imag
    try:
        np.linalg.cholesky(im)
    except np.linalg.LinAlgError as exc:
        raise ImTauNotPositive("imaginary part of tau is not positive definite", tau=tau) from exc
    im_inv = np.linalg.inv(im)
    top = np.hstack([im + re @ im_inv @ re, -re @ im_inv])
    bottom = np.hstack([-im_inv @ re, im_inv])
    hess = 2 * np.pi * np.vstack([top, bottom])
    return (hess + hess.T) / 2


# ---- Report ----

def energy_report(poly: BivariatePolynomial, settings: Optional[dict] = None, support=None,
                  with_area: bool = True, radius_check: bool = False,
                  frame: Optional[PeriodFrame] = None) -> EnergyReport:
    """
    Both energies for one curve, the way the energy subcommand reports them

    Args:
        poly (BivariatePolynomial): Curve
        settings (dict, optional): Active settings
        support (frozenset, optional): family support for the moduli basis
        with_area (bool): also run the surface quadrature
        radius_check (bool): recompute the area with halved radii
        frame (PeriodFrame, optional): marking to reuse

    Returns:
        EnergyReport
    """
    cfg = _cfg(settings)
    crit = critical_set(poly, cfg)
    expansions = all_expansions(poly, cfg, crit)
    if poly.degree_y == 2:
        basis = list(analyze(poly, cfg, support).moduli_basis)
        frame = frame or build_hyperelliptic_frame(poly, cfg)
        frame, _ = evaluate_frame(poly, frame, basis, cfg, with_tau=bool(basis))
        report = prepotential_energy(poly, frame, expansions)
    else:
        logger.warning("periods need a hyperelliptic curve; F_check is reported for genus 0 only")
        fh = f_hat(expansions)
        report = EnergyReport(F_check=None, F_hat=fh, F0=None,
                              radii={e.spec.label(): e.radius for e in expansions})
    if not with_area:
        return report
    area = regularized_area(poly, expansions, cfg, crit)
    if radius_check:
        halved = all_expansions(poly, cfg, crit, radii={k: e.radius / 2 for k, e in enumerate(expansions)})
        again = regularized_area(poly, halved, cfg, crit)
        if abs(area - again) > 1e-6 * max(1.0, abs(area)):
            logger.warning("regularized area moved by %.2e when halving the radii", abs(area - again))
    return replace(report, F_area=float(area))
