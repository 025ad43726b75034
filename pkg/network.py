"""
Spectral networks of a Boutroux curve.

First kind: the vertical trajectories Re(Y dX) = 0 leaving every zero of Y dX, traced on
the curve with sheet tracking, assembled into a graph on the surface whose faces are
classified by walking the rotation system and audited against the Euler bookkeeping.
Second kind: the locus where two sheets have equal phi, traced as the vertical network of
(Y1 - Y2) dX (the difference curve for degree 2, sheet pairs seeded at branch points otherwise),
with the edge measure on its compact part.
"""
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import networkx as nx
import numpy as np
import numpy.polynomial.polynomial as npoly
from numpy.polynomial.legendre import leggauss
from scipy.integrate import RK45, trapezoid
from scipy.optimize import minimize_scalar

from curve import (
    all_expansions,
    base_point,
    chart_dx,
    critical_set,
    fiber,
    integrate_between,
    newton_polish,
    slope,
)
from errors import (
    CylinderDetected,
    EulerMismatch,
    InputError,
    LostSheet,
    NonRealResidues,
    NotHyperelliptic,
    NumericalError,
    TraceBudgetExceeded,
)
from periods import hyperelliptic_model, polyline_crossings, winding_numbers
from polygon import BivariatePolynomial, cluster_roots, enumerate_punctures, leading_zeros
from settings import DEFAULT_SETTINGS
from solver import boutroux_residual

logger = logging.getLogger(__name__)

TWO_PI = 2 * np.pi
CATCH_FACTOR = 50.0        # junction disc radius, in seed radii
MAX_STEPS = 50000


def _cfg(settings):
    return settings if settings is not None else DEFAULT_SETTINGS


# ---- Seeds ----

@dataclass(frozen=True)
class TrajectorySeed:
    x: complex
    y: complex
    kind: str                          # 'zero_of_YdX' | 'ramification' | 'nodal' | 'sheet_pair'
    sheet: int
    ramification: int                  # x - x0 = zeta^e
    kappa: complex                     # y ~ y0 + kappa zeta
    order: int                         # Y dX ~ C zeta^order d zeta
    coefficient: complex               # integral from the seed ~ C zeta^(order+1)
    radius: float                      # start radius in x
    local_angles: Tuple[float, ...]    # chart angles of the start directions

    @property
    def x_angles(self) -> Tuple[float, ...]:
        """Distinct start directions as seen in the x-plane."""
        return _distinct_angles([self.ramification * a for a in self.local_angles])

    @property
    def catch_radius(self) -> float:
        return CATCH_FACTOR * self.radius

    def chart_point(self, angle: float) -> complex:
        return self.radius ** (1.0 / self.ramification) * np.exp(1j * angle)

    def to_dict(self) -> dict:
        return {
            "x": self.x,
            "y": self.y,
            "kind": self.kind,
            "sheet": self.sheet,
            "ramification": self.ramification,
            "order": self.order,
            "local_angles": list(self.local_angles),
            "x_angles": list(self.x_angles),
        }


def _distinct_angles(angles, tolerance: float = 1e-9) -> Tuple[float, ...]:
    values = sorted(float(a) % TWO_PI for a in angles)
    out: List[float] = []
    for a in values:
        if out and abs(a - out[-1]) < tolerance:
            continue
        out.append(a)
    if len(out) > 1 and TWO_PI - out[-1] + out[0] < tolerance:
        out.pop()
    return tuple(out)


def _chart_integral(poly, x0, y0, e, kappa, zeta, nodes: int = 24):
    """Integral of Y dX from (x0, y0) to the chart point zeta along the straight chart ray."""
    t, w = leggauss(nodes)
    s = np.concatenate([(t + 1) / 2, [1.0]])
    z = s * zeta
    xs = x0 + z ** e
    ys = newton_polish(poly, xs, y0 + kappa * z, steps=8)
    integrand = ys[:-1] * e * z[:-1] ** (e - 1) * zeta
    return complex(np.sum(w / 2 * integrand)), complex(ys[-1])


def _zeros_of_y(poly: BivariatePolynomial, cfg) -> List[complex]:
    column = npoly.polytrim(poly.matrix[:, 0])
    if not np.any(column):
        logger.warning("y divides the curve; the component y = 0 carries no seeds")
        return []
    if len(column) < 2:
        return []
    return [z for z, _ in cluster_roots(npoly.polyroots(column), cfg["merge_tolerance"])]


def _make_seed(poly, x0, y0, kind, e, kappa, radius) -> Optional[TrajectorySeed]:
    zeta1 = radius ** (1.0 / e)
    g1, _ = _chart_integral(poly, x0, y0, e, kappa, zeta1)
    g2, _ = _chart_integral(poly, x0, y0, e, kappa, zeta1 / 2)
    if abs(g2) == 0:
        return None
    order = max(int(round(np.log2(abs(g1) / abs(g2)))) - 1, 0)
    if order == 0:
        return None
    coefficient = g1 / zeta1 ** (order + 1)
    n = order + 1
    angles = _distinct_angles([(np.pi / 2 + k * np.pi - np.angle(coefficient)) / n for k in range(2 * n)])
    roots = fiber(poly, x0).roots
    sheet = int(np.argmin(np.abs(roots - y0))) if len(roots) else 0
    return TrajectorySeed(
        x=complex(x0), y=complex(y0), kind=kind, sheet=sheet, ramification=e, kappa=complex(kappa),
        order=order, coefficient=complex(coefficient), radius=float(radius), local_angles=angles,
    )


def seeds(poly: BivariatePolynomial, settings: Optional[dict] = None, crit=None) -> List[TrajectorySeed]:
    """
    Zeros of Y dX in local charts: ramification points, both branches of every nodal point
    and the zeros of Y on each sheet

    Args:
        poly (BivariatePolynomial): Curve
        settings (dict, optional): Active settings
        crit (CriticalSet, optional): precomputed critical set

    Returns:
        list: TrajectorySeed entries with their start angles
    """
    cfg = _cfg(settings)
    crit = crit or critical_set(poly, cfg)
    specials = list(crit.special_xs())
    zeros = []
    for z in _zeros_of_y(poly, cfg):
        if any(abs(z - s) <= 1e-7 * max(1.0, abs(z)) for s in specials):
            continue
        y0 = complex(newton_polish(poly, z, 0j))
        if abs(poly.dy(z, y0)) == 0:
            continue
        zeros.append((z, y0))
    xs = specials + [z for z, _ in zeros]

    def radius_at(x0):
        others = [abs(x0 - o) for o in xs if abs(x0 - o) > 1e-9 * max(1.0, abs(x0))]
        return cfg["seed_radius_ratio"] * (min(others) if others else max(1.0, abs(x0)))

    out = []
    for p in crit.branch_points:
        rho = radius_at(p.x)
        roots = fiber(poly, p.x + rho).roots
        y1 = roots[np.argmin(np.abs(roots - p.y))]
        kappa = (y1 - p.y) / rho ** (1.0 / p.ramification)
        seed = _make_seed(poly, p.x, p.y, "ramification", p.ramification, kappa, rho)
        if seed is not None:
            out.append(seed)
    for p in crit.nodal_points:
        rho = radius_at(p.x)
        roots = fiber(poly, p.x + rho).roots
        for y1 in roots[np.argsort(np.abs(roots - p.y))[:2]]:
            seed = _make_seed(poly, p.x, p.y, "nodal", 1, (y1 - p.y) / rho, rho)
            if seed is not None:
                out.append(seed)
    for z, y0 in zeros:
        seed = _make_seed(poly, z, y0, "zero_of_YdX", 1, slope(poly, z, y0), radius_at(z))
        if seed is not None:
            out.append(seed)
    out.sort(key=lambda s: (s.x.real, s.x.imag, s.kind, np.angle(s.kappa)))
    logger.debug("seeds: %s", [(s.kind, s.x, s.order) for s in out])
    return out


# ---- Stop rules ----

@dataclass(frozen=True, eq=False)
class StopRules:
    poly: BivariatePolynomial
    settings: dict
    crit: object
    seeds: Tuple[TrajectorySeed, ...]
    expansions: tuple
    specials: np.ndarray
    reach: float
    far_chart: Optional[BivariatePolynomial] = None
    far_specials: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    switch_radius: float = np.inf

    @property
    def pole_punctures(self) -> list:
        return [e for e in self.expansions if e.spec.has_pole and e.spec.r_order >= 1]

    @property
    def fuchsian(self) -> list:
        return [e for e in self.expansions if e.spec.has_pole and e.spec.r_order == 0]

    @property
    def budget(self) -> float:
        return self.settings["trace_budget"] * max(1.0, self.reach)


def far_chart(poly: BivariatePolynomial) -> BivariatePolynomial:
    """The curve in w = 1/x with v = Y dX / dw, so that Y dX = v dw."""
    shift = max(i - 2 * j for i, j in poly.terms)
    return BivariatePolynomial.from_terms(
        {(2 * j - i + shift, j): c * (-1) ** j for (i, j), c in poly.terms.items()}
    )


def stop_rules(poly: BivariatePolynomial, settings: Optional[dict] = None, seed_list=None,
               crit=None, expansions=None) -> StopRules:
    """Everything a trace needs to know about where it may end."""
    cfg = _cfg(settings)
    crit = crit or critical_set(poly, cfg)
    seed_list = seeds(poly, cfg, crit) if seed_list is None else seed_list
    expansions = all_expansions(poly, cfg, crit) if expansions is None else expansions
    specials = np.array(
        list(crit.special_xs()) + [s.x for s in seed_list]
        + [e.spec.base_x for e in expansions if not e.spec.at_infinity],
        dtype=complex,
    )
    reach = max([1.0] + [abs(s) for s in specials])
    chart, far, switch = None, np.zeros(0, dtype=complex), np.inf
    if not any(e.spec.at_infinity and e.spec.has_pole for e in expansions):
        chart = far_chart(poly)
        switch = 4.0 * reach
        far = np.array([1 / s for s in specials if abs(s) > 1e-12], dtype=complex)
    return StopRules(poly, cfg, crit, tuple(seed_list), tuple(expansions), specials, float(reach),
                     chart, far, switch)


def _stop_radius(exp) -> float:
    half = exp.radius / 2
    return half ** (-exp.spec.a_order) if exp.spec.at_infinity else half ** abs(exp.spec.a_order)


def _puncture_hit(rules: StopRules, x: complex, y: complex):
    """(puncture index, chart angle) when (x, y) sits inside the stop disc of a pole puncture."""
    best = None
    for j, exp in enumerate(rules.expansions):
        spec = exp.spec
        if not (spec.has_pole and spec.r_order >= 1):
            continue
        if spec.at_infinity:
            if abs(x) < _stop_radius(exp):
                continue
            offset = x
        else:
            if abs(x - spec.base_x) > _stop_radius(exp):
                continue
            offset = x - spec.base_x
        a = spec.a_order
        root = np.power(complex(offset), -1.0 / a)
        candidates = root * np.exp(TWO_PI * 1j * np.arange(abs(a)) / abs(a))
        model = exp.laurent_ydx(candidates) / chart_dx(spec, candidates)
        k = int(np.argmin(np.abs(model - y)))
        miss = abs(model[k] - y)
        if miss <= 1e-4 * max(1.0, abs(y)) and (best is None or miss < best[0]):
            best = (miss, j, float(np.angle(candidates[k])))
    return None if best is None else best[1:]


def _chart_zeta(seed: TrajectorySeed, x: complex, y: complex):
    e = seed.ramification
    root = np.power(complex(x - seed.x), 1.0 / e)
    candidates = root * np.exp(TWO_PI * 1j * np.arange(e) / e)
    miss = np.abs(seed.y + seed.kappa * candidates - y)
    k = int(np.argmin(miss))
    return complex(candidates[k]), float(miss[k])


def _junction(rules: StopRules, x: complex, y: complex, own: Optional[int], left: bool):
    """(seed index, slot angle, integral from that seed to (x, y)) when the trace has reached a seed."""
    cfg = rules.settings
    for k, seed in enumerate(rules.seeds):
        if abs(x - seed.x) > seed.catch_radius or (k == own and not left):
            continue
        zeta, miss = _chart_zeta(seed, x, y)
        roots = fiber(rules.poly, x).roots
        gaps = np.sort(np.abs(roots - y))
        gap = gaps[1] if len(gaps) > 1 else np.inf
        if miss > 0.5 * gap:
            continue
        g, _ = _chart_integral(rules.poly, seed.x, seed.y, seed.ramification, seed.kappa, zeta)
        if abs(g.real) > cfg["snap_factor"] * cfg["trace_tolerance"] * max(1.0, abs(g)):
            continue
        slots = np.array(seed.local_angles)
        turn = np.abs(np.angle(np.exp(1j * (slots - np.angle(zeta)))))
        return k, float(slots[int(np.argmin(turn))]), g
    return None


# ---- Tracing ----

@dataclass(frozen=True, eq=False)
class NetworkEdge:
    xs: np.ndarray
    ys: np.ndarray
    phi: np.ndarray                    # Re of the integral of Y dX from the start
    arc: np.ndarray                    # |Y dX| length from the start
    start: Optional[Tuple[str, int, float]]
    end: Optional[Tuple[str, int, float]]
    stop: str                          # 'junction' | 'puncture' | 'closed'
    integral: complex
    kind: str = "first"

    @property
    def compact(self) -> bool:
        return self.end is not None and self.end[0] == "seed"

    @property
    def length(self) -> float:
        return float(self.arc[-1]) if len(self.arc) else 0.0

    def phi_drift(self) -> float:
        return float(np.max(np.abs(self.phi - self.phi[0]))) if len(self.phi) else 0.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "start": list(self.start) if self.start else None,
            "end": list(self.end) if self.end else None,
            "stop": self.stop,
            "points": self.xs,
            "sheet_values": self.ys,
            "phi": self.phi,
            "arc": self.arc,
            "integral": self.integral,
        }


def reversed_edge(edge: NetworkEdge) -> NetworkEdge:
    return NetworkEdge(
        xs=edge.xs[::-1], ys=edge.ys[::-1], phi=edge.phi[::-1], arc=edge.arc[-1] - edge.arc[::-1],
        start=edge.end, end=edge.start, stop=edge.stop, integral=-edge.integral, kind=edge.kind,
    )


def _chord_integral(poly, a: complex, b: complex, y_a: complex, nodes: int = 4) -> complex:
    t, w = leggauss(nodes)
    t = (t + 1) / 2
    x_prev, y_prev = a, y_a
    total = 0j
    for tk, wk in zip(t, w):
        x = a + tk * (b - a)
        y = complex(newton_polish(poly, x, y_prev + slope(poly, x_prev, y_prev) * (x - x_prev), steps=6))
        total += wk * y
        x_prev, y_prev = x, y
    return (b - a) / 2 * total


class _Walker:
    """RK45 walk along Re(v du) = 0 in the x chart or the w = 1/x chart, re-projected onto its level."""

    def __init__(self, rules: StopRules, x: complex, y: complex, integral: complex, sigma: float):
        self.rules = rules
        self.cfg = rules.settings
        self.chart = "x"
        self.u, self.v = complex(x), complex(y)
        self.integral = complex(integral)
        self.level = self.integral.real
        self.sigma = sigma
        self.travelled = 0.0
        self.steps = 0
        self._restart()

    @property
    def poly(self) -> BivariatePolynomial:
        return self.rules.poly if self.chart == "x" else self.rules.far_chart

    @property
    def x(self) -> complex:
        return self.u if self.chart == "x" else 1 / self.u

    @property
    def y(self) -> complex:
        return self.v if self.chart == "x" else -self.v * self.u ** 2

    @property
    def arc(self) -> float:
        return self.sigma * self.integral.imag

    def velocity(self, v: complex) -> complex:
        d = 1j * np.conj(v)
        return self.sigma * d / abs(d) if abs(d) > 0 else 0j

    def _rhs(self, t, state):
        u = complex(state[0], state[1])
        v = complex(newton_polish(self.poly, u, self.v + self.s * (u - self.u), steps=6))
        vel = self.velocity(v)
        return np.array([vel.real, vel.imag])

    def _max_step(self) -> float:
        specials = self.rules.specials if self.chart == "x" else self.rules.far_specials
        scale = self.rules.reach if self.chart == "x" else 1.0 / self.rules.switch_radius
        cap = 0.5 * max(scale, abs(self.u))
        if len(specials):
            cap = min(cap, 0.2 * float(np.min(np.abs(specials - self.u))))
        return max(cap, 1e-14 * max(1.0, abs(self.u)))

    def _restart(self, max_step: Optional[float] = None):
        self.s = complex(slope(self.poly, self.u, self.v))
        scale = max(1.0, abs(self.u))
        self.solver = RK45(
            self._rhs, 0.0, np.array([self.u.real, self.u.imag]), t_bound=1e12,
            max_step=max_step or self._max_step(), rtol=self.cfg["trace_rtol"],
            atol=self.cfg["trace_rtol"] * scale,
        )

    def _root_near(self, u: complex, predicted: complex) -> Optional[complex]:
        roots = fiber(self.poly, u).roots
        if not len(roots):
            return None
        dist = np.abs(roots - predicted)
        order = np.argsort(dist)
        d1 = dist[order[1]] if len(roots) > 1 else np.inf
        if dist[order[0]] >= 0.3 * d1:
            return None
        return complex(newton_polish(self.poly, u, roots[order[0]]))

    def advance(self):
        """One accepted RK step; returns (u before, integral before, dense output of the step)."""
        u0, v0, before = self.u, self.v, self.integral
        self.solver.max_step = self._max_step()
        for _ in range(40):
            self.solver.step()
            if self.solver.status == "failed":
                raise LostSheet("trajectory integrator failed", x=self.x, y=self.y)
            u1 = complex(self.solver.y[0], self.solver.y[1])
            v1 = self._root_near(u1, v0 + self.s * (u1 - u0))
            if v1 is not None:
                break
            self._restart(max_step=abs(u1 - u0) / 4)
        else:
            raise LostSheet("sheet tracking lost the trajectory", x=self.x, y=self.y)
        dense = self.solver.dense_output()
        self.integral += _chord_integral(self.poly, u0, u1, v0)
        self.travelled += abs(u1 - u0)
        self.steps += 1
        self.u, self.v = u1, v1
        self.s = complex(slope(self.poly, u1, v1))
        return u0, v0, before, dense

    def project(self) -> None:
        drift = self.integral.real - self.level
        if abs(drift) <= 1e-3 * self.cfg["trace_tolerance"] * max(1.0, abs(self.integral)):
            return
        du = -drift * np.conj(self.v) / abs(self.v) ** 2
        u2 = self.u + du
        v2 = complex(newton_polish(self.poly, u2, self.v + self.s * du, steps=6))
        self.integral += 0.5 * (self.v + v2) * du
        self.u, self.v = u2, v2
        self._restart()

    def switch_chart(self) -> None:
        if self.rules.far_chart is None:
            return
        inward = self.chart == "w" and abs(self.u) > 2.0 / self.rules.switch_radius
        outward = self.chart == "x" and abs(self.u) > self.rules.switch_radius
        if not (inward or outward):
            return
        u, v = 1 / self.u, -self.v * self.u ** 2
        self.chart = "x" if inward else "w"
        self.u, self.v = u, complex(newton_polish(self.poly, u, v))
        self._restart()


def _closure(walker: _Walker, dense, u_start: complex, start_velocity: complex, u0: complex):
    """Point of the last step where the walk returns onto its start, or None."""
    cfg = walker.cfg
    u1 = walker.u
    chord = u1 - u0
    t = np.clip(((u_start - u0) * np.conj(chord)).real / max(abs(chord) ** 2, 1e-300), 0.0, 1.0)
    if abs(u0 + t * chord - u_start) > abs(chord):
        return None
    span = dense.t - dense.t_old

    def distance(s):
        p = dense(s)
        return abs(complex(p[0], p[1]) - u_start)

    found = minimize_scalar(distance, bounds=(dense.t_old, dense.t), method="bounded",
                            options={"xatol": 1e-13 * max(1.0, span)})
    if found.fun > cfg["closure_position"] * max(1.0, abs(u_start)):
        return None
    p = dense(found.x)
    u_star = complex(p[0], p[1])
    v_star = complex(newton_polish(walker.poly, u_star, walker.v + walker.s * (u_star - u1)))
    turn = abs(np.angle(walker.velocity(v_star) / start_velocity))
    if turn > cfg["closure_angle"]:
        return None
    return u_star


def trace_vertical(poly: BivariatePolynomial, seed, angle: float, rules: Optional[StopRules] = None,
                   settings: Optional[dict] = None) -> NetworkEdge:
    """
    Follow the vertical trajectory Re(Y dX) = 0 leaving a seed along one start direction

    Args:
        poly (BivariatePolynomial): Curve
        seed (TrajectorySeed or tuple): a seed, or a free start point (x, y)
        angle (float): chart angle of the start direction; for a free start the sign of
            cos(angle) picks the orientation
        rules (StopRules, optional): precomputed stop rules
        settings (dict, optional): Active settings

    Returns:
        NetworkEdge: sampled polyline ending at a seed, at a pole puncture or back at its start
    """
    rules = rules or stop_rules(poly, settings)
    cfg = rules.settings
    free = not isinstance(seed, TrajectorySeed)
    xs, ys, phi, arc = [], [], [], []
    if free:
        own = None
        x_s, y_s = complex(seed[0]), complex(seed[1])
        y_s = complex(newton_polish(poly, x_s, y_s))
        integral = 0j
        sigma = 1.0 if np.cos(angle) >= 0 else -1.0
        start = None
    else:
        own = next((k for k, s in enumerate(rules.seeds) if s is seed or s == seed), None)
        zeta = seed.chart_point(angle)
        integral, y_s = _chart_integral(poly, seed.x, seed.y, seed.ramification, seed.kappa, zeta)
        x_s = seed.x + zeta ** seed.ramification
        drift = integral.real
        if abs(y_s) > 0 and drift:
            dx = -drift * np.conj(y_s) / abs(y_s) ** 2
            y_new = complex(newton_polish(poly, x_s + dx, y_s + slope(poly, x_s, y_s) * dx))
            integral += 0.5 * (y_s + y_new) * dx
            x_s, y_s = x_s + dx, y_new
        outward = (np.conj(x_s - seed.x) * 1j * np.conj(y_s)).real
        sigma = 1.0 if outward >= 0 else -1.0
        start = ("seed", own if own is not None else -1, float(angle))
        xs.append(seed.x)
        ys.append(seed.y)
        phi.append(0.0)
        arc.append(0.0)

    walker = _Walker(rules, x_s, y_s, integral, sigma)
    xs.append(walker.x)
    ys.append(walker.y)
    phi.append(walker.integral.real)
    arc.append(walker.arc)
    u_start, v_start = walker.u, walker.v
    start_velocity = walker.velocity(v_start)
    if free:
        near = np.abs(rules.specials - x_s) if len(rules.specials) else np.array([1.0])
        leave_radius = 0.05 * min(1.0, float(np.min(near)))
    else:
        leave_radius = 2 * seed.catch_radius
    left = False

    while True:
        u0, v0, before, dense = walker.advance()
        if free and walker.chart == "x":
            u_star = _closure(walker, dense, u_start, start_velocity, u0) if left else None
            if u_star is not None:
                total = before + _chord_integral(walker.poly, u0, u_star, v0)
                xs.append(u_start)
                ys.append(v_start)
                phi.append(total.real)
                arc.append(sigma * total.imag)
                return _edge(xs, ys, phi, arc, None, None, "closed", total)
        walker.project()
        if walker.chart == "x":
            x, y = walker.x, walker.y
            ref = u_start if free else seed.x
            left = left or abs(x - ref) > leave_radius
            hit = _junction(rules, x, y, own, left)
            if hit is not None:
                k, slot, g = hit
                total = walker.integral - g
                target = rules.seeds[k]
                xs.extend([x, target.x])
                ys.extend([y, target.y])
                phi.extend([walker.integral.real, total.real])
                arc.extend([walker.arc, sigma * total.imag])
                return _edge(xs, ys, phi, arc, start, ("seed", k, slot), "junction", total)
            hit = _puncture_hit(rules, x, y)
            if hit is not None:
                j, theta = hit
                xs.append(x)
                ys.append(y)
                phi.append(walker.integral.real)
                arc.append(walker.arc)
                return _edge(xs, ys, phi, arc, start, ("puncture", j, theta), "puncture", walker.integral)
        if walker.chart == "x" or abs(walker.u) > 1e-12:
            xs.append(walker.x)
            ys.append(walker.y)
            phi.append(walker.integral.real)
            arc.append(walker.arc)
        walker.switch_chart()
        if walker.travelled > rules.budget or walker.steps > MAX_STEPS:
            raise TraceBudgetExceeded("trajectory exceeded its length budget",
                                      start=xs[0], travelled=walker.travelled, steps=walker.steps)


def _edge(xs, ys, phi, arc, start, end, stop, integral, kind: str = "first") -> NetworkEdge:
    return NetworkEdge(
        xs=np.array(xs, dtype=complex), ys=np.array(ys, dtype=complex), phi=np.array(phi, dtype=float),
        arc=np.array(arc, dtype=float), start=start, end=end, stop=stop, integral=complex(integral), kind=kind,
    )


def _trace_all(rules: StopRules, kind: str) -> List[NetworkEdge]:
    """Trace every unused start slot once; an arrival consumes the slot it lands on."""
    used = set()
    edges = []
    for i, seed in enumerate(rules.seeds):
        for angle in seed.local_angles:
            if (i, angle) in used:
                continue
            edge = trace_vertical(rules.poly, seed, angle, rules)
            used.add((i, angle))
            if edge.compact:
                slot = (edge.end[1], edge.end[2])
                if slot in used:
                    raise EulerMismatch("two trajectories reach the same start direction",
                                        seed=rules.seeds[slot[0]].x, angle=slot[1])
                used.add(slot)
            edges.append(NetworkEdge(edge.xs, edge.ys, edge.phi, edge.arc, edge.start, edge.end,
                                     edge.stop, edge.integral, kind))
    logger.info("traced %d %s-kind edges from %d seeds", len(edges), kind, len(rules.seeds))
    return edges


# ---- Faces ----

@dataclass(frozen=True)
class Face:
    kind: str                          # 'half_plane' | 'strip' | 'half_cylinder' | 'cylinder'
    boundary: Tuple[Tuple[int, int], ...]
    width: Optional[float] = None
    perimeter: Optional[float] = None
    puncture: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "boundary": [list(h) for h in self.boundary],
            "width": self.width,
            "perimeter": self.perimeter,
            "puncture": self.puncture,
        }


def _head(edges, half):
    k, d = half
    end = edges[k].end if d == 0 else edges[k].start
    return end[0], end[1]


def face_orbits(edges: List[NetworkEdge]) -> List[List[Tuple[int, int]]]:
    """Boundary walks of the rotation system: half-edge (k, 0) runs start -> end, (k, 1) back."""
    outgoing = defaultdict(list)
    for k, e in enumerate(edges):
        outgoing[e.start[:2]].append((e.start[2] % TWO_PI, (k, 0)))
        outgoing[e.end[:2]].append((e.end[2] % TWO_PI, (k, 1)))
    succ = {}
    for items in outgoing.values():
        items.sort()
        for n, (_, half) in enumerate(items):
            succ[half] = items[(n + 1) % len(items)][1]
    seen = set()
    orbits = []
    for first in sorted(succ):
        if first in seen:
            continue
        orbit, half = [], first
        while half not in seen:
            seen.add(half)
            orbit.append(half)
            half = succ[(half[0], 1 - half[1])]
        orbits.append(orbit)
    return orbits


def _seed_level(poly, seed: TrajectorySeed, base, crit, cfg) -> float:
    zeta = seed.chart_point(seed.local_angles[0])
    g, y_s = _chart_integral(poly, seed.x, seed.y, seed.ramification, seed.kappa, zeta)
    x_s = seed.x + zeta ** seed.ramification
    return float((integrate_between(poly, base, (x_s, y_s), crit, cfg) - g).real)


def seed_levels(poly: BivariatePolynomial, seed_list, settings: Optional[dict] = None, crit=None) -> np.ndarray:
    """phi of every seed, measured from the seeded base point."""
    cfg = _cfg(settings)
    crit = crit or critical_set(poly, cfg)
    base = base_point(poly, crit, cfg["basepoint_seed"])
    return np.array([_seed_level(poly, s, base, crit, cfg) for s in seed_list], dtype=float)


def face_loop(edges: List[NetworkEdge], orbit) -> np.ndarray:
    """x-plane polyline of a boundary walk, closed."""
    parts = [edges[k].xs if d == 0 else edges[k].xs[::-1] for k, d in orbit]
    loop = np.concatenate(parts)
    return np.append(loop, loop[0])


def _enclosed_puncture(loop: np.ndarray, candidates) -> Optional[str]:
    finite = [e for e in candidates if not e.spec.at_infinity]
    windings = dict(zip([id(e) for e in finite],
                        winding_numbers(loop, np.array([e.spec.base_x for e in finite], dtype=complex))))
    inside = [e for e in finite if windings[id(e)] != 0]
    if len(inside) == 1:
        return inside[0].spec.label()
    outside = [e for e in candidates if e.spec.at_infinity or windings[id(e)] == 0]
    if len(outside) == 1:
        return outside[0].spec.label()
    if candidates:
        logger.warning("half-cylinder matches %d punctures; taking the first", len(candidates))
        return candidates[0].spec.label()
    return None


def classify_faces(edges: List[NetworkEdge], rules: StopRules) -> List[Face]:
    """Half-plane, strip, half-cylinder or cylinder for every boundary walk."""
    cfg = rules.settings
    faces = []
    levels: Dict[int, float] = {}
    base = None

    def level(index):
        nonlocal base
        if index not in levels:
            base = base or base_point(rules.poly, rules.crit, cfg["basepoint_seed"])
            levels[index] = _seed_level(rules.poly, rules.seeds[index], base, rules.crit, cfg)
        return levels[index]

    for orbit in face_orbits(edges):
        visits = [n for n, half in enumerate(orbit) if _head(edges, half)[0] == "puncture"]
        boundary = tuple(orbit)
        if len(visits) == 1:
            faces.append(Face("half_plane", boundary))
        elif len(visits) == 2:
            side = orbit[visits[0] + 1: visits[1] + 1]
            rest = orbit[visits[1] + 1:] + orbit[: visits[0] + 1]
            width = abs(level(edges[side[0][0]].start[1]) - level(edges[rest[0][0]].start[1]))
            faces.append(Face("strip", boundary, width=width))
        elif not visits:
            psi = sum(edges[k].integral if d == 0 else -edges[k].integral for k, d in orbit)
            t = psi / (TWO_PI * 1j)
            match = None
            for sign in (1, -1):
                candidates = [e for e in rules.fuchsian
                              if abs(t - sign * complex(e.times[0])) <= 1e-5 * max(1.0, abs(e.times[0]))]
                if candidates:
                    match = _enclosed_puncture(face_loop(edges, orbit), candidates)
                    break
            kind = "half_cylinder" if match is not None else "cylinder"
            faces.append(Face(kind, boundary, perimeter=abs(psi.imag), puncture=match))
        else:
            raise EulerMismatch("face boundary meets punctures more than twice", visits=len(visits))
    return faces


# ---- Graphs ----

@dataclass(frozen=True)
class EdgeMeasure:
    edge: int
    xs: np.ndarray = field(compare=False)
    density: np.ndarray = field(compare=False)
    mass: float = 0.0
    sign: str = "+"

    def to_dict(self) -> dict:
        return {"edge": self.edge, "points": self.xs, "density": self.density, "mass": self.mass, "sign": self.sign}


@dataclass(frozen=True, eq=False)
class SpectralNetworkGraph:
    kind: str                                   # 'first' | 'second'
    seeds: Tuple[TrajectorySeed, ...]
    punctures: Tuple[str, ...]
    edges: Tuple[NetworkEdge, ...]
    faces: Tuple[Face, ...] = ()
    audit: dict = field(default_factory=dict)
    boutroux: bool = True
    support: Tuple[int, ...] = ()               # second kind: edges carrying the measure
    measures: Tuple[EdgeMeasure, ...] = ()
    virtual_vertices: Tuple[complex, ...] = ()
    index: Tuple[dict, ...] = ()

    def face_counts(self) -> Dict[str, int]:
        return dict(Counter(f.kind for f in self.faces))

    def graph(self) -> nx.MultiGraph:
        g = nx.MultiGraph()
        for k, s in enumerate(self.seeds):
            g.add_node(("seed", k), kind=s.kind, x=s.x)
        for j, label in enumerate(self.punctures):
            g.add_node(("puncture", j), kind="puncture", label=label)
        for k, e in enumerate(self.edges):
            if e.start is not None and e.end is not None:
                g.add_edge(e.start[:2], e.end[:2], key=k, compact=e.compact)
        return g

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "boutroux": self.boutroux,
            "vertices": [dict(s.to_dict(), vertex="seed") for s in self.seeds]
                        + [{"vertex": "puncture", "label": p} for p in self.punctures],
            "edges": [e.to_dict() for e in self.edges],
            "faces": [f.to_dict() for f in self.faces],
            "face_counts": self.face_counts(),
            "audit": self.audit,
            "support": list(self.support),
            "measures": [m.to_dict() for m in self.measures],
            "virtual_vertices": list(self.virtual_vertices),
            "index": list(self.index),
        }


def _is_boutroux(poly: BivariatePolynomial, cfg) -> bool:
    try:
        residual = boutroux_residual(poly, cfg)
    except NonRealResidues:
        return False
    except (NotHyperelliptic, NumericalError) as exc:
        logger.info("Boutroux check unavailable (%s); tracing as given", exc)
        return True
    if residual > 100 * cfg["zeta_tolerance"]:
        logger.warning("curve is not Boutroux (residual %.2e): tracing anyway, face audit skipped", residual)
        return False
    return True


def euler_audit(poly: BivariatePolynomial, rules: StopRules, edges, faces) -> dict:
    """Integer bookkeeping of the face decomposition and the genus it implies."""
    counts = Counter(f.kind for f in faces)
    poles = rules.pole_punctures
    deg_poles = sum(e.spec.r_order + 1 for e in poles)
    deg_zeros = sum(s.order for s in rules.seeds)
    for exp in rules.expansions:
        spec = exp.spec
        if spec.at_infinity and spec.a_order + spec.b_order <= -2:
            logger.warning("Y dX vanishes at a point over infinity; no trajectories are traced from it")
            deg_zeros += -(spec.a_order + spec.b_order) - 1
    v, n = len(rules.seeds), len(poles)
    e_c = sum(1 for e in edges if e.compact)
    e_nc = len(edges) - e_c
    h, s = counts.get("half_plane", 0), counts.get("strip", 0)
    all_poles = deg_poles + len(rules.fuchsian)
    network_genus = (deg_zeros - all_poles) / 2 + 1
    identities = {
        "rays": 2 * e_nc == 2 * h + 4 * s,
        "ends": 2 * e_c + e_nc == 2 * v + 2 * deg_zeros,
        "half_planes": h == -2 * n + 2 * deg_poles,
        "half_cylinders": counts.get("half_cylinder", 0) == len(rules.fuchsian),
        "euler": (v + n) - len(edges) + len(faces) == 2 - 2 * network_genus,
    }
    frame_genus = None
    if poly.degree_y == 2:
        frame_genus = hyperelliptic_model(poly, rules.settings).genus
        identities["genus"] = network_genus == frame_genus
    return {
        "vertices": v,
        "punctures": n,
        "compact_edges": e_c,
        "noncompact_edges": e_nc,
        "deg_zeros": deg_zeros,
        "deg_poles": all_poles,
        "network_genus": network_genus,
        "frame_genus": frame_genus,
        "cylinders": counts.get("cylinder", 0),
        "identities": identities,
        "passed": all(identities.values()) and counts.get("cylinder", 0) == 0,
    }


def build_first_kind(poly: BivariatePolynomial, settings: Optional[dict] = None) -> SpectralNetworkGraph:
    """
    Vertical trajectories from every seed, faces and the no-cylinder / Euler audit

    Args:
        poly (BivariatePolynomial): Boutroux curve (other curves are traced with a warning, unaudited)
        settings (dict, optional): Active settings

    Returns:
        SpectralNetworkGraph: kind 'first'
    """
    cfg = _cfg(settings)
    crit = critical_set(poly, cfg)
    seed_list = seeds(poly, cfg, crit)
    if not seed_list:
        logger.info("Y dX has no zeros: the network is empty")
        return SpectralNetworkGraph("first", (), (), ())
    boutroux = _is_boutroux(poly, cfg)
    rules = stop_rules(poly, cfg, seed_list, crit)
    edges = _trace_all(rules, "first")
    graph_seeds = tuple(rules.seeds)
    for k, seed in enumerate(graph_seeds):
        used = sum(1 for e in edges if e.start[:2] == ("seed", k)) + sum(1 for e in edges if e.end[:2] == ("seed", k))
        if used != len(seed.local_angles):
            raise EulerMismatch("seed valence differs from its start directions",
                                seed=seed.x, valence=used, directions=len(seed.local_angles))
    faces = classify_faces(edges, rules)
    audit = euler_audit(poly, rules, edges, faces)
    drift = max((e.phi_drift() for e in edges), default=0.0)
    audit["phi_drift"] = drift
    if boutroux:
        if audit["cylinders"]:
            raise CylinderDetected("a face of the network is a cylinder", count=audit["cylinders"])
        if not audit["passed"]:
            raise EulerMismatch("face bookkeeping does not balance", identities=audit["identities"])
    else:
        audit["skipped"] = True
    labels = tuple(e.spec.label() for e in rules.expansions)
    logger.info("first-kind network: %d edges, faces %s", len(edges), dict(Counter(f.kind for f in faces)))
    return SpectralNetworkGraph("first", graph_seeds, labels, tuple(edges), tuple(faces), audit, boutroux)


# ---- Second kind ----

def difference_curve(poly: BivariatePolynomial, settings: Optional[dict] = None) -> BivariatePolynomial:
    """
    Curve of w = Y1 - Y2 for a degree-2 curve: A^2 w^2 = U with U = B^2 - 4AC,
    common factors of A and U divided out; P(x, w/2) when B = 0
    """
    cfg = _cfg(settings)
    model = hyperelliptic_model(poly, cfg)
    if not any(j == 1 for _, j in poly.terms):
        return BivariatePolynomial.from_terms({(i, j): c * 0.5 ** j for (i, j), c in poly.terms.items()})
    a2 = npoly.polymul(model.leading, model.leading)
    u = model.discriminant
    for z, _ in leading_zeros(poly, cfg["root_cluster_tolerance"]):
        while len(u) > 1 and len(a2) > 1:
            scale = np.max(np.abs(u)) * max(1.0, abs(z)) ** (len(u) - 1)
            if abs(npoly.polyval(z, u)) > 1e-9 * scale:
                break
            u, _ = npoly.polydiv(u, np.array([-z, 1.0]))
            a2, _ = npoly.polydiv(a2, np.array([-z, 1.0]))
    terms = {(i, 2): c for i, c in enumerate(a2)}
    terms.update({(i, 0): -c for i, c in enumerate(u)})
    return BivariatePolynomial.from_terms(terms)


def _same_curve(e1: NetworkEdge, e2: NetworkEdge, tol: float) -> bool:
    """Two traced edges with the same x-projection (lifts to the two sheets)."""
    ends1, ends2 = (e1.xs[0], e1.xs[-1]), (e2.xs[0], e2.xs[-1])
    same = abs(ends1[0] - ends2[0]) < tol and abs(ends1[1] - ends2[1]) < tol
    swapped = abs(ends1[0] - ends2[1]) < tol and abs(ends1[1] - ends2[0]) < tol
    if not (same or swapped):
        return False
    mid1 = np.interp(e1.length / 2, e1.arc, e1.xs.real) + 1j * np.interp(e1.length / 2, e1.arc, e1.xs.imag)
    return float(np.min(np.abs(e2.xs - mid1))) < max(tol, 2 * float(np.max(np.abs(np.diff(e2.xs)))))


def edge_measure(poly: BivariatePolynomial, edge: NetworkEdge, index: int = 0) -> EdgeMeasure:
    """
    Density Im[(Y_i - Y_j) x'(s)] / 2 pi per unit length along an edge, and its total mass

    Args:
        poly (BivariatePolynomial): Curve the edge was traced on
        edge (NetworkEdge): second-kind edge (its sheet values are Y_i - Y_j) or first-kind edge
        index (int): edge number recorded in the result

    Returns:
        EdgeMeasure
    """
    xs = edge.xs
    if edge.kind == "second":
        w = edge.ys
    else:
        w = np.empty(len(xs), dtype=complex)
        for n, (x, y) in enumerate(zip(xs, edge.ys)):
            roots = fiber(poly, x).roots
            others = roots[np.argsort(np.abs(roots - y))[1:]]
            w[n] = y - others[0] if len(others) else 0j
    tangent = np.gradient(xs)
    norm = np.abs(tangent)
    tangent = np.where(norm > 0, tangent / np.where(norm > 0, norm, 1.0), 0)
    density = (w * tangent).imag / TWO_PI
    if edge.kind == "second":
        mass = float(edge.integral.imag / TWO_PI)
    else:
        mass = float(trapezoid(density, np.concatenate([[0.0], np.cumsum(np.abs(np.diff(xs)))])))
    tol = 1e-9 * max(1.0, float(np.max(np.abs(density)))) if len(density) else 0.0
    if np.all(density >= -tol):
        sign = "+"
    elif np.all(density <= tol):
        sign = "-"
    else:
        sign = "mixed"
    return EdgeMeasure(index, xs, density, mass, sign)


def index_at(poly: BivariatePolynomial, x: complex, settings: Optional[dict] = None, crit=None) -> dict:
    """
    Sheets over x ordered by phi = Re of the integral of Y dX from a branch point

    Returns:
        dict: x, sheet values and phi in ascending phi order; 'top' is the sheet of largest phi
    """
    cfg = _cfg(settings)
    crit = crit or critical_set(poly, cfg)
    if not crit.branch_points:
        raise InputError("phi needs a branch point as its base", x=x)
    b = crit.branch_points[0]
    offset = 1e-6 * max(1.0, abs(b.x))
    start_x = b.x + offset
    roots = fiber(poly, start_x).roots
    start = (complex(start_x), complex(roots[np.argmin(np.abs(roots - b.y))]))
    values = []
    for y in fiber(poly, x).roots:
        phi = integrate_between(poly, start, (complex(x), complex(y)), crit, cfg).real
        values.append((float(phi), complex(y)))
    values.sort(key=lambda t: t[0])
    return {
        "x": complex(x),
        "sheets": [y for _, y in values],
        "phi": [p for p, _ in values],
        "top": values[-1][1],
    }


def virtual_vertices(edges: List[NetworkEdge], seed_list, tol: float) -> List[complex]:
    """Crossings of distinct edges away from every seed."""
    out = []
    for a in range(len(edges)):
        for b in range(a + 1, len(edges)):
            p, q = edges[a].xs, edges[b].xs
            for i, t, _, _ in polyline_crossings(p, q):
                point = p[i] + t * (p[i + 1] - p[i])
                if all(abs(point - s.x) > s.catch_radius for s in seed_list) and \
                        all(abs(point - v) > tol for v in out):
                    out.append(complex(point))
    return out


# ---- Second kind, more than two sheets ----

def pair_seeds(poly: BivariatePolynomial, settings: Optional[dict] = None, crit=None) -> List[TrajectorySeed]:
    """
    One seed per simple branch point: the two sheets meeting there, with the three
    x-directions along which Re of the integral of (Y_a - Y_b) dX stays zero

    Args:
        poly (BivariatePolynomial): Curve
        settings (dict, optional): Active settings
        crit (CriticalSet, optional): precomputed critical set

    Returns:
        list: TrajectorySeed entries of kind 'sheet_pair'; kappa follows sheet a, sheet b has -kappa
    """
    cfg = _cfg(settings)
    crit = crit or critical_set(poly, cfg)
    specials = crit.special_xs()
    out = []
    for p in crit.branch_points:
        if p.ramification != 2:
            logger.warning("branch point at %s joins %d sheets; no sheet pair traced from it", p.x, p.ramification)
            continue
        others = [abs(p.x - o) for o in specials if abs(p.x - o) > 1e-9 * max(1.0, abs(p.x))]
        rho = cfg["seed_radius_ratio"] * (min(others) if others else max(1.0, abs(p.x)))
        roots = fiber(poly, p.x + rho).roots
        order = np.argsort(np.abs(roots - p.y))
        kappa = (roots[order[0]] - p.y) / np.sqrt(rho)
        zeta1 = np.sqrt(rho)
        ga, _ = _chart_integral(poly, p.x, p.y, 2, kappa, zeta1)
        gb, _ = _chart_integral(poly, p.x, p.y, 2, -kappa, zeta1)
        coefficient = (ga - gb) / zeta1 ** 3
        angles = _distinct_angles([(np.pi / 2 + k * np.pi - np.angle(coefficient)) / 3 for k in range(3)])
        out.append(TrajectorySeed(
            x=complex(p.x), y=complex(p.y), kind="sheet_pair", sheet=int(order[0]), ramification=2,
            kappa=complex(kappa), order=2, coefficient=complex(coefficient), radius=float(rho),
            local_angles=angles,
        ))
    out.sort(key=lambda s: (s.x.real, s.x.imag))
    return out


def _pair_chart_integral(poly, seed: TrajectorySeed, zeta: complex):
    """Integral of (Y_a - Y_b) dX from the seed to the chart point zeta, with both sheet values there."""
    ga, ya = _chart_integral(poly, seed.x, seed.y, 2, seed.kappa, zeta)
    gb, yb = _chart_integral(poly, seed.x, seed.y, 2, -seed.kappa, zeta)
    return ga - gb, ya, yb


class _PairWalker:
    """RK45 walk along Re((Y_a - Y_b) dX) = 0 with both sheets continued, re-projected onto its level."""

    def __init__(self, rules: StopRules, x: complex, ya: complex, yb: complex, integral: complex, sigma: float):
        self.rules = rules
        self.cfg = rules.settings
        self.poly = rules.poly
        self.x = complex(x)
        self.ys = [complex(ya), complex(yb)]
        self.integral = complex(integral)
        self.level = self.integral.real
        self.sigma = sigma
        self.travelled = 0.0
        self.steps = 0
        self._restart()

    @property
    def w(self) -> complex:
        return self.ys[0] - self.ys[1]

    @property
    def arc(self) -> float:
        return self.sigma * self.integral.imag

    def velocity(self, w: complex) -> complex:
        d = 1j * np.conj(w)
        return self.sigma * d / abs(d) if abs(d) > 0 else 0j

    def _predict(self, x: complex) -> List[complex]:
        return [complex(newton_polish(self.poly, x, y + s * (x - self.x), steps=6))
                for y, s in zip(self.ys, self.slopes)]

    def _rhs(self, t, state):
        ya, yb = self._predict(complex(state[0], state[1]))
        vel = self.velocity(ya - yb)
        return np.array([vel.real, vel.imag])

    def _max_step(self) -> float:
        cap = 0.5 * max(self.rules.reach, abs(self.x))
        if len(self.rules.specials):
            cap = min(cap, 0.2 * float(np.min(np.abs(self.rules.specials - self.x))))
        return max(cap, 1e-14 * max(1.0, abs(self.x)))

    def _restart(self, max_step: Optional[float] = None):
        self.slopes = [complex(slope(self.poly, self.x, y)) for y in self.ys]
        scale = max(1.0, abs(self.x))
        self.solver = RK45(
            self._rhs, 0.0, np.array([self.x.real, self.x.imag]), t_bound=1e12,
            max_step=max_step or self._max_step(), rtol=self.cfg["trace_rtol"],
            atol=self.cfg["trace_rtol"] * scale,
        )

    def _roots_near(self, x: complex, predicted) -> Optional[List[complex]]:
        roots = fiber(self.poly, x).roots
        if len(roots) < 2:
            return None
        out = []
        for guess in predicted:
            dist = np.abs(roots - guess)
            order = np.argsort(dist)
            if dist[order[0]] >= 0.3 * dist[order[1]]:
                return None
            out.append(complex(newton_polish(self.poly, x, roots[order[0]])))
        return out if out[0] != out[1] else None

    def advance(self) -> None:
        x0, ys0 = self.x, list(self.ys)
        self.solver.max_step = self._max_step()
        for _ in range(40):
            self.solver.step()
            if self.solver.status == "failed":
                raise LostSheet("sheet-pair integrator failed", x=self.x, y=self.ys)
            x1 = complex(self.solver.y[0], self.solver.y[1])
            ys1 = self._roots_near(x1, [y + s * (x1 - x0) for y, s in zip(ys0, self.slopes)])
            if ys1 is not None:
                break
            self._restart(max_step=abs(x1 - x0) / 4)
        else:
            raise LostSheet("sheet tracking lost the pair", x=self.x, y=self.ys)
        self.integral += _chord_integral(self.poly, x0, x1, ys0[0]) - _chord_integral(self.poly, x0, x1, ys0[1])
        self.travelled += abs(x1 - x0)
        self.steps += 1
        self.x, self.ys = x1, ys1
        self.slopes = [complex(slope(self.poly, x1, y)) for y in ys1]

    def project(self) -> None:
        drift = self.integral.real - self.level
        if abs(drift) <= 1e-3 * self.cfg["trace_tolerance"] * max(1.0, abs(self.integral)):
            return
        w0 = self.w
        dx = -drift * np.conj(w0) / abs(w0) ** 2
        ya, yb = self._predict(self.x + dx)
        self.integral += 0.5 * (w0 + ya - yb) * dx
        self.x, self.ys = self.x + dx, [ya, yb]
        self._restart()


def _pair_junction(rules: StopRules, walker: _PairWalker, own: int, left: bool):
    """(seed index, slot angle, integral from that seed) when the walk reaches the meeting point of its pair."""
    cfg = rules.settings
    x = walker.x
    for k, seed in enumerate(rules.seeds):
        if abs(x - seed.x) > seed.catch_radius or (k == own and not left):
            continue
        zeta = complex(np.sqrt(complex(x - seed.x)))
        miss = [max(abs(seed.y + s * seed.kappa * zeta - walker.ys[0]), abs(seed.y - s * seed.kappa * zeta - walker.ys[1]))
                for s in (1.0, -1.0)]
        sign = 1.0 if miss[0] <= miss[1] else -1.0
        gaps = np.sort(np.abs(fiber(rules.poly, x).roots - walker.ys[0]))
        gap = gaps[2] if len(gaps) > 2 else np.inf
        if min(miss) > 0.5 * gap:
            continue
        g, _, _ = _pair_chart_integral(rules.poly, seed, sign * zeta)
        if abs(g.real) > cfg["snap_factor"] * cfg["trace_tolerance"] * max(1.0, abs(g)):
            continue
        slots = np.array(seed.local_angles)
        turn = np.abs(np.angle(np.exp(1j * (2 * slots - np.angle(x - seed.x)))))
        return k, float(slots[int(np.argmin(turn))]), g
    return None


def trace_sheet_pair(rules: StopRules, seed_index: int, angle: float, punctures) -> NetworkEdge:
    """
    Follow the equal-phi locus of the two sheets of a pair seed along one start direction

    Args:
        rules (StopRules): stop rules built on the pair seeds
        seed_index (int): index of the seed in rules.seeds
        angle (float): chart angle of the start direction
        punctures (list): PunctureSpec entries of the curve

    Returns:
        NetworkEdge: kind 'second'; sheet values are Y_a - Y_b along the edge
    """
    seed = rules.seeds[seed_index]
    zeta = seed.chart_point(angle)
    integral, ya, yb = _pair_chart_integral(rules.poly, seed, zeta)
    x_s = seed.x + zeta ** 2
    outward = (np.conj(x_s - seed.x) * 1j * np.conj(ya - yb)).real
    walker = _PairWalker(rules, x_s, ya, yb, integral, 1.0 if outward >= 0 else -1.0)
    start = ("seed", seed_index, float(angle))
    xs, ws, phi, arc = [seed.x, walker.x], [0j, walker.w], [0.0, walker.integral.real], [0.0, walker.arc]
    far = 0.25 * rules.budget
    finite = [(j, p.base_x) for j, p in enumerate(punctures) if not p.at_infinity]
    infinity = next((j for j, p in enumerate(punctures) if p.at_infinity), -1)
    left = False

    while True:
        walker.advance()
        walker.project()
        x = walker.x
        left = left or abs(x - seed.x) > 2 * seed.catch_radius
        hit = _pair_junction(rules, walker, seed_index, left)
        if hit is not None:
            k, slot, g = hit
            total = walker.integral - g
            xs.extend([x, rules.seeds[k].x])
            ws.extend([walker.w, 0j])
            phi.extend([walker.integral.real, total.real])
            arc.extend([walker.arc, walker.sigma * total.imag])
            return _edge(xs, ws, phi, arc, start, ("seed", k, slot), "junction", total, "second")
        xs.append(x)
        ws.append(walker.w)
        phi.append(walker.integral.real)
        arc.append(walker.arc)
        if abs(x) > far:
            return _edge(xs, ws, phi, arc, start, ("puncture", infinity, float(np.angle(x))), "puncture",
                         walker.integral, "second")
        for j, base in finite:
            if abs(x - base) < 1e-3 * rules.reach:
                return _edge(xs, ws, phi, arc, start, ("puncture", j, float(np.angle(x - base))), "puncture",
                             walker.integral, "second")
        if walker.travelled > rules.budget or walker.steps > MAX_STEPS:
            raise TraceBudgetExceeded("sheet-pair trajectory exceeded its length budget",
                                      start=seed.x, travelled=walker.travelled, steps=walker.steps)


def _build_sheet_pairs(poly: BivariatePolynomial, cfg, boutroux: bool) -> SpectralNetworkGraph:
    crit = critical_set(poly, cfg)
    seed_list = pair_seeds(poly, cfg, crit)
    punctures = enumerate_punctures(poly, cfg)
    labels = tuple(p.label() for p in punctures)
    if not seed_list:
        return SpectralNetworkGraph("second", (), labels, (), boutroux=boutroux)
    rules = stop_rules(poly, cfg, seed_list, crit, expansions=())
    used = set()
    traced = []
    for i, seed in enumerate(rules.seeds):
        for angle in seed.local_angles:
            if (i, angle) in used:
                continue
            edge = trace_sheet_pair(rules, i, angle, punctures)
            used.add((i, angle))
            if edge.compact:
                used.add((edge.end[1], edge.end[2]))
            traced.append(edge)

    locus = [e if e.integral.imag >= 0 else reversed_edge(e) for e in traced]
    support = tuple(k for k, e in enumerate(locus) if e.compact)
    measures = tuple(edge_measure(poly, locus[k], k) for k in support)
    drift = max((e.phi_drift() for e in locus), default=0.0)
    audit = {"phi_drift": drift, "passed": drift <= cfg["trace_tolerance"], "sheet_pairs": len(seed_list)}
    virtual = virtual_vertices(locus, rules.seeds, 1e-6 * rules.reach)
    logger.info("second-kind network on %d sheets: %d edges, %d compact", poly.degree_y, len(locus), len(support))
    return SpectralNetworkGraph(
        "second", tuple(rules.seeds), labels, tuple(locus), (), audit, boutroux,
        support, measures, tuple(virtual),
    )


def build_second_kind(poly: BivariatePolynomial, settings: Optional[dict] = None,
                      probe_index: bool = True) -> SpectralNetworkGraph:
    """
    Equal-phi locus of pairs of sheets, its compact part and the edge measure

    Degree-2 curves are traced as the vertical network of the difference curve. With more sheets
    every simple branch point seeds the locus of the two sheets meeting there.

    Args:
        poly (BivariatePolynomial): Boutroux curve of degree at least 2 in y
        settings (dict, optional): Active settings
        probe_index (bool): order the sheets by phi on both sides of every support edge (degree 2)

    Returns:
        SpectralNetworkGraph: kind 'second'; edges are the x-plane locus (one lift each, oriented
        so the density is non-negative), support lists the compact edges carrying the measure
    """
    cfg = _cfg(settings)
    if poly.degree_y < 2:
        raise NotHyperelliptic("the second-kind network needs two sheets", degree_y=poly.degree_y)
    if poly.degree_y > 2:
        # the residue certificate reads a hyperelliptic frame; other curves are traced as given
        logger.info("second kind on %d sheets: tracing sheet pairs", poly.degree_y)
        return _build_sheet_pairs(poly, cfg, True)
    boutroux = _is_boutroux(poly, cfg)
    diff = difference_curve(poly, cfg)
    crit = critical_set(diff, cfg)
    seed_list = seeds(diff, cfg, crit)
    if any(s.kind != "ramification" for s in seed_list):
        # nodes of the difference curve sit on the locus only when both sheets share phi there
        levels = seed_levels(diff, seed_list, cfg, crit)
        ref = [lv for s, lv in zip(seed_list, levels) if s.kind == "ramification"]
        if ref:
            scale = max(1.0, float(np.max(np.abs(levels))))
            keep = [s for s, lv in zip(seed_list, levels)
                    if s.kind == "ramification" or abs(lv - ref[0]) <= 1e-6 * scale]
            logger.debug("second kind: %d of %d seeds lie on the equal-phi locus", len(keep), len(seed_list))
            seed_list = keep
    if not seed_list:
        return SpectralNetworkGraph("second", (), (), (), boutroux=boutroux)
    rules = stop_rules(diff, cfg, seed_list, crit)
    traced = _trace_all(rules, "second")

    tol = 1e-6 * rules.reach
    locus: List[NetworkEdge] = []
    for edge in traced:
        if any(_same_curve(edge, kept, tol) for kept in locus):
            continue
        locus.append(edge if edge.integral.imag >= 0 else reversed_edge(edge))
    support = tuple(k for k, e in enumerate(locus) if e.start[0] == "seed" and e.end[0] == "seed")
    measures = tuple(edge_measure(diff, locus[k], k) for k in support)
    for m in measures:
        if m.sign == "mixed":
            logger.warning("edge %d: density changes sign", m.edge)

    index = []
    if probe_index and boutroux:
        orig_crit = critical_set(poly, cfg)
        for k in support:
            edge = locus[k]
            mid = len(edge.xs) // 2
            tangent = edge.xs[min(mid + 1, len(edge.xs) - 1)] - edge.xs[max(mid - 1, 0)]
            normal = 1j * tangent / abs(tangent)
            offset = 1e-3 * rules.reach
            try:
                left = index_at(poly, edge.xs[mid] + offset * normal, cfg, orig_crit)
                right = index_at(poly, edge.xs[mid] - offset * normal, cfg, orig_crit)
            except NumericalError as exc:
                logger.warning("index probe failed on edge %d: %s", k, exc)
                continue
            index.append({"edge": k, "left": left, "right": right})

    drift = max((e.phi_drift() for e in locus), default=0.0)
    audit = {"phi_drift": drift, "passed": drift <= cfg["trace_tolerance"]}
    virtual = virtual_vertices(locus, rules.seeds, tol)
    labels = tuple(e.spec.label() for e in rules.expansions)
    logger.info("second-kind network: %d edges, %d on the support", len(locus), len(support))
    return SpectralNetworkGraph(
        "second", tuple(rules.seeds), labels, tuple(locus), (), audit, boutroux,
        support, measures, tuple(virtual), tuple(index),
    )


def x_plane_edges(graph: SpectralNetworkGraph, tol: float = 1e-6) -> List[int]:
    """One representative per x-projection among the edges of a graph."""
    kept: List[int] = []
    for k, edge in enumerate(graph.edges):
        if not any(_same_curve(edge, graph.edges[j], tol) for j in kept):
            kept.append(k)
    return kept
