"""
Boutroux finder
Drives zeta (imaginary parts of all 2g periods) to zero over the interior
coefficients Q of the moduli space P + span(B_k) by damped Newton with the
exact period Jacobian. F_check is the merit function of the line search.

Degenerations: when two branch points come closer than merge_tolerance the
hyperelliptic model sees a node instead, the cycle is dropped and the
iteration continues on the lower stratum with steps that keep every node.
"""
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import lstsq

from curve import all_expansions
from energy import EnergyReport, energy_gradient, prepotential_energy
from errors import (
    ImTauNotPositive,
    InputError,
    MarkingJump,
    MaxIterations,
    NonRealResidues,
    NotHyperelliptic,
    NumericalError,
    SingularJacobian,
    SingularNormalization,
)
from formats import polynomial_to_json, to_jsonable
from periods import (
    PeriodFrame,
    build_hyperelliptic_frame,
    evaluate_frame,
    holomorphic_forms,
    periods,
    reanchor_frame,
)
from polygon import BivariatePolynomial, analyze
from settings import DEFAULT_SETTINGS

logger = logging.getLogger(__name__)

# relative singular value below which the real linearization is rank deficient
SINGULAR_RATIO = 1e-12


def _cfg(settings):
    return settings if settings is not None else DEFAULT_SETTINGS


# ---- Config and result ----

@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 60
    zeta_tolerance: float = 1e-10
    damping: float = 1.0
    line_search_floor: float = 1e-4
    merge_tolerance: float = 1e-7
    seed_interior: tuple = ()
    continuation_steps: int = 0
    multi_start: int = 1

    def __post_init__(self):
        for name in ("zeta_tolerance", "line_search_floor", "merge_tolerance"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive", **{name: getattr(self, name)})
        if not 0 < self.damping <= 1:
            raise InputError("damping must lie in (0, 1]", damping=self.damping)
        if self.max_iterations < 1 or self.multi_start < 1 or self.continuation_steps < 0:
            raise InputError("iteration counts must be positive", max_iterations=self.max_iterations,
                             multi_start=self.multi_start, continuation_steps=self.continuation_steps)

    @classmethod
    def from_settings(cls, settings: Optional[dict] = None, seed_interior=None) -> "SolverConfig":
        cfg = _cfg(settings)
        return cls(
            max_iterations=int(cfg["max_iterations"]),
            zeta_tolerance=float(cfg["zeta_tolerance"]),
            damping=float(cfg["damping"]),
            line_search_floor=float(cfg["line_search_floor"]),
            merge_tolerance=float(cfg["merge_tolerance"]),
            seed_interior=tuple(complex(q) for q in (seed_interior if seed_interior is not None else ())),
            continuation_steps=int(cfg["continuation_steps"]),
            multi_start=int(cfg["multi_start"]),
        )

    def to_dict(self) -> dict:
        return {
            "max_iterations": self.max_iterations,
            "zeta_tolerance": self.zeta_tolerance,
            "damping": self.damping,
            "line_search_floor": self.line_search_floor,
            "merge_tolerance": self.merge_tolerance,
            "seed_interior": list(self.seed_interior),
            "continuation_steps": self.continuation_steps,
            "multi_start": self.multi_start,
        }


@dataclass(frozen=True)
class BoutrouxResult:
    poly: BivariatePolynomial
    exterior: BivariatePolynomial
    interior: np.ndarray                  # Q, coordinates in the moduli basis
    genus: Optional[int]
    zeta_residual: float
    frame: Optional[PeriodFrame]
    energy: EnergyReport
    trace: tuple = ()
    fuse_events: tuple = ()
    genus_history: tuple = ()
    support: Optional[frozenset] = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "polynomial": polynomial_to_json(self.poly, self.support),
            "exterior": polynomial_to_json(self.exterior, self.support),
            "interior": self.interior,
            "genus": self.genus,
            "zeta_residual": self.zeta_residual,
            "frame": self.frame.to_dict() if self.frame is not None else None,
            "energy": self.energy.to_dict(),
            "iterations": sum(1 for entry in self.trace if entry["accepted"]),
            "fuse_events": list(self.fuse_events),
            "genus_history": list(self.genus_history),
            "config": self.config,
        }


@dataclass(frozen=True)
class _Iterate:
    q: np.ndarray
    poly: BivariatePolynomial
    frame: Optional[PeriodFrame]
    jacobian: np.ndarray
    f_check: float

    @property
    def genus(self) -> Optional[int]:
        return self.frame.genus if self.frame is not None else None

    @property
    def zeta_norm(self) -> float:
        if self.frame is None or self.frame.genus == 0:
            return 0.0
        return float(np.max(np.abs(self.frame.zeta)))


# ---- Residual ----

def check_real_residues(poly: BivariatePolynomial, settings: Optional[dict] = None, expansions=None) -> float:
    """Largest |Im t_0| over the punctures; raises NonRealResidues above the tolerance."""
    cfg = _cfg(settings)
    expansions = expansions if expansions is not None else all_expansions(poly, cfg)
    worst, label = 0.0, None
    for exp in expansions:
        im = abs(complex(exp.times[0]).imag)
        if im > worst:
            worst, label = im, exp.spec.label()
    if worst > cfg["real_residue_tolerance"]:
        raise NonRealResidues("a Boutroux curve needs real residues", puncture=label, imaginary_part=worst)
    return worst


def boutroux_residual(poly: BivariatePolynomial, settings: Optional[dict] = None,
                      frame: Optional[PeriodFrame] = None) -> float:
    """
    Certificate number max|zeta| + max|Im t_0|; 0 means Boutroux

    Args:
        poly (BivariatePolynomial): Curve
        settings (dict, optional): Active settings
        frame (PeriodFrame, optional): marking to carry over instead of building a new one

    Returns:
        float: the residual
    """
    cfg = _cfg(settings)
    residues = [complex(exp.times[0]) for exp in all_expansions(poly, cfg)]
    imag = max((abs(t.imag) for t in residues), default=0.0)
    if poly.degree_y == 1:
        return imag
    frame = reanchor_frame(poly, frame, cfg) if frame is not None else build_hyperelliptic_frame(poly, cfg)
    frame = periods(poly, frame, cfg)
    zeta = float(np.max(np.abs(frame.zeta))) if frame.genus else 0.0
    return zeta + imag


# ---- Steps ----

def _restriction(jacobian: np.ndarray, restrict: Optional[np.ndarray]) -> np.ndarray:
    return np.eye(jacobian.shape[1], dtype=complex) if restrict is None else restrict


def newton_step(q, frame: PeriodFrame, jacobian: np.ndarray, restrict: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Full Newton update of the interior coefficients

    Solves Im(J dQ) = -zeta in the least-squares sense, with dQ = N dw when a
    restriction N (columns spanning the node-preserving directions) is given.

    Args:
        q (array): current interior coefficients
        frame (PeriodFrame): marking with periods
        jacobian (np.ndarray): d eta / d Q, shape (2g, dim)
        restrict (np.ndarray, optional): (dim, m) basis of admissible directions

    Returns:
        np.ndarray: updated interior coefficients
    """
    q = np.asarray(q, dtype=complex)
    if frame.genus == 0 or jacobian.shape[1] == 0:
        return q
    n = _restriction(jacobian, restrict)
    jr = jacobian @ n
    m = jr.shape[1]
    system = np.hstack([jr.imag, jr.real])
    s = np.linalg.svd(system, compute_uv=False)
    rank = int(np.sum(s > SINGULAR_RATIO * s[0])) if len(s) and s[0] > 0 else 0
    if rank < min(system.shape):
        raise SingularJacobian("period Jacobian is rank deficient", rank=rank, shape=list(system.shape))
    u = lstsq(system, -frame.zeta)[0]
    return q + n @ (u[:m] + 1j * u[m:])


def gradient_step(q, frame: PeriodFrame, jacobian: np.ndarray, restrict: Optional[np.ndarray] = None) -> np.ndarray:
    """Steepest descent on F_check, scaled to the length of a Newton step on a unit Jacobian."""
    q = np.asarray(q, dtype=complex)
    if frame.genus == 0 or jacobian.shape[1] == 0:
        return q
    n = _restriction(jacobian, restrict)
    jr = jacobian @ n
    m = jr.shape[1]
    d_eps = np.hstack([jr.real, -jr.imag])
    grad = d_eps.T @ energy_gradient(frame)
    norm = np.linalg.norm(grad)
    if norm == 0:
        return q
    length = np.linalg.norm(frame.zeta) / max(np.linalg.norm(d_eps, 2), 1e-300)
    u = -grad / norm * length
    return q + n @ (u[:m] + 1j * u[m:])


# ---- Iteration ----

def _evaluate(exterior: BivariatePolynomial, basis: List[BivariatePolynomial], q, previous: Optional[_Iterate],
              cfg) -> _Iterate:
    q = np.asarray(q, dtype=complex)
    poly = exterior.plus_interior(basis, q) if basis else exterior
    frame, jac = None, np.zeros((0, len(basis)), dtype=complex)
    if poly.degree_y == 2:
        if previous is None or previous.frame is None:
            frame = build_hyperelliptic_frame(poly, cfg)
        else:
            frame = reanchor_frame(poly, previous.frame, cfg)
        frame, jac = evaluate_frame(poly, frame, basis, cfg, with_tau=False)
    f_check = prepotential_energy(poly, frame, all_expansions(poly, cfg)).F_check
    return _Iterate(q, poly, frame, jac, f_check)


def _line_search(exterior, basis, cur: _Iterate, target: np.ndarray, config: SolverConfig, cfg, emit):
    step = target - cur.q
    lam = config.damping
    last_error = None
    while lam >= config.line_search_floor:
        trial = None
        try:
            trial = _evaluate(exterior, basis, cur.q + lam * step, cur, cfg)
        except NumericalError as exc:
            logger.debug("trial at damping %.3g failed: %s", lam, exc)
            last_error = exc
        accepted = trial is not None and (trial.zeta_norm < cur.zeta_norm or trial.f_check < cur.f_check)
        emit(lam, trial, accepted)
        if accepted:
            return trial, lam, None
        lam /= 2
    return None, lam, last_error


@contextmanager
def _trace_stream(path: Optional[str]):
    if not path:
        yield None
        return
    with open(path, "w", encoding="utf-8") as f:
        yield f


def _solve_from(exterior, basis, q0, config: SolverConfig, cfg, stream, stage: int = 0):
    cur = _evaluate(exterior, basis, q0, None, cfg)
    trace, fuses, history = [], [], [cur.genus]
    iteration = [0]

    def emit(damping, trial, accepted, kind="newton"):
        entry = {
            "stage": stage,
            "iteration": iteration[0],
            "step": kind,
            "damping": damping,
            "accepted": bool(accepted),
            "zeta_norm": trial.zeta_norm if trial is not None else None,
            "F_check": trial.f_check if trial is not None else None,
            "genus": trial.genus if trial is not None else None,
        }
        trace.append(entry)
        if stream is not None:
            stream.write(json.dumps(to_jsonable(entry), sort_keys=True) + "\n")

    if not basis:
        logger.info("moduli space has dimension 0; the seed is returned")
        return cur, trace, fuses, history

    logger.info("solve: dimension %d, genus %s, max|zeta| %.3e", len(basis), cur.genus, cur.zeta_norm)
    while cur.zeta_norm > config.zeta_tolerance:
        if iteration[0] >= config.max_iterations:
            raise MaxIterations("Boutroux iteration did not converge", iterations=iteration[0],
                                zeta_norm=cur.zeta_norm, genus=cur.genus)
        iteration[0] += 1
        # nodes stay pinched: only directions vanishing at every node are admissible
        restrict = holomorphic_forms(cur.poly, cur.frame, basis)
        if restrict.shape[1] == 0:
            raise MaxIterations("no admissible directions left on this stratum", genus=cur.genus,
                                zeta_norm=cur.zeta_norm)
        kind = "newton"
        try:
            target = newton_step(cur.q, cur.frame, cur.jacobian, restrict)
        except SingularJacobian as exc:
            logger.warning("%s; taking a gradient step on F_check", exc)
            kind = "gradient"
            target = gradient_step(cur.q, cur.frame, cur.jacobian, restrict)
        trial, damping, error = _line_search(exterior, basis, cur, target, config, cfg,
                                             lambda lam, t, ok: emit(lam, t, ok, kind))
        if trial is None and kind == "newton":
            kind = "gradient"
            target = gradient_step(cur.q, cur.frame, cur.jacobian, restrict)
            trial, damping, error = _line_search(exterior, basis, cur, target, config, cfg,
                                                 lambda lam, t, ok: emit(lam, t, ok, kind))
        if trial is None:
            if isinstance(error, MarkingJump):
                raise error
            raise MaxIterations("line search stalled at the damping floor", iterations=iteration[0],
                                zeta_norm=cur.zeta_norm, floor=config.line_search_floor)
        if trial.genus is not None and cur.genus is not None and trial.genus < cur.genus:
            logger.warning("branch points fused at iteration %d: genus %d -> %d",
                           iteration[0], cur.genus, trial.genus)
            fuses.append({
                "iteration": iteration[0],
                "stage": stage,
                "from_genus": cur.genus,
                "to_genus": trial.genus,
                "nodes": list(trial.frame.model.nodes),
            })
        logger.debug("iteration %d: %s step, damping %.3g, max|zeta| %.3e, F_check %.12g",
                     iteration[0], kind, damping, trial.zeta_norm, trial.f_check)
        cur = trial
        history.append(cur.genus)
    return cur, trace, fuses, history


def _finish(exterior, basis, cur: _Iterate, config: SolverConfig, cfg, trace, fuses, history, support):
    frame = cur.frame
    if frame is not None and frame.genus and basis:
        try:
            frame, _ = evaluate_frame(cur.poly, frame, basis, cfg, with_tau=True)
        except (ImTauNotPositive, SingularNormalization) as exc:
            logger.warning("Riemann matrix unavailable at the solution: %s", exc)
    elif frame is None:
        logger.warning("genus is not computed for curves of degree %d in y", cur.poly.degree_y)
    energy = prepotential_energy(cur.poly, frame, all_expansions(cur.poly, cfg))
    return BoutrouxResult(
        poly=cur.poly,
        exterior=exterior,
        interior=cur.q,
        genus=cur.genus,
        zeta_residual=cur.zeta_norm,
        frame=frame,
        energy=energy,
        trace=tuple(trace),
        fuse_events=tuple(fuses),
        genus_history=tuple(history),
        support=support,
        config=config.to_dict(),
    )


def _blend(start: BivariatePolynomial, end: BivariatePolynomial, s: float) -> BivariatePolynomial:
    return start.scaled(1 - s) + end.scaled(s)


def _starts(config: SolverConfig, dim: int, cfg) -> List[np.ndarray]:
    q0 = np.zeros(dim, dtype=complex)
    if config.seed_interior:
        if len(config.seed_interior) != dim:
            raise InputError("seed interior has the wrong length", given=len(config.seed_interior), dimension=dim)
        q0 = np.array(config.seed_interior, dtype=complex)
    starts = [q0]
    rng = np.random.default_rng(cfg["basepoint_seed"])
    scale = 0.5 * (1.0 + float(np.linalg.norm(q0)))
    for _ in range(config.multi_start - 1):
        starts.append(q0 + scale * (rng.normal(size=dim) + 1j * rng.normal(size=dim)))
    return starts


def solve(exterior: BivariatePolynomial, settings: Optional[dict] = None, support=None,
          seed_interior: Optional[Sequence[complex]] = None, start_exterior: Optional[BivariatePolynomial] = None,
          trace_path: Optional[str] = None) -> BoutrouxResult:
    """
    Find the Boutroux member of the moduli space of an exterior

    Args:
        exterior (BivariatePolynomial): seed curve (Q = 0)
        settings (dict, optional): Active settings
        support (frozenset, optional): lattice support of the whole family
        seed_interior (list, optional): initial Q instead of zero
        start_exterior (BivariatePolynomial, optional): easy exterior of the same family
            for the homotopy when continuation_steps > 0
        trace_path (str, optional): JSON-lines iteration trace

    Returns:
        BoutrouxResult: the Boutroux curve with its frame and energies
    """
    cfg = _cfg(settings)
    config = SolverConfig.from_settings(cfg, seed_interior)
    basis = list(analyze(exterior, cfg, support).moduli_basis)
    if exterior.degree_y > 2 and basis:
        # the period frame is built from a hyperelliptic marking only
        raise NotHyperelliptic("the Boutroux solve needs a curve of degree 2 in y",
                               degree_y=exterior.degree_y, moduli=len(basis))
    check_real_residues(exterior, cfg)

    with _trace_stream(trace_path) as stream:
        starts = _starts(config, len(basis), cfg)
        if config.continuation_steps and start_exterior is not None and basis:
            q = starts[0]
            for k in range(config.continuation_steps):
                stage = _blend(start_exterior, exterior, k / config.continuation_steps)
                cur, *_ = _solve_from(stage, basis, q, config, cfg, stream, stage=k + 1)
                q = cur.q
                logger.info("continuation stage %d/%d done", k + 1, config.continuation_steps)
            starts = [q]

        best, failures = None, []
        for k, q0 in enumerate(starts):
            try:
                cur, trace, fuses, history = _solve_from(exterior, basis, q0, config, cfg, stream)
            except NumericalError as exc:
                logger.warning("start %d failed: %s", k, exc)
                failures.append(exc)
                continue
            if best is None or cur.f_check < best[0].f_check:
                best = (cur, trace, fuses, history)
        if best is None:
            raise failures[0]

    cur, trace, fuses, history = best
    result = _finish(exterior, basis, cur, config, cfg, trace, fuses, history, support)
    logger.info("Boutroux curve found: genus %s, max|zeta| %.3e", result.genus, result.zeta_residual)
    return result


# ---- Post-checks ----

def certificate(result: BoutrouxResult, settings: Optional[dict] = None) -> dict:
    """Independent residual with doubled quadrature order; passes within 10x the zeta tolerance."""
    cfg = dict(_cfg(settings))
    cfg["gauss_order"] = 2 * cfg["gauss_order"]
    residual = boutroux_residual(result.poly, cfg)
    limit = 10 * cfg["zeta_tolerance"]
    return {"residual": residual, "limit": limit, "passed": residual <= limit}


def isolation_probe(result: BoutrouxResult, settings: Optional[dict] = None, directions: int = 8,
                    size: float = 1e-3) -> dict:
    """
    Restart the solver from perturbed interior coefficients and measure how far it lands

    Returns:
        dict: max_shift = max ||Q_restart - Q||, passed when below 1e-6
    """
    cfg = dict(_cfg(settings))
    cfg["multi_start"] = 1
    cfg["continuation_steps"] = 0
    q = np.asarray(result.interior, dtype=complex)
    dim = len(q)
    if dim == 0:
        return {"directions": 0, "max_shift": 0.0, "passed": True}
    if dim == 1:
        offsets = [np.array([np.exp(2j * np.pi * k / directions)]) for k in range(directions)]
    else:
        rng = np.random.default_rng(cfg["basepoint_seed"])
        offsets = []
        for _ in range(directions):
            v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
            offsets.append(v / np.linalg.norm(v))
    shifts = []
    for v in offsets:
        again = solve(result.exterior, cfg, result.support, seed_interior=q + size * v)
        shifts.append(float(np.linalg.norm(again.interior - q)))
    max_shift = max(shifts)
    return {"directions": directions, "max_shift": max_shift, "passed": max_shift < 1e-6}
