"""
Command-line entry point of the Boutroux toolkit.

Subcommands: polygon, solve, network, strebel, mm1, energy, check, render.
Results are JSON (stdout or --output), errors are JSON on stderr, and every run is
registered in runs.db with its settings, stage timings and artifacts.

Exit codes: 0 success, 1 input error, 2 numerical failure, 3 audit failure.
"""
import argparse
import logging
import sys
from dataclasses import dataclass
from typing import List, Optional

from apps import StrebelProblem, g_function_export, mm1_equilibrium, strebel
from audits import run_checks
from curve import base_point, critical_set
from database_setup import DB_PATH
from energy import energy_report
from errors import AuditError, AuditFailed, BoutrouxError, InputError, NumericalError
from families import (
    degenerate_weierstrass,
    one_matrix,
    one_matrix_support,
    parse_potential,
    strebel_exterior,
    strebel_support,
    weierstrass,
)
from formats import (
    complex_from_json,
    digest,
    dumps,
    polynomial_from_json,
    polynomial_to_json,
    read_json,
    to_jsonable,
    validate,
    write_json,
)
from network import build_first_kind, build_second_kind
from polygon import polygon_report
from render import render_svg
import run_store
from settings import detect_context, get_active_settings, get_adaptation_log_message
from solver import solve

logger = logging.getLogger("boutroux")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2
EXIT_AUDIT = 3


@dataclass
class RunContext:
    command: str
    db_path: str
    run_id: Optional[int] = None
    contours: Optional[list] = None

    def stage(self, name: str):
        return run_store.timed_stage(self.run_id, name, self.db_path)

    def artifact(self, kind: str, path: str, text: Optional[str] = None) -> None:
        if self.run_id is not None:
            run_store.record_artifact(self.run_id, kind, path, digest(text) if text else None, self.db_path)


# ---- Inputs ----

def _status(message: str) -> None:
    print(message, file=sys.stderr)


def _complex_list(text: Optional[str]) -> Optional[List[complex]]:
    if not text:
        return None
    try:
        return [complex(part.strip().replace(" ", "")) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise InputError("expected comma-separated complex numbers", value=text) from exc


def _float_list(text: Optional[str]) -> Optional[List[float]]:
    if not text:
        return None
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise InputError("expected comma-separated numbers", value=text) from exc


def load_curve(args):
    """
    Curve from --input (terms, family description or any result document carrying a polynomial)
    and the family flags

    Returns:
        tuple: (BivariatePolynomial, family support or None, the input document)
    """
    doc = read_json(args.input) if getattr(args, "input", None) else {}
    if "polynomial" in doc:
        doc = doc["polynomial"]
    if getattr(args, "g2", None) is not None and "terms" not in doc:
        doc = dict(doc, family=doc.get("family", "weierstrass"), g2=to_jsonable(args.g2))
        if getattr(args, "g3", None) is not None:
            doc["g3"] = to_jsonable(args.g3)
    if not doc:
        raise InputError("give a curve with --input or a Weierstrass curve with --g2")
    validate(doc, "curve_input")
    if "terms" in doc:
        poly, support = polynomial_from_json(doc)
        return poly, support, doc
    family = doc["family"]
    if family == "weierstrass":
        return weierstrass(complex_from_json(doc.get("g2", 0.0)), complex_from_json(doc.get("g3", 0.0))), None, doc
    if family == "degenerate_weierstrass":
        return degenerate_weierstrass(float(doc.get("u", 1.0))), None, doc
    if family == "strebel":
        points = [complex_from_json(z) for z in doc.get("points", [])]
        return strebel_exterior(points, doc.get("perimeters", [])), strebel_support(len(points)), doc
    potential = doc.get("potential", [])
    return one_matrix(potential), one_matrix_support(potential), doc


def active_settings(args, ctx: RunContext, poly=None) -> dict:
    overrides = read_json(args.config) if args.config else None
    if overrides is not None and not isinstance(overrides, dict):
        raise InputError("the config file must hold a JSON object", path=args.config)
    context = detect_context(poly) if poly is not None else None
    settings = get_active_settings(overrides, context)
    message = get_adaptation_log_message(settings)
    if message:
        _status(message)
    if ctx.run_id is not None:
        run_store.set_config(ctx.run_id, settings, ctx.db_path)
    return settings


def emit(doc, args, ctx: RunContext, schema: Optional[str]) -> str:
    """Validate and write a result document to --output or stdout."""
    if args.output:
        text = write_json(doc, args.output, schema)
        ctx.artifact("result", args.output, text)
    else:
        plain = to_jsonable(doc)
        if schema:
            validate(plain, schema)
        text = dumps(plain)
        sys.stdout.write(text)
    return text


# ---- Commands ----

def cmd_polygon(args, ctx: RunContext) -> int:
    poly, support, _ = load_curve(args)
    settings = active_settings(args, ctx, poly)
    with ctx.stage("polygon"):
        report = polygon_report(poly, settings, support)
    emit(report, args, ctx, "polygon_report")
    _status(f"moduli dimension {report['moduli_dimension']}, {len(report['punctures'])} punctures")
    return EXIT_OK


def cmd_solve(args, ctx: RunContext) -> int:
    poly, support, _ = load_curve(args)
    settings = active_settings(args, ctx, poly)
    with ctx.stage("solve"):
        result = solve(poly, settings, support, seed_interior=_complex_list(args.seed_interior),
                       trace_path=args.trace)
    if args.trace:
        ctx.artifact("trace", args.trace)
    if ctx.run_id is not None:
        crit = critical_set(result.poly, settings)
        run_store.set_base_points(ctx.run_id, [base_point(result.poly, crit, settings["basepoint_seed"])[0]],
                                  ctx.db_path)
    if result.frame is not None:
        ctx.contours = result.frame.to_dict()["contours"]
    emit(result.to_dict(), args, ctx, "solver_result")
    _status(f"genus {result.genus}, max|zeta| {result.zeta_residual:.3e}, F_check {result.energy.F_check}")
    return EXIT_OK


def cmd_network(args, ctx: RunContext) -> int:
    poly, support, _ = load_curve(args)
    settings = active_settings(args, ctx, poly)
    with ctx.stage(f"network_{args.kind}"):
        graph = build_first_kind(poly, settings) if args.kind == "first" else build_second_kind(poly, settings)
    doc = dict(graph.to_dict(), polynomial=polynomial_to_json(poly, support))
    emit(doc, args, ctx, "network_graph")
    _status(f"{len(graph.edges)} edges, faces {graph.face_counts()}")
    return EXIT_OK


def cmd_strebel(args, ctx: RunContext) -> int:
    if args.input:
        problem = StrebelProblem.from_dict(read_json(args.input, "strebel_problem"))
    else:
        points, perimeters = _complex_list(args.points), _float_list(args.perimeters)
        if points is None:
            raise InputError("give a problem with --input or --points")
        problem = StrebelProblem(tuple(points), tuple(perimeters or [1.0] * len(points)))
    settings = active_settings(args, ctx, problem.exterior())
    with ctx.stage("strebel"):
        graph = strebel(problem, settings)
    if graph.result.frame is not None:
        ctx.contours = graph.result.frame.to_dict()["contours"]
    emit(graph.to_dict(), args, ctx, "strebel_graph")
    _status(f"{len(graph.faces)} faces, edge lengths {[round(v, 6) for v in graph.edge_lengths]}")
    return EXIT_OK


def cmd_mm1(args, ctx: RunContext) -> int:
    seed = _complex_list(args.seed_interior)
    if args.input:
        problem = read_json(args.input, "mm1_problem")
        potential = problem["potential"]
        if seed is None and problem.get("seed_interior"):
            seed = [complex_from_json(q) for q in problem["seed_interior"]]
    elif args.potential:
        potential = parse_potential(args.potential)
    else:
        raise InputError("give a potential with --potential or --input")
    settings = active_settings(args, ctx, one_matrix(potential))
    with ctx.stage("mm1"):
        pkg = mm1_equilibrium(potential, settings, seed_interior=seed)
    if pkg.result.frame is not None:
        ctx.contours = pkg.result.frame.to_dict()["contours"]
    emit(pkg.to_dict(), args, ctx, "equilibrium_package")
    if args.g_function:
        with ctx.stage("g_function"):
            text = write_json(g_function_export(pkg), args.g_function, "g_function")
        ctx.artifact("g_function", args.g_function, text)
    if args.svg:
        svg = render_svg(to_jsonable(pkg.to_dict()))
        with open(args.svg, "w", encoding="utf-8") as f:
            f.write(svg)
        ctx.artifact("svg", args.svg, svg)
    _status(f"{len(pkg.arcs)} cuts, mass {pkg.mass:.10f}, F {pkg.energy['F_functional']:.8f}")
    return EXIT_OK


def cmd_energy(args, ctx: RunContext) -> int:
    poly, support, _ = load_curve(args)
    settings = active_settings(args, ctx, poly)
    with ctx.stage("energy"):
        report = energy_report(poly, settings, support, with_area=not args.no_area, radius_check=args.radius_check)
    emit(report.to_dict(), args, ctx, "energy_report")
    _status(f"F_check {report.F_check}, F_area {report.F_area}, difference {report.difference}")
    return EXIT_OK


def cmd_check(args, ctx: RunContext) -> int:
    if not args.input:
        raise InputError("check needs --input")
    doc = read_json(args.input)
    settings = active_settings(args, ctx)
    with ctx.stage("check"):
        report = run_checks(doc, settings, isolation=not args.no_isolation)
    emit(report, args, ctx, "check_report")
    failed = [c["check"] for c in report["checks"] if not c["passed"]]
    if failed:
        raise AuditFailed("invariant checks failed", checks=failed)
    _status(f"{len(report['checks'])} checks passed")
    return EXIT_OK


def cmd_render(args, ctx: RunContext) -> int:
    if not args.input:
        raise InputError("render needs --input")
    doc = read_json(args.input)
    with ctx.stage("render"):
        svg = render_svg(doc)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(svg)
        ctx.artifact("svg", args.output, svg)
    else:
        sys.stdout.write(svg)
    return EXIT_OK


COMMANDS = {
    "polygon": cmd_polygon,
    "solve": cmd_solve,
    "network": cmd_network,
    "strebel": cmd_strebel,
    "mm1": cmd_mm1,
    "energy": cmd_energy,
    "check": cmd_check,
    "render": cmd_render,
}


# ---- Parser ----

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", "-i", help="Input JSON file")
    common.add_argument("--output", "-o", help="Output file (default: stdout)")
    common.add_argument("--config", help="JSON file of setting overrides")
    common.add_argument("--db", default=DB_PATH, help="Path to the run registry (runs.db)")
    common.add_argument("--manifest", help="Write the run manifest JSON here")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")

    curve = argparse.ArgumentParser(add_help=False)
    curve.add_argument("--g2", type=complex, help="Weierstrass g2 (family input)")
    curve.add_argument("--g3", type=complex, help="Weierstrass g3 (family input)")

    parser = argparse.ArgumentParser(prog="boutroux", description="Boutroux curves, spectral networks and "
                                                                   "equilibrium measures")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("polygon", parents=[common, curve], help="Newton polygon analysis report")
    p = sub.add_parser("solve", parents=[common, curve], help="Boutroux curve from an exterior")
    p.add_argument("--trace", help="JSON-lines iteration trace")
    p.add_argument("--seed-interior", help="Comma-separated start coefficients in the moduli basis")
    p = sub.add_parser("network", parents=[common, curve], help="Spectral network of a curve")
    p.add_argument("--kind", choices=["first", "second"], default="first")
    p = sub.add_parser("strebel", parents=[common], help="Strebel graph of a marked sphere")
    p.add_argument("--points", help="Comma-separated complex marked points, e.g. 0,1,0.5+1j")
    p.add_argument("--perimeters", help="Comma-separated perimeter parameters (default all 1)")
    p = sub.add_parser("mm1", parents=[common], help="One-matrix model equilibrium measure")
    p.add_argument("--potential", help='Comma-separated v_k of V = sum v_k x^k, e.g. "0,0.5"')
    p.add_argument("--seed-interior", help="Comma-separated start coefficients in the moduli basis")
    p.add_argument("--g-function", help="Also write the g-function export here")
    p.add_argument("--svg", help="Also draw the network and density here")
    p = sub.add_parser("energy", parents=[common, curve], help="F_check against the regularized area")
    p.add_argument("--no-area", action="store_true", help="Skip the surface quadrature")
    p.add_argument("--radius-check", action="store_true", help="Recompute the area with halved radii")
    p = sub.add_parser("check", parents=[common], help="Invariant suite on a result file")
    p.add_argument("--no-isolation", action="store_true", help="Skip the solver restarts")
    sub.add_parser("render", parents=[common], help="SVG drawing of a result file")
    return parser


def _fail(exc: BoutrouxError, code: int) -> int:
    sys.stderr.write(dumps(exc.to_dict()))
    return code


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    ctx = RunContext(args.command, args.db)
    try:
        if args.input:
            with open(args.input, encoding="utf-8") as f:
                input_text = f.read()
        else:
            input_text = dumps({k: v for k, v in vars(args).items() if k not in ("db", "verbose")})
    except OSError as exc:
        return _fail(InputError("input file not readable", path=args.input, error=str(exc)), EXIT_INPUT)
    defaults = get_active_settings()
    ctx.run_id = run_store.start_run(args.command, digest(input_text), defaults,
                                     seeds={"basepoint_seed": defaults["basepoint_seed"]}, db_path=args.db)
    logger.info("run %d: %s", ctx.run_id, args.command)
    # anything unexpected leaves the run marked as a numerical failure
    code = EXIT_NUMERICAL
    try:
        code = COMMANDS[args.command](args, ctx)
    except InputError as exc:
        code = _fail(exc, EXIT_INPUT)
    except NumericalError as exc:
        code = _fail(exc, EXIT_NUMERICAL)
    except AuditError as exc:
        code = _fail(exc, EXIT_AUDIT)
    finally:
        run_store.finish_run(ctx.run_id, code, args.db)
    logger.info("run %d finished with exit code %d", ctx.run_id, code)
    if args.manifest:
        manifest = run_store.build_manifest(ctx.run_id, ctx.contours, args.db)
        text = write_json(manifest, args.manifest, "run_manifest")
        run_store.record_artifact(ctx.run_id, "manifest", args.manifest, digest(text), args.db)
    return code


if __name__ == "__main__":
    sys.exit(main())
