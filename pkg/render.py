"""
SVG drawings of result documents: spectral networks in the x-plane and equilibrium densities.

Works on the JSON documents the CLI writes, so a stored result can be drawn without
recomputing anything.
"""
import io
import logging
from typing import List, Optional, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

from errors import InputError  # noqa: E402
from formats import complex_from_json  # noqa: E402

logger = logging.getLogger(__name__)

MARGIN = 0.1
SVG_STYLE = {
    "svg.hashsalt": "boutroux",
    "svg.fonttype": "none",
    "figure.figsize": (6.0, 6.0),
}


def _points(values) -> np.ndarray:
    return np.array([complex_from_json(v) for v in values or []], dtype=complex)


def _puncture_x(label: str) -> Optional[complex]:
    where = label.split(":")[0]
    if where == "inf":
        return None
    try:
        return complex(where)
    except ValueError:
        return None


def viewport(arrays: List[np.ndarray]) -> Tuple[float, float, float, float]:
    """Bounding box of all points plus a 10% margin; the unit square when there is nothing to draw."""
    pts = np.concatenate([a for a in arrays if len(a)]) if any(len(a) for a in arrays) else np.zeros(0)
    pts = pts[np.isfinite(pts)]
    if not len(pts):
        return -1.0, 1.0, -1.0, 1.0
    x0, x1 = float(pts.real.min()), float(pts.real.max())
    y0, y1 = float(pts.imag.min()), float(pts.imag.max())
    pad = MARGIN * max(x1 - x0, y1 - y0, 1e-9)
    return x0 - pad, x1 + pad, y0 - pad, y1 + pad


def _draw_network(ax, doc: dict) -> None:
    vertices = doc.get("vertices", [])
    seeds = [v for v in vertices if v.get("vertex") == "seed"]
    seed_xs = _points([v["x"] for v in seeds])
    punctures = [_puncture_x(v["label"]) for v in vertices if v.get("vertex") == "puncture"]
    puncture_xs = np.array([p for p in punctures if p is not None], dtype=complex)
    edges = doc.get("edges", [])
    lines = [_points(e["points"]) for e in edges]
    colors = plt.get_cmap("tab10")
    dashed = doc.get("kind") == "second"

    x0, x1, y0, y1 = viewport(lines + [seed_xs, puncture_xs])
    ax.set_xlim(x0, x1)
    ax.set_ylim(y0, y1)
    ax.set_aspect("equal")
    ax.axhline(0.0, color="0.85", lw=0.5, zorder=0)
    ax.axvline(0.0, color="0.85", lw=0.5, zorder=0)

    for k, (edge, xs) in enumerate(zip(edges, lines)):
        start = edge.get("start") or []
        sheet = seeds[start[1]]["sheet"] if start and start[0] == "seed" and start[1] < len(seeds) else 0
        (line,) = ax.plot(xs.real, xs.imag, color=colors(sheet % 10), lw=0.8, ls="--" if dashed else "-")
        line.set_gid(f"edge-{k}")

    measures = doc.get("measures", [])
    peak = max([float(np.max(np.abs(m["density"]))) for m in measures if len(m["density"])] + [0.0])
    for m in measures:
        xs = _points(m["points"])
        if len(xs) < 2 or peak <= 0:
            continue
        rho = np.abs(np.asarray(m["density"], dtype=float))
        segments = np.stack([np.column_stack([xs.real[:-1], xs.imag[:-1]]),
                             np.column_stack([xs.real[1:], xs.imag[1:]])], axis=1)
        widths = 0.5 + 4.0 * (rho[:-1] + rho[1:]) / (2 * peak)
        collection = LineCollection(segments, linewidths=widths, colors="black")
        collection.set_gid(f"measure-{m['edge']}")
        ax.add_collection(collection)

    for k, x in enumerate(seed_xs):
        (dot,) = ax.plot([x.real], [x.imag], "o", color="black", ms=4)
        dot.set_gid(f"vertex-{k}")
    for k, x in enumerate(puncture_xs):
        (cross,) = ax.plot([x.real], [x.imag], "x", color="crimson", ms=6)
        cross.set_gid(f"puncture-{k}")
    ax.set_xlabel("Re x")
    ax.set_ylabel("Im x")


def _draw_density(ax, doc: dict) -> None:
    for arc in doc.get("support", []):
        xs = _points(arc["points"])
        rho = np.asarray(arc["density"], dtype=float)
        if np.max(np.abs(xs.imag), initial=0.0) < 1e-9:
            t, label = xs.real, "x"
        else:
            t, label = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(xs)))]), "arc length"
        (line,) = ax.plot(t, rho, color="black", lw=1.0)
        line.set_gid(f"density-{arc['edge']}")
        ax.set_xlabel(label)
    ax.set_ylabel("density")


def render_svg(doc: dict) -> str:
    """
    Deterministic SVG of a network graph, a Strebel graph or an equilibrium package

    Args:
        doc (dict): JSON document as written by the CLI

    Returns:
        str: SVG text
    """
    if "support" in doc and "potential" in doc:
        network, density = doc.get("network", {}), doc
    elif "network" in doc:
        network, density = doc["network"], None
    elif "edges" in doc or "vertices" in doc or not doc:
        network, density = doc, None
    else:
        raise InputError("document is neither a network nor an equilibrium package", keys=sorted(doc))

    with plt.rc_context(SVG_STYLE):
        if density is None:
            fig, ax = plt.subplots()
            _draw_network(ax, network)
        else:
            fig, (ax, bx) = plt.subplots(1, 2, figsize=(12.0, 6.0))
            _draw_network(ax, network)
            _draw_density(bx, density)
        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
        plt.close(fig)
    logger.debug("rendered %d edges", len(network.get("edges", [])))
    return buffer.getvalue()
