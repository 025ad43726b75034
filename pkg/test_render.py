"""
SVG rendering tests: deterministic output, one group per edge, viewport.
Run from project root:
  pytest test_render.py
"""
import os
import sys

PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, PROJECT_ROOT)

import numpy as np
import pytest

from errors import InputError
from families import degenerate_weierstrass
from formats import to_jsonable
from network import build_first_kind
from render import render_svg, viewport


@pytest.fixture(scope="module")
def nodal_doc():
    return to_jsonable(build_first_kind(degenerate_weierstrass(1.0)).to_dict())


def test_empty_document_renders_axes_only():
    svg = render_svg({})
    assert svg.startswith("<?xml")
    assert "<svg" in svg
    assert 'id="edge-' not in svg


def test_viewport_defaults_to_unit_square():
    assert viewport([np.zeros(0)]) == (-1.0, 1.0, -1.0, 1.0)


def test_viewport_margin():
    x0, x1, y0, y1 = viewport([np.array([0.0, 2.0 + 1.0j])])
    assert (x0, x1) == pytest.approx((-0.2, 2.2))
    assert (y0, y1) == pytest.approx((-0.2, 1.2))


def test_nodal_network_draws_every_edge(nodal_doc):
    svg = render_svg(nodal_doc)
    for k in range(len(nodal_doc["edges"])):
        assert f'id="edge-{k}"' in svg
    assert f'id="edge-{len(nodal_doc["edges"])}"' not in svg
    assert svg.count('id="edge-') == 14


def test_rendering_is_deterministic(nodal_doc):
    assert render_svg(nodal_doc) == render_svg(nodal_doc)


def test_network_wrapped_in_application_document(nodal_doc):
    assert render_svg({"network": nodal_doc}).count('id="edge-') == 14


def test_equilibrium_document_draws_density():
    doc = {
        "potential": [0.0, 0.5],
        "support": [{"edge": 0, "points": [-2.0, 0.0, 2.0], "density": [0.0, 1 / np.pi, 0.0], "mass": 1.0}],
        "network": {"kind": "second", "edges": [{"points": [-2.0, 2.0], "start": []}], "vertices": []},
    }
    svg = render_svg(doc)
    assert 'id="density-0"' in svg
    assert 'id="edge-0"' in svg


def test_unknown_document_rejected():
    with pytest.raises(InputError):
        render_svg({"hello": "world"})
