"""
JSON formats: complex numbers as {"re", "im"}, polynomials as term lists,
deterministic dumps (sorted keys, shortest round-trip floats, two-space indent)
and schema validation against the documents in schemas/.
"""
import hashlib
import json
import logging
import os
from typing import Any, Dict, Optional, Tuple

import jsonschema
import numpy as np

from errors import InputError, SchemaError
from polygon import BivariatePolynomial

logger = logging.getLogger(__name__)

SCHEMA_DIR = os.path.join(os.path.dirname(__file__), "schemas")

_schema_cache: Dict[str, dict] = {}


# ---- Plain values ----

def complex_to_json(z) -> Dict[str, float]:
    z = complex(z)
    return {"re": float(z.real), "im": float(z.imag)}


def complex_from_json(doc) -> complex:
    if isinstance(doc, (int, float, complex, np.number)):
        return complex(doc)
    return complex(doc["re"], doc.get("im", 0.0))


def to_jsonable(value: Any) -> Any:
    """Recursively turn numpy / complex / tuple values into JSON-ready objects."""
    if isinstance(value, (complex, np.complexfloating)):
        return complex_to_json(value)
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = sorted(value) if isinstance(value, (set, frozenset)) else value
        return [to_jsonable(v) for v in items]
    return value


# ---- Polynomials ----

def polynomial_to_json(poly: BivariatePolynomial, support=None) -> dict:
    doc = {
        "terms": [
            {"i": i, "j": j, "re": float(c.real), "im": float(c.imag)}
            for (i, j), c in sorted(poly.terms.items())
        ]
    }
    if support is not None:
        doc["support"] = [[i, j] for i, j in sorted(support)]
    return doc


def polynomial_from_json(doc: dict) -> Tuple[BivariatePolynomial, Optional[frozenset]]:
    """Returns the polynomial and the optional family support."""
    validate(doc, "polynomial")
    terms = {}
    for t in doc["terms"]:
        key = (int(t["i"]), int(t["j"]))
        terms[key] = terms.get(key, 0) + complex(t["re"], t.get("im", 0.0))
    support = doc.get("support")
    if support is not None:
        support = frozenset((int(i), int(j)) for i, j in support)
    return BivariatePolynomial.from_terms(terms), support


# ---- Files ----

def dumps(doc: Any) -> str:
    return json.dumps(to_jsonable(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(doc: Any, path: str, schema: Optional[str] = None) -> str:
    """Validate (optionally) and write deterministically; returns the written text."""
    plain = to_jsonable(doc)
    if schema:
        validate(plain, schema)
    text = dumps(plain)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    logger.debug("wrote %s", path)
    return text


def read_json(path: str, schema: Optional[str] = None) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except FileNotFoundError as exc:
        raise InputError("input file not found", path=path) from exc
    except json.JSONDecodeError as exc:
        raise InputError("input file is not valid JSON", path=path, error=str(exc)) from exc
    if schema:
        validate(doc, schema)
    return doc


def digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---- Schemas ----

def load_schema(name: str) -> dict:
    if name not in _schema_cache:
        path = os.path.join(SCHEMA_DIR, f"{name}.json")
        with open(path, "r", encoding="utf-8") as f:
            _schema_cache[name] = json.load(f)
    return _schema_cache[name]


def validate(doc: Any, name: str) -> None:
    """Raise SchemaError when doc does not match schemas/<name>.json."""
    schema = load_schema(name)
    try:
        jsonschema.validate(instance=doc, schema=schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise SchemaError(f"{name} document is invalid: {exc.message}", schema=name, path=path) from exc
