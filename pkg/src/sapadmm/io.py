"""JSON file formats for problems, portfolio specs and results.

Infinite values are written as the strings ``"inf"`` and ``"-inf"``.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInput
from .pwq import PiecewiseQuadratic
from .sap import SapProblem, Scaling

SAP_FORMAT = "sap/1"
PORTFOLIO_FORMAT = "portfolio/1"


class FileError(InvalidInput):
    """Malformed input file; the message names the offending line or field."""


def read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise FileError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise FileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise FileError(f"{path}: top level must be an object")
    return data


def dumps(obj: Any) -> str:
    """Canonical text form: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def encode_number(v):
    if v is None:
        return None
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _vector(data, field: str) -> np.ndarray:
    try:
        v = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FileError(f"field '{field}': expected a list of numbers") from exc
    if v.ndim != 1:
        raise FileError(f"field '{field}': expected a flat list")
    return v


def _matrix(data, field: str = "A"):
    if not isinstance(data, dict):
        raise FileError(f"field '{field}': expected an object with 'dense' or 'triplets'")
    if "dense" in data:
        try:
            A = np.asarray(data["dense"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise FileError(f"field '{field}.dense': expected rows of numbers") from exc
        if A.ndim != 2:
            raise FileError(f"field '{field}.dense': expected a list of equal-length rows")
        return A
    if "triplets" in data:
        try:
            m, n = (int(v) for v in data["shape"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FileError(f"field '{field}.shape': expected [rows, cols]") from exc
        rows, cols, vals = [], [], []
        for k, t in enumerate(data["triplets"]):
            try:
                i, j, v = int(t[0]), int(t[1]), float(t[2])
            except (TypeError, ValueError, IndexError) as exc:
                raise FileError(f"field '{field}.triplets[{k}]': expected [i, j, value]") from exc
            if not (0 <= i < m and 0 <= j < n):
                raise FileError(f"field '{field}.triplets[{k}]': index out of range")
            rows.append(i)
            cols.append(j)
            vals.append(v)
        return sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
    raise FileError(f"field '{field}': expected 'dense' or 'triplets'")


def problem_from_dict(data: dict) -> tuple[SapProblem, Scaling | None]:
    if data.get("format") != SAP_FORMAT:
        raise FileError(f"field 'format': expected '{SAP_FORMAT}'")
    for name in ("A", "b", "functions"):
        if name not in data:
            raise FileError(f"missing field '{name}'")
    A = _matrix(data["A"])
    b = _vector(data["b"], "b")
    funcs = []
    for i, items in enumerate(data["functions"]):
        if not isinstance(items, list):
            raise FileError(f"field 'functions[{i}]': expected a list of pieces")
        try:
            funcs.append(PiecewiseQuadratic.from_list(items))
        except InvalidInput as exc:
            raise FileError(f"field 'functions[{i}]': {exc}") from exc
    try:
        problem = SapProblem(A, b, funcs)
    except InvalidInput as exc:
        raise FileError(str(exc)) from exc
    scaling = None
    if data.get("scaling") is not None:
        sc = data["scaling"]
        try:
            scaling = Scaling(_vector(sc["d"], "scaling.d"), _vector(sc["e"], "scaling.e"))
            scaling.check(problem)
        except (KeyError, InvalidInput) as exc:
            raise FileError(f"field 'scaling': {exc}") from exc
    return problem, scaling


def problem_to_dict(p: SapProblem, scaling: Scaling | None = None) -> dict:
    if p.is_sparse:
        coo = p.A.tocoo()
        order = np.lexsort((coo.col, coo.row))
        A = {
            "shape": [p.m, p.n],
            "triplets": [[int(coo.row[k]), int(coo.col[k]), float(coo.data[k])] for k in order],
        }
    else:
        A = {"dense": p.A.tolist()}
    out = {
        "format": SAP_FORMAT,
        "A": A,
        "b": p.b.tolist(),
        "functions": [f.to_list() for f in p.f],
    }
    if scaling is not None:
        out["scaling"] = {"d": scaling.d.tolist(), "e": scaling.e.tolist()}
    return out


def result_to_dict(res, options: dict | None = None, runtime: float | None = None, **extra) -> dict:
    x = None if res.x_best is None else [encode_number(v) for v in res.x_best]
    out = {
        "x_best": x,
        "o_best": encode_number(res.o_best),
        "d_star": encode_number(res.d_star),
        "gap": encode_number(res.gap),
        "residual": encode_number(res.residual_at_best),
        "iterations": int(res.iterations),
        "status": res.status,
        "runtime_ms": 1000.0 * (res.wall_time if runtime is None else runtime),
        "options": options or {},
    }
    out.update(extra)
    return out
