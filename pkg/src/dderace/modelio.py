"""Model documents (JSON) and report serialization."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .core import (
    ArmamentMatrix,
    CoefficientSignal,
    ConstantMatrix,
    CubicHostility,
    HistoryFunction,
    HostilityBound,
    MatrixFunction,
    MatrixTable,
    ModelError,
    TimeVaryingMatrix,
)


@dataclass(frozen=True)
class Model:
    matrix: ArmamentMatrix | MatrixFunction
    cubic: CubicHostility
    bound: HostilityBound | None
    delay: float | None
    history: dict | None
    envelopes: tuple[CoefficientSignal, CoefficientSignal] | None
    delta_bound: float | None

    @property
    def constant(self) -> ArmamentMatrix:
        if not isinstance(self.matrix, ArmamentMatrix):
            raise ModelError("this command needs a constant 2x2 matrix ('matrix.constant')")
        return self.matrix

    def matrix_function(self) -> MatrixFunction:
        if isinstance(self.matrix, ArmamentMatrix):
            return TimeVaryingMatrix.constant(self.matrix)
        return self.matrix

    def race_matrix(self) -> TimeVaryingMatrix:
        M = self.matrix_function()
        if not isinstance(M, TimeVaryingMatrix):
            raise ModelError("this command needs a 2x2 race matrix ('constant' or 'signals')")
        return M

    def history_for(self, tau: float, dim: int) -> HistoryFunction:
        if self.history is None:
            return HistoryFunction.constant(tau, np.full(dim, 0.1))
        h = HistoryFunction.from_dict(tau, self.history)
        if h.dim != dim:
            raise ModelError(f"history has dimension {h.dim}, model has {dim}")
        return h


def _need(obj: Any, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise ModelError(f"{where}: missing field '{key}'")
    return obj[key]


def parse_matrix(spec: Any):
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ModelError("'matrix' must hold exactly one of: constant, signals, dense, table")
    (kind, body), = spec.items()
    if kind == "constant":
        return ArmamentMatrix(*(_need(body, f, "matrix.constant") for f in "abkl"))
    if kind == "signals":
        sigs = []
        for f in "abkl":
            sig = CoefficientSignal.from_dict(_need(body, f, "matrix.signals"))
            if sig.analytic_min() < 0:
                raise ModelError(f"signal {f} takes negative values")
            sigs.append(sig)
        return TimeVaryingMatrix(*sigs)
    if kind == "dense":
        return ConstantMatrix(body)
    if kind == "table":
        return MatrixTable(_need(body, "t", "matrix.table"), _need(body, "values", "matrix.table"))
    raise ModelError(f"unknown matrix kind {kind!r}")


def parse_model(doc: Any) -> Model:
    try:
        return _parse_model(doc)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(str(exc)) from exc


def _parse_model(doc: Any) -> Model:
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")
    matrix = parse_matrix(_need(doc, "matrix", "model"))
    quad = doc.get("hostility_quadratic")
    if quad and any(float(v) != 0 for v in dict(quad).values()):
        raise ModelError(
            "quadratic hostility terms are not supported: they feed the cubic normal-form "
            "coefficient through a longer computation that is not implemented"
        )
    cubic_doc = doc.get("hostility_cubic") or {}
    unknown = set(cubic_doc) - {"g30", "g21", "g12", "g03", "h30", "h21", "h12", "h03"}
    if unknown:
        raise ModelError(f"unknown cubic coefficients {sorted(unknown)}")
    cubic = CubicHostility(**cubic_doc)
    bound = None
    if doc.get("hostility_bound") is not None:
        b = doc["hostility_bound"]
        bound = HostilityBound(_need(b, "b1bar", "hostility_bound"), _need(b, "b2bar", "hostility_bound"))
    delay = doc.get("delay")
    if delay is not None:
        delay = float(delay)
        if not (delay > 0 and math.isfinite(delay)):
            raise ModelError(f"delay must be positive, got {delay}")
    envelopes = None
    if doc.get("hostility_envelope") is not None:
        env = doc["hostility_envelope"]
        envelopes = (CoefficientSignal.from_dict(_need(env, "G", "hostility_envelope")),
                     CoefficientSignal.from_dict(_need(env, "H", "hostility_envelope")))
        if any(e.analytic_min() < 0 for e in envelopes):
            raise ModelError("hostility envelopes must be nonnegative")
    delta = doc.get("delta_bound")
    if delta is not None:
        delta = float(delta)
        if delta < 0:
            raise ModelError("delta_bound must be nonnegative")
    history = doc.get("history")
    if history is not None and not isinstance(history, dict):
        raise ModelError("'history' must be an object")
    return Model(matrix, cubic, bound, delay, history, envelopes, delta)


def load_model(path) -> Model:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ModelError(f"{path}: cannot read model ({exc})") from exc
    return parse_model(doc)


def _plain(obj):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, complex):
        return {"re": _plain(obj.real), "im": _plain(obj.imag)}
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(_plain(report), indent=2, sort_keys=True) + "\n"


def write_report(report: dict, path) -> None:
    Path(path).write_text(dumps_report(report))
