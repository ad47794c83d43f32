"""Model data shared by every analysis.

Constant and time-varying armament matrices, cubic hostility coefficients,
coefficient signals, p-dimensional matrix functions and initial histories.
All objects are immutable after construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np


class ModelError(ValueError):
    """Model data violates a structural invariant."""


class DomainError(ValueError):
    """A signal was evaluated outside the interval where it is defined."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (divergence, non-convergence)."""


# tolerance used when deciding if a time lies inside a table grid
_GRID_SLACK = 1e-12


def _as_float(name: str, value: Any) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{name} must be a real number, got {value!r}") from exc
    if not math.isfinite(out):
        raise ModelError(f"{name} must be finite, got {out}")
    return out


@dataclass(frozen=True)
class ArmamentMatrix:
    """Constant matrix ``[[-a, k], [l, -b]]``."""

    a: float
    b: float
    k: float
    l: float

    def __post_init__(self):
        for name in ("a", "b", "k", "l"):
            object.__setattr__(self, name, _as_float(name, getattr(self, name)))
        if self.a <= 0 or self.b <= 0:
            raise ModelError(f"a and b must be positive (a={self.a}, b={self.b})")
        if self.k < 0 or self.l < 0:
            raise ModelError(f"k and l must be nonnegative (k={self.k}, l={self.l})")

    def determinant(self) -> float:
        return self.a * self.b - self.k * self.l

    @property
    def m_matrix_regime(self) -> bool:
        return self.determinant() > 0

    @property
    def trace_sum(self) -> float:
        """a + b, i.e. minus the trace."""
        return self.a + self.b

    def discriminant(self) -> float:
        # (a+b)^2 - 4 det A written without cancellation
        return (self.a - self.b) ** 2 + 4.0 * self.k * self.l

    def as_array(self) -> np.ndarray:
        return np.array([[-self.a, self.k], [self.l, -self.b]])

    def swapped(self) -> "ArmamentMatrix":
        """Same model with the two countries relabelled."""
        return ArmamentMatrix(a=self.b, b=self.a, k=self.l, l=self.k)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "k": self.k, "l": self.l}


_CUBIC_FIELDS = ("g30", "g21", "g12", "g03", "h30", "h21", "h12", "h03")


@dataclass(frozen=True)
class CubicHostility:
    """Third derivatives at the origin of the hostility terms (g, h).

    ``g_ij`` is the derivative taken i times in x and j times in y, so the
    cubic part of g is ``(g30 x^3 + 3 g21 x^2 y + 3 g12 x y^2 + g03 y^3) / 6``.
    """

    g30: float = 0.0
    g21: float = 0.0
    g12: float = 0.0
    g03: float = 0.0
    h30: float = 0.0
    h21: float = 0.0
    h12: float = 0.0
    h03: float = 0.0

    def __post_init__(self):
        for name in _CUBIC_FIELDS:
            object.__setattr__(self, name, _as_float(name, getattr(self, name)))

    @classmethod
    def zero(cls) -> "CubicHostility":
        return cls()

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in _CUBIC_FIELDS])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.as_array())

    def scaled(self, c: float) -> "CubicHostility":
        return CubicHostility(*(c * v for v in self.as_array()))

    def swapped(self) -> "CubicHostility":
        """Coefficients after exchanging the roles of x and y (and g, h)."""
        return CubicHostility(
            g30=self.h03, g21=self.h12, g12=self.h21, g03=self.h30,
            h30=self.g03, h21=self.g12, h12=self.g21, h03=self.g30,
        )

    def directional(self, v2: float) -> tuple[float, float]:
        """Third directional derivatives of (g, h) along (1, v2)."""
        g = self.g30 + 3 * self.g21 * v2 + 3 * self.g12 * v2**2 + self.g03 * v2**3
        h = self.h30 + 3 * self.h21 * v2 + 3 * self.h12 * v2**2 + self.h03 * v2**3
        return g, h

    def evaluate(self, x, y):
        """Cubic Taylor part of (g, h) at (x, y)."""
        g = (self.g30 * x**3 + 3 * self.g21 * x**2 * y
             + 3 * self.g12 * x * y**2 + self.g03 * y**3) / 6.0
        h = (self.h30 * x**3 + 3 * self.h21 * x**2 * y
             + 3 * self.h12 * x * y**2 + self.h03 * y**3) / 6.0
        return g, h

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in _CUBIC_FIELDS}


@dataclass(frozen=True)
class HostilityBound:
    b1bar: float
    b2bar: float

    def __post_init__(self):
        for name in ("b1bar", "b2bar"):
            value = _as_float(name, getattr(self, name))
            if value <= 0:
                raise ModelError(f"{name} must be positive, got {value}")
            object.__setattr__(self, name, value)

    def as_array(self) -> np.ndarray:
        return np.array([self.b1bar, self.b2bar])


def equilibrium(A: ArmamentMatrix, bbar: HostilityBound) -> np.ndarray:
    """Positive equilibrium ``P0 = -A^{-1} bbar`` of the quasi-linear model."""
    det = A.determinant()
    if det <= 0:
        raise ModelError(f"no M-matrix regime: det A = {det} <= 0")
    b1, b2 = bbar.b1bar, bbar.b2bar
    # -A^{-1} = adj(-A)/det = [[b, k], [l, a]] / det
    return np.array([(A.b * b1 + A.k * b2) / det, (A.l * b1 + A.a * b2) / det])


# ---------------------------------------------------------------------------
# coefficient signals

_SIGNAL_KINDS = ("constant", "sinusoid", "exp_decay", "table")


@dataclass(frozen=True)
class CoefficientSignal:
    """Scalar coefficient from a closed parametric family.

    Use the ``constant``, ``sinusoid``, ``exp_decay`` and ``table``
    constructors rather than instantiating directly.
    """

    kind: str
    params: tuple
    nonnegative: bool = False
    _grid: np.ndarray | None = field(default=None, repr=False, compare=False)
    _values: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in _SIGNAL_KINDS:
            raise ModelError(f"unknown signal kind {self.kind!r}")
        if self.nonnegative and self.analytic_min() < 0:
            raise ModelError(
                f"{self.kind} signal declared nonnegative has minimum {self.analytic_min()}"
            )

    @classmethod
    def constant(cls, c: float, nonnegative: bool = False) -> "CoefficientSignal":
        return cls("constant", (_as_float("c", c),), nonnegative)

    @classmethod
    def sinusoid(cls, c: float, d: float, omega: float, phi: float = 0.0,
                 nonnegative: bool = False) -> "CoefficientSignal":
        """``c + d sin(omega t + phi)``."""
        params = tuple(_as_float(n, v) for n, v in
                       (("c", c), ("d", d), ("omega", omega), ("phi", phi)))
        return cls("sinusoid", params, nonnegative)

    @classmethod
    def exp_decay(cls, c: float, alpha: float, nonnegative: bool = False) -> "CoefficientSignal":
        """``c exp(-alpha t)``."""
        return cls("exp_decay", (_as_float("c", c), _as_float("alpha", alpha)), nonnegative)

    @classmethod
    def table(cls, t: Sequence[float], values: Sequence[float],
              nonnegative: bool = False) -> "CoefficientSignal":
        grid = np.asarray(t, dtype=float)
        vals = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.shape != vals.shape or grid.size < 2:
            raise ModelError("table signal needs matching 1-d t and values with >= 2 points")
        if not np.all(np.isfinite(grid)) or not np.all(np.isfinite(vals)):
            raise ModelError("table signal contains non-finite entries")
        if np.any(np.diff(grid) <= 0):
            raise ModelError("table grid must be strictly increasing")
        grid.setflags(write=False)
        vals.setflags(write=False)
        return cls("table", (tuple(grid), tuple(vals)), nonnegative, grid, vals)

    def analytic_min(self) -> float:
        """Minimum over the whole domain (t >= 0 for exp_decay)."""
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "sinusoid":
            c, d, _, _ = self.params
            return c - abs(d)
        if self.kind == "exp_decay":
            c, alpha = self.params
            # c e^{-alpha t} keeps the sign of c
            return min(c, 0.0) if alpha >= 0 else (c if c >= 0 else -math.inf)
        return float(np.min(self.params[1]))

    def liminf(self) -> float | None:
        """Exact liminf as t -> infinity, or None when unknown (tables)."""
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "sinusoid":
            c, d, omega, _ = self.params
            return c - abs(d) if omega != 0 else None
        if self.kind == "exp_decay":
            c, alpha = self.params
            if alpha > 0:
                return 0.0
            if alpha == 0:
                return c
            return math.inf if c > 0 else (-math.inf if c < 0 else 0.0)
        return None

    def integral_diverges(self) -> bool | None:
        """Whether the integral over [0, inf) diverges; None for tables."""
        if self.kind == "constant":
            return self.params[0] != 0
        if self.kind == "sinusoid":
            c, d, omega, _ = self.params
            return c != 0 or omega == 0
        if self.kind == "exp_decay":
            c, alpha = self.params
            return c != 0 and alpha <= 0
        return None

    @property
    def domain(self) -> tuple[float, float]:
        if self.kind == "table":
            return float(self._grid[0]), float(self._grid[-1])
        return -math.inf, math.inf

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.full(t_arr.shape, self.params[0])
        elif self.kind == "sinusoid":
            c, d, omega, phi = self.params
            out = c + d * np.sin(omega * t_arr + phi)
        elif self.kind == "exp_decay":
            c, alpha = self.params
            out = c * np.exp(-alpha * t_arr)
        else:
            lo, hi = self.domain
            slack = _GRID_SLACK * max(1.0, abs(lo), abs(hi))
            if np.any(t_arr < lo - slack) or np.any(t_arr > hi + slack):
                raise DomainError(
                    f"table signal defined on [{lo}, {hi}], evaluated at "
                    f"[{float(np.min(t_arr))}, {float(np.max(t_arr))}]"
                )
            out = np.interp(t_arr, self._grid, self._values)
        if out.ndim == 0:
            return float(out)
        return out

    def to_dict(self) -> dict:
        if self.kind == "constant":
            d = {"kind": "constant", "c": self.params[0]}
        elif self.kind == "sinusoid":
            c, dd, omega, phi = self.params
            d = {"kind": "sinusoid", "c": c, "d": dd, "omega": omega, "phi": phi}
        elif self.kind == "exp_decay":
            d = {"kind": "exp_decay", "c": self.params[0], "alpha": self.params[1]}
        else:
            d = {"kind": "table", "t": list(self.params[0]), "values": list(self.params[1])}
        d["nonnegative"] = self.nonnegative
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CoefficientSignal":
        if not isinstance(data, Mapping) or "kind" not in data:
            raise ModelError(f"signal object needs a 'kind' field, got {data!r}")
        kind = data["kind"]
        nonneg = bool(data.get("nonnegative", False))
        try:
            if kind == "constant":
                return cls.constant(data["c"], nonneg)
            if kind == "sinusoid":
                return cls.sinusoid(data["c"], data["d"], data["omega"],
                                    data.get("phi", 0.0), nonneg)
            if kind == "exp_decay":
                return cls.exp_decay(data["c"], data["alpha"], nonneg)
            if kind == "table":
                return cls.table(data["t"], data["values"], nonneg)
        except KeyError as exc:
            raise ModelError(f"{kind} signal is missing field {exc}") from exc
        raise ModelError(f"unknown signal kind {kind!r}")


# ---------------------------------------------------------------------------
# matrix functions

class MatrixFunction:
    """p x p matrix-valued function of time.

    Subclasses implement ``__call__`` for scalar t (returning (p, p)) and
    for 1-d arrays of times (returning (n, p, p)).
    """

    dim: int

    def abs_matrix(self, t):
        return np.abs(self(t))

    @property
    def domain(self) -> tuple[float, float]:
        return -math.inf, math.inf


@dataclass(frozen=True)
class TimeVaryingMatrix(MatrixFunction):
    """``A(t) = [[-a(t), k(t)], [l(t), -b(t)]]``."""

    a_sig: CoefficientSignal
    b_sig: CoefficientSignal
    k_sig: CoefficientSignal
    l_sig: CoefficientSignal

    dim = 2

    @classmethod
    def constant(cls, A: ArmamentMatrix) -> "TimeVaryingMatrix":
        return cls(
            CoefficientSignal.constant(A.a, True), CoefficientSignal.constant(A.b, True),
            CoefficientSignal.constant(A.k, True), CoefficientSignal.constant(A.l, True),
        )

    def signals(self) -> tuple[CoefficientSignal, ...]:
        return self.a_sig, self.b_sig, self.k_sig, self.l_sig

    @property
    def domain(self) -> tuple[float, float]:
        lo = max(s.domain[0] for s in self.signals())
        hi = min(s.domain[1] for s in self.signals())
        return lo, hi

    def __call__(self, t):
        a, b, k, l = (np.asarray(s(t)) for s in self.signals())
        out = np.empty(a.shape + (2, 2))
        out[..., 0, 0] = -a
        out[..., 0, 1] = k
        out[..., 1, 0] = l
        out[..., 1, 1] = -b
        return out

    def to_dict(self) -> dict:
        return {name: s.to_dict() for name, s in zip("abkl", self.signals())}


def eval_matrix(M: MatrixFunction, t: float) -> np.ndarray:
    """Evaluate a matrix function at a single time."""
    return np.asarray(M(float(t)))


@dataclass(frozen=True)
class ConstantMatrix(MatrixFunction):
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 1:
            raise ModelError(f"constant matrix must be square, got shape {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise ModelError("constant matrix has non-finite entries")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        return np.broadcast_to(self.matrix, t_arr.shape + self.matrix.shape).copy()


@dataclass(frozen=True)
class MatrixTable(MatrixFunction):
    """Linear interpolation of sampled p x p matrices."""

    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.array(self.t, dtype=float)
        vals = np.array(self.values, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise ModelError("matrix table grid must be strictly increasing with >= 2 points")
        if vals.ndim != 3 or vals.shape[0] != grid.size or vals.shape[1] != vals.shape[2]:
            raise ModelError(f"matrix table values must have shape (n, p, p), got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ModelError("matrix table has non-finite entries")
        grid.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "t", grid)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        lo, hi = self.domain
        slack = _GRID_SLACK * max(1.0, abs(lo), abs(hi))
        if np.any(t_arr < lo - slack) or np.any(t_arr > hi + slack):
            raise DomainError(f"matrix table defined on [{lo}, {hi}]")
        flat = np.clip(t_arr.ravel(), lo, hi)
        idx = np.clip(np.searchsorted(self.t, flat, side="right") - 1, 0, self.t.size - 2)
        w = (flat - self.t[idx]) / (self.t[idx + 1] - self.t[idx])
        out = (1 - w)[:, None, None] * self.values[idx] + w[:, None, None] * self.values[idx + 1]
        return out.reshape(t_arr.shape + self.values.shape[1:])


# ---------------------------------------------------------------------------
# histories

@dataclass(frozen=True)
class HistoryFunction:
    """Initial segment on [-tau, 0].

    ``kind`` is ``"constant"`` (params: value vector), ``"table"`` (params:
    theta grid, (n, p) values, linear interpolation) or ``"sinusoid"``
    (params: c, d, omega, phi vectors; component i is
    ``c_i + d_i sin(omega_i theta + phi_i)``).
    """

    tau: float
    kind: str
    params: tuple

    def __post_init__(self):
        tau = _as_float("delay", self.tau)
        if tau <= 0:
            raise ModelError(f"delay must be positive, got {tau}")
        object.__setattr__(self, "tau", tau)
        if self.kind == "constant":
            (value,) = self.params
            value = np.array(value, dtype=float).reshape(-1)
            if not np.all(np.isfinite(value)):
                raise ModelError("history value is not finite")
            value.setflags(write=False)
            object.__setattr__(self, "params", (value,))
        elif self.kind == "table":
            theta, values = self.params
            theta = np.array(theta, dtype=float)
            values = np.array(values, dtype=float)
            if values.ndim == 1:
                values = values[:, None]
            if theta.ndim != 1 or theta.size < 2 or values.shape[0] != theta.size:
                raise ModelError("history table needs matching theta grid and values")
            if np.any(np.diff(theta) <= 0):
                raise ModelError("history theta grid must be strictly increasing")
            slack = _GRID_SLACK * max(1.0, tau)
            if theta[0] > -tau + slack or theta[-1] < -slack:
                raise ModelError(f"history table must cover [-{tau}, 0]")
            if not np.all(np.isfinite(values)):
                raise ModelError("history table has non-finite values")
            theta.setflags(write=False)
            values.setflags(write=False)
            object.__setattr__(self, "params", (theta, values))
        elif self.kind == "sinusoid":
            arrs = tuple(np.array(p, dtype=float).reshape(-1) for p in self.params)
            if len(arrs) != 4 or len({a.size for a in arrs}) != 1:
                raise ModelError("sinusoid history needs c, d, omega, phi vectors of equal size")
            for a in arrs:
                a.setflags(write=False)
            object.__setattr__(self, "params", arrs)
        else:
            raise ModelError(f"unknown history kind {self.kind!r}")

    @classmethod
    def constant(cls, tau: float, value) -> "HistoryFunction":
        return cls(tau, "constant", (value,))

    @classmethod
    def table(cls, tau: float, theta, values) -> "HistoryFunction":
        return cls(tau, "table", (theta, values))

    @classmethod
    def sinusoid(cls, tau: float, c, d, omega, phi=None) -> "HistoryFunction":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        phi = np.zeros_like(c) if phi is None else phi
        return cls(tau, "sinusoid", (c, d, omega, phi))

    @property
    def dim(self) -> int:
        if self.kind == "table":
            return self.params[1].shape[1]
        return self.params[0].size

    def __call__(self, theta):
        th = np.asarray(theta, dtype=float)
        if self.kind == "constant":
            return np.broadcast_to(self.params[0], th.shape + (self.dim,)).copy()
        if self.kind == "sinusoid":
            c, d, omega, phi = self.params
            return c + d * np.sin(omega * th[..., None] + phi)
        grid, values = self.params
        flat = np.clip(th.ravel(), grid[0], grid[-1])
        out = np.stack([np.interp(flat, grid, values[:, i]) for i in range(self.dim)], axis=-1)
        return out.reshape(th.shape + (self.dim,))

    def derivative(self, theta):
        th = np.asarray(theta, dtype=float)
        if self.kind == "constant":
            return np.zeros(th.shape + (self.dim,))
        if self.kind == "sinusoid":
            c, d, omega, phi = self.params
            return d * omega * np.cos(omega * th[..., None] + phi)
        grid, values = self.params
        slopes = np.diff(values, axis=0) / np.diff(grid)[:, None]
        idx = np.clip(np.searchsorted(grid, th.ravel(), side="right") - 1, 0, grid.size - 2)
        return slopes[idx].reshape(th.shape + (self.dim,))

    def scaled(self, alpha: float) -> "HistoryFunction":
        if self.kind == "constant":
            return HistoryFunction.constant(self.tau, alpha * self.params[0])
        if self.kind == "table":
            return HistoryFunction.table(self.tau, self.params[0], alpha * self.params[1])
        c, d, omega, phi = self.params
        return HistoryFunction(self.tau, "sinusoid", (alpha * c, alpha * d, omega, phi))

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.params[0].tolist()}
        if self.kind == "table":
            return {"kind": "table", "theta": self.params[0].tolist(),
                    "values": self.params[1].tolist()}
        c, d, omega, phi = self.params
        return {"kind": "sinusoid", "c": c.tolist(), "d": d.tolist(),
                "omega": omega.tolist(), "phi": phi.tolist()}

    @classmethod
    def from_dict(cls, tau: float, data: Mapping[str, Any]) -> "HistoryFunction":
        kind = data.get("kind") if isinstance(data, Mapping) else None
        try:
            if kind == "constant":
                return cls.constant(tau, data["value"])
            if kind == "table":
                return cls.table(tau, data["theta"], data["values"])
            if kind == "sinusoid":
                return cls.sinusoid(tau, data["c"], data["d"], data["omega"], data.get("phi"))
        except KeyError as exc:
            raise ModelError(f"{kind} history is missing field {exc}") from exc
        raise ModelError(f"unknown history kind {kind!r}")
