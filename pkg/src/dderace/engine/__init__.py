"""Fixed-step RK4 method-of-steps integrator with dense Hermite output."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..core import (
    CoefficientSignal,
    CubicHostility,
    DomainError,
    HistoryFunction,
    MatrixFunction,
    ModelError,
    NumericalError,
    TimeVaryingMatrix,
)

try:
    from ._rk4 import rk4_delayed as _compiled_kernel
except ImportError:  # pragma: no cover - exercised when the extension is not built
    _compiled_kernel = None
from ._rk4_py import rk4_delayed as _python_kernel

BACKEND = "compiled" if _compiled_kernel is not None else "python"

DIVERGENCE_THRESHOLD = 1e12


def kernel(backend: str | None = None):
    """Return the RK4 kernel for ``backend`` ('compiled', 'python' or None=best)."""
    if backend is None:
        backend = BACKEND
    if backend == "compiled":
        if _compiled_kernel is None:
            raise RuntimeError("compiled kernel not available; build the extension")
        return _compiled_kernel
    if backend == "python":
        return _python_kernel
    raise ValueError(f"unknown backend {backend!r}")


class DivergedError(NumericalError):
    """State left the finite range; carries the blow-up time and partial solution."""

    def __init__(self, t_blowup: float, partial: "Trajectory | None" = None):
        super().__init__(f"diverged: sup-norm exceeded {DIVERGENCE_THRESHOLD:g} at t={t_blowup:.6g}")
        self.t_blowup = t_blowup
        self.partial = partial


class NoOscillationError(ValueError):
    """Tail of a trajectory does not oscillate."""


def _is_constant(M) -> bool:
    from ..core import ConstantMatrix

    if isinstance(M, ConstantMatrix):
        return True
    if isinstance(M, TimeVaryingMatrix):
        return all(s.kind == "constant" for s in M.signals())
    return False


@dataclass(frozen=True)
class DelayedLinearRhs:
    """``x' = D(t) x(t-tau) + C(t) x(t) + cubic(x(t-tau)) + env(t) * tanh(swap(x(t-tau)))``.

    ``delayed`` and ``current`` are matrix functions, ``cubic`` applies the
    homogeneous cubic of a :class:`CubicHostility` to the delayed state (p=2)
    and ``envelope`` holds one nonnegative signal per component; component i
    receives ``env_i(t) tanh(xd_{i+1 mod p})``, a nonlinearity bounded by
    ``env_i(t)`` times the max-norm of the delayed state.

    Recognised by :func:`integrate` and routed to the compiled kernel; also
    callable as an ordinary right-hand side.
    """

    delayed: MatrixFunction
    current: MatrixFunction | None = None
    cubic: CubicHostility | None = None
    envelope: tuple[CoefficientSignal, ...] | None = None

    def __post_init__(self):
        p = self.delayed.dim
        if self.current is not None and self.current.dim != p:
            raise ModelError("current-state matrix dimension mismatch")
        if self.cubic is not None and p != 2:
            raise ModelError("cubic hostility is defined for the planar model only")
        if self.envelope is not None:
            if len(self.envelope) != p:
                raise ModelError("need one envelope signal per component")
            if any(sig.analytic_min() < 0 for sig in self.envelope):
                raise ModelError("envelope signals must be nonnegative")

    @property
    def dim(self) -> int:
        return self.delayed.dim

    def __call__(self, t, x, xd):
        x = np.asarray(x, dtype=float)
        xd = np.asarray(xd, dtype=float)
        out = np.asarray(self.delayed(t)) @ xd
        if self.current is not None:
            out = out + np.asarray(self.current(t)) @ x
        if self.cubic is not None:
            out = out + np.array(self.cubic.evaluate(xd[0], xd[1]))
        if self.envelope is not None:
            env = np.array([sig(t) for sig in self.envelope])
            out = out + env * np.tanh(np.roll(xd, -1))
        return out

    def sampled(self, times: np.ndarray):
        """Coefficient arrays for the kernel at the given stage times."""
        p = self.dim
        if _is_constant(self.delayed):
            Ad = np.asarray(self.delayed(times[:1]), dtype=float)
        else:
            Ad = np.asarray(self.delayed(times), dtype=float)
        if self.current is None:
            Bc = np.zeros((0, p, p))
        elif _is_constant(self.current):
            Bc = np.asarray(self.current(times[:1]), dtype=float)
        else:
            Bc = np.asarray(self.current(times), dtype=float)
        cubic = np.zeros(0) if self.cubic is None else self.cubic.as_array()
        if self.envelope is None:
            env = np.zeros((0, p))
        elif all(sig.kind == "constant" for sig in self.envelope):
            env = np.array([[sig.params[0] for sig in self.envelope]])
        else:
            env = np.stack([np.broadcast_to(sig(times), times.shape) for sig in self.envelope],
                           axis=-1)
        return (np.ascontiguousarray(Ad), np.ascontiguousarray(Bc),
                np.ascontiguousarray(cubic), np.ascontiguousarray(env))


@dataclass(frozen=True)
class DdeProblem:
    dimension: int
    rhs: Callable
    tau: float
    history: HistoryFunction
    horizon: float
    steps_per_delay: int = 64
    t0: float = 0.0

    def __post_init__(self):
        if not (isinstance(self.dimension, (int, np.integer)) and self.dimension >= 1):
            raise ModelError(f"dimension must be a positive integer, got {self.dimension}")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ModelError(f"delay must be positive, got {self.tau}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ModelError(f"horizon must be positive, got {self.horizon}")
        if int(self.steps_per_delay) != self.steps_per_delay or self.steps_per_delay < 8:
            raise ModelError(f"steps per delay must be an integer >= 8, got {self.steps_per_delay}")
        if self.history.dim != self.dimension:
            raise ModelError("history dimension does not match the problem dimension")
        if abs(self.history.tau - self.tau) > 1e-12 * self.tau:
            raise ModelError("history delay does not match the problem delay")

    @property
    def step(self) -> float:
        return self.tau / self.steps_per_delay

    @property
    def n_steps(self) -> int:
        # round up so the grid reaches the horizon
        return int(math.ceil(self.horizon / self.step - 1e-9))


class Trajectory:
    """Grid solution with cubic Hermite dense output.

    Times before ``t0`` are answered by the history function.
    """

    def __init__(self, t0: float, h: float, states: np.ndarray, derivs: np.ndarray,
                 history: HistoryFunction, steps_per_delay: int):
        self.t0 = float(t0)
        self.h = float(h)
        self.tau = history.tau
        self.history = history
        self.steps_per_delay = int(steps_per_delay)
        self._x = np.array(states, dtype=float)
        self._d = np.array(derivs, dtype=float)
        self._t = self.t0 + self.h * np.arange(self._x.shape[0])
        for arr in (self._x, self._d, self._t):
            arr.setflags(write=False)

    @property
    def t(self) -> np.ndarray:
        return self._t

    @property
    def states(self) -> np.ndarray:
        return self._x

    @property
    def derivatives(self) -> np.ndarray:
        return self._d

    @property
    def dim(self) -> int:
        return self._x.shape[1]

    @property
    def t_end(self) -> float:
        return float(self._t[-1])

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        flat = t_arr.ravel()
        lo = self.t0 - self.tau
        slack = 1e-12 * max(1.0, abs(lo), abs(self.t_end))
        if np.any(flat < lo - slack) or np.any(flat > self.t_end + slack):
            raise DomainError(f"trajectory defined on [{lo}, {self.t_end}]")
        out = np.empty((flat.size, self.dim))
        before = flat < self.t0
        if np.any(before):
            out[before] = self.history(flat[before] - self.t0)
        after = ~before
        if np.any(after):
            ta = np.minimum(flat[after], self.t_end)
            j = np.clip(np.floor((ta - self.t0) / self.h).astype(int), 0, len(self._t) - 2)
            s = ((ta - self._t[j]) / self.h)[:, None]
            x0, x1 = self._x[j], self._x[j + 1]
            d0, d1 = self._d[j] * self.h, self._d[j + 1] * self.h
            s2, s3 = s * s, s * s * s
            out[after] = ((2 * s3 - 3 * s2 + 1) * x0 + (s3 - 2 * s2 + s) * d0
                          + (-2 * s3 + 3 * s2) * x1 + (s3 - s2) * d1)
        return out.reshape(t_arr.shape + (self.dim,))

    def segment(self, t: float, points: int = 65):
        """Samples of the segment ``theta -> x(t + theta)`` on ``[-tau, 0]``."""
        theta = np.linspace(-self.tau, 0.0, points)
        return theta, self(t + theta)

    def sup_norm(self) -> np.ndarray:
        return np.max(np.abs(self._x), axis=1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"x{i + 1}" for i in range(self.dim)])
            for tk, row in zip(self._t, self._x):
                writer.writerow([f"{tk:.17g}"] + [f"{v:.17g}" for v in row])


def _half_step_history(problem: DdeProblem) -> np.ndarray:
    two_n = 2 * problem.steps_per_delay
    theta = (np.arange(two_n + 1) - two_n) * (problem.tau / two_n)
    return np.ascontiguousarray(problem.history(theta), dtype=float)


def _generic_loop(problem: DdeProblem, hist: np.ndarray):
    f = problem.rhs
    N = problem.steps_per_delay
    M = problem.n_steps
    h = problem.step
    t0 = problem.t0
    p = problem.dimension
    two_n = 2 * N
    xs = np.zeros((M + 1, p))
    ds = np.zeros((M + 1, p))

    def delayed(s):
        if s <= two_n:
            return hist[s]
        r = s - two_n
        j = r // 2
        if r % 2 == 0:
            return xs[j]
        return 0.5 * (xs[j] + xs[j + 1]) + h * (ds[j] - ds[j + 1]) / 8.0

    def call(s, x, xd):
        out = np.asarray(f(t0 + s * (h / 2), x, xd), dtype=float).reshape(p)
        return out

    x = hist[two_n].copy()
    xs[0] = x
    for n in range(M):
        s = 2 * n
        k1 = call(s, x, delayed(s))
        ds[n] = k1
        xm = delayed(s + 1)
        k2 = call(s + 1, x + 0.5 * h * k1, xm)
        k3 = call(s + 1, x + 0.5 * h * k2, xm)
        k4 = call(s + 2, x + h * k3, delayed(s + 2))
        x = x + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if not np.all(np.abs(x) <= DIVERGENCE_THRESHOLD):
            return xs, ds, n
        xs[n + 1] = x
    ds[M] = call(2 * M, x, delayed(2 * M))
    return xs, ds, M


def integrate(problem: DdeProblem, backend: str | None = None) -> Trajectory:
    """Integrate ``problem`` on ``[t0, t0 + horizon]`` (rounded up to the grid).

    Raises :class:`DivergedError` when the sup-norm exceeds 1e12 or a state
    becomes non-finite; the error carries the partial trajectory.
    """
    N = problem.steps_per_delay
    M = problem.n_steps
    h = problem.step
    hist = _half_step_history(problem)
    rhs = problem.rhs
    if isinstance(rhs, DelayedLinearRhs):
        if rhs.dim != problem.dimension:
            raise ModelError("right-hand side dimension does not match the problem")
        times = problem.t0 + np.arange(2 * M + 1) * (h / 2)
        try:
            Ad, Bc, cubic, env = rhs.sampled(times)
        except DomainError as exc:
            raise DomainError(f"coefficients undefined on the integration window: {exc}") from exc
        xs, ds, n_done = kernel(backend)(hist, Ad, Bc, cubic, env, N, M, h, DIVERGENCE_THRESHOLD)
    else:
        xs, ds, n_done = _generic_loop(problem, hist)
    if n_done < M:
        partial = None
        if n_done >= 1:
            partial = Trajectory(problem.t0, h, xs[: n_done + 1], ds[: n_done + 1],
                                 problem.history, N)
        raise DivergedError(problem.t0 + (n_done + 1) * h, partial)
    return Trajectory(problem.t0, h, xs, ds, problem.history, N)


# ---------------------------------------------------------------------------
# post-processing

def _tail_blocks(traj: Trajectory, t_start: float):
    N = traj.steps_per_delay
    j0 = int(math.ceil((t_start - traj.t0) / traj.h - 1e-9))
    j0 = max(j0, 0)
    n_blocks = (len(traj.t) - 1 - j0) // N
    return j0, N, n_blocks


def interval_sup_norms(traj: Trajectory, t_start: float):
    """(left end times, sup norms) per delay interval of the tail."""
    j0, N, n_blocks = _tail_blocks(traj, t_start)
    norms = traj.sup_norm()
    times = np.empty(n_blocks)
    sups = np.empty(n_blocks)
    for b in range(n_blocks):
        lo = j0 + b * N
        times[b] = traj.t[lo]
        sups[b] = np.max(norms[lo: lo + N + 1])
    return times, sups


def decay_rate(traj: Trajectory, t_start: float) -> float:
    """Least-squares slope of log sup-norm per delay interval on the tail.

    Negative means contraction; ``-inf`` when the tail is identically zero.
    """
    times, sups = interval_sup_norms(traj, t_start)
    if times.size < 5:
        raise ValueError(
            f"tail after t={t_start} holds {times.size} delay intervals; need at least 5"
        )
    if not np.any(sups > 0):
        return -math.inf
    keep = sups > 0
    if keep.sum() < 2:
        return -math.inf
    slope = np.polyfit(times[keep], np.log(sups[keep]), 1)[0]
    return float(slope)


def _tail_component(traj: Trajectory, component: int, t_start: float):
    if not 0 <= component < traj.dim:
        raise IndexError(f"component {component} out of range for dimension {traj.dim}")
    mask = traj.t >= t_start - 1e-12
    t = traj.t[mask]
    y = traj.states[mask, component]
    centered = y - np.mean(y)
    scale = float(np.max(np.abs(traj.states[:, component]))) if traj.states.size else 0.0
    half_range = 0.5 * (np.max(centered) - np.min(centered)) if y.size else 0.0
    signs = np.sign(centered)
    nz = signs != 0
    changes = int(np.count_nonzero(np.diff(signs[nz]) != 0))
    # anything below this is rounding noise around a decayed state
    if changes < 3 or half_range <= 1e-9 * max(scale, 1e-300):
        raise NoOscillationError(
            f"no oscillation detected in component {component} after t={t_start} "
            f"({changes} sign changes)"
        )
    return t, centered, half_range


def oscillation_amplitude(traj: Trajectory, component: int, t_start: float) -> float:
    """Half the peak-to-peak range of the centered tail of one component."""
    return float(_tail_component(traj, component, t_start)[2])


def oscillation_period(traj: Trajectory, component: int, t_start: float) -> float:
    """Mean spacing of upward zero crossings of the centered tail."""
    t, y, _ = _tail_component(traj, component, t_start)
    idx = np.nonzero((y[:-1] < 0) & (y[1:] >= 0))[0]
    if idx.size < 2:
        raise NoOscillationError("fewer than two upward crossings in the tail")
    crossings = t[idx] - y[idx] * (t[idx + 1] - t[idx]) / (y[idx + 1] - y[idx])
    return float((crossings[-1] - crossings[0]) / (crossings.size - 1))


def linear_problem(A, tau: float, history: HistoryFunction, horizon: float,
                   steps_per_delay: int = 64, cubic: CubicHostility | None = None,
                   t0: float = 0.0) -> DdeProblem:
    """``x' = A x(t - tau)`` (plus optional cubic) for a constant or time-varying A."""
    from ..core import ArmamentMatrix, ConstantMatrix

    if isinstance(A, ArmamentMatrix):
        M = ConstantMatrix(A.as_array())
    elif isinstance(A, MatrixFunction):
        M = A
    else:
        M = ConstantMatrix(np.asarray(A, dtype=float))
    return DdeProblem(M.dim, DelayedLinearRhs(M, cubic=cubic), tau, history, horizon,
                      steps_per_delay, t0)


__all__ = [
    "BACKEND",
    "DIVERGENCE_THRESHOLD",
    "DdeProblem",
    "DelayedLinearRhs",
    "DivergedError",
    "NoOscillationError",
    "Trajectory",
    "decay_rate",
    "integrate",
    "interval_sup_norms",
    "kernel",
    "linear_problem",
    "oscillation_amplitude",
    "oscillation_period",
]
