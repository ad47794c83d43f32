"""Special-solution reduction for ``x'(t) = A(t) x(t - tau)`` in dimension p.

Under ``m e tau < 1`` the delay system shares its asymptotics with the ODE
``x' = M(t) x``, where ``M(t) = sum_n M_n(t, t)`` and
``M_{n+1}(t, s) = -A(s) int_{s - tau}^t M_n(t, u) du``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    CoefficientSignal,
    ConstantMatrix,
    HistoryFunction,
    MatrixFunction,
    ModelError,
    NumericalError,
    TimeVaryingMatrix,
)
from .engine import DdeProblem, DelayedLinearRhs, DivergedError, decay_rate, integrate
from .nonautonomous import NO, YES, AuditWindow, CriterionVerdict

NORMS = ("max-row-sum", "max-column-sum", "euclidean-operator")
S1_UNIFORM_BOUND = math.log((math.e - 1) / (math.e - 2)) / (math.e - 1)
H2_FINAL_TAIL = 0.1
H2_THRESHOLD = 0.05


@dataclass(frozen=True)
class SpecialSeriesConfig:
    order: int = 20
    panels: int = 64
    norm: str = "max-row-sum"

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 2:
            raise ModelError(f"truncation order must be an integer >= 2, got {self.order}")
        if int(self.panels) != self.panels or self.panels < 16 or self.panels % 2:
            raise ModelError(f"panels per delay must be an even integer >= 16, got {self.panels}")
        if self.norm not in NORMS:
            raise ModelError(f"norm must be one of {NORMS}, got {self.norm!r}")


def matrix_norm(X: np.ndarray, norm: str = "max-row-sum") -> np.ndarray:
    """Operator norm of a matrix or a stack of matrices."""
    X = np.asarray(X, dtype=float)
    if norm == "max-row-sum":
        return np.max(np.sum(np.abs(X), axis=-1), axis=-1)
    if norm == "max-column-sum":
        return np.max(np.sum(np.abs(X), axis=-2), axis=-1)
    if norm == "euclidean-operator":
        return np.linalg.norm(X, ord=2, axis=(-2, -1))
    raise ValueError(f"unknown norm {norm!r}")


def log_norm_inf(X: np.ndarray) -> np.ndarray:
    """Logarithmic norm induced by the max norm: ``max_i (x_ii + sum_{j != i} |x_ij|)``."""
    X = np.asarray(X, dtype=float)
    diag = np.diagonal(X, axis1=-2, axis2=-1)
    off = np.sum(np.abs(X), axis=-1) - np.abs(diag)
    return np.max(diag + off, axis=-1)


@dataclass(frozen=True)
class SpecialConstants:
    m: float
    tau: float
    lambda0: float
    S0: float
    S1: float

    @property
    def residual(self) -> float:
        return abs(self.m * math.exp(-self.lambda0 * self.tau) + self.lambda0)


def _tail_matrices(M: MatrixFunction, w: AuditWindow):
    t = w.tail_grid()
    return t, np.asarray(M(t), dtype=float)


def check_h1(M: MatrixFunction, tau: float, w: AuditWindow,
             norm: str = "max-row-sum") -> tuple[float, bool]:
    """(m, holds): tail sup of the operator norm and whether ``m e tau < 1``."""
    _, mats = _tail_matrices(M, w)
    m = float(np.max(matrix_norm(mats, norm)))
    return m, m * math.e * tau < 1


def _s_log(x: float) -> float:
    # log((1 - x) / (1 - 2x)) without cancellation for small x
    return math.log1p(x / (1 - 2 * x))


def special_constants(m: float, tau: float) -> SpecialConstants:
    if m == 0:
        raise ModelError("trivial system (m = 0): special constants are not defined")
    if not (m > 0 and tau > 0):
        raise ModelError("m and tau must be positive")
    if m * math.e * tau >= 1:
        raise ModelError(f"m e tau = {m * math.e * tau} >= 1")
    f = lambda lam: m * math.exp(-lam * tau) + lam
    lo, hi = -1.0 / tau, 0.0
    # f(lo) < 0 < f(hi); bisect to a safe bracket, then Newton
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    for _ in range(50):
        step = f(lam) / (1 - m * tau * math.exp(-lam * tau))
        lam -= step
        if abs(step) <= 1e-17 * max(1.0, abs(lam)):
            break
    x = m * tau
    L = _s_log(x)
    S1 = x / (1 - x) * L
    S0 = L / (x * (1 - x))
    return SpecialConstants(m, tau, lam, S0, S1)


def _cumulative_integral(vals: np.ndarray, h: float) -> np.ndarray:
    """``F[i] = int_{u_i}^{u_0} f`` on a uniform grid (4th order).

    Simpson on pairs for even i, Simpson 3/8 closing panel for odd i.
    """
    n = vals.shape[0]
    F = np.zeros_like(vals)
    if n < 4:
        raise ValueError("need at least 4 grid points")
    pairs = (vals[0:-2:2] + 4 * vals[1:-1:2] + vals[2::2]) * (h / 3)
    F[2::2] = np.cumsum(pairs, axis=0)
    F[1] = (9 * vals[0] + 19 * vals[1] - 5 * vals[2] + vals[3]) * (h / 24)
    if n > 3:
        odd = np.arange(3, n, 2)
        F[odd] = F[odd - 3] + (vals[odd - 3] + 3 * vals[odd - 2] + 3 * vals[odd - 1]
                               + vals[odd]) * (3 * h / 8)
    return F


@dataclass
class SeriesTerms:
    terms: list  # M_n(t, t) for n = 0..N
    m: float
    tau: float
    norm: str

    @property
    def truncated(self) -> np.ndarray:
        return np.sum(self.terms, axis=0)

    def partial_sum(self, n: int) -> np.ndarray:
        return np.sum(self.terms[: n + 1], axis=0)

    def tail_bound(self, n: int) -> float:
        """``m (2 m tau)^(n+1) / (1 - 2 m tau)``."""
        q = 2 * self.m * self.tau
        if q >= 1:
            return math.inf
        return self.m * q ** (n + 1) / (1 - q)

    def norms(self) -> np.ndarray:
        return np.array([float(matrix_norm(T, self.norm)) for T in self.terms])

    def step2_bounds(self) -> np.ndarray:
        return np.array([self.m * (self.m * self.tau) ** n for n in range(len(self.terms))])


def Mn_terms(A: MatrixFunction, tau: float, t: float,
             cfg: SpecialSeriesConfig = SpecialSeriesConfig()) -> SeriesTerms:
    """``M_n(t, t)`` for n = 0..order by nested quadrature on a shared grid."""
    N, P = cfg.order, cfg.panels
    hq = tau / P
    u = t - hq * np.arange(N * P + 1)
    mats = np.asarray(A(u), dtype=float)
    m = float(np.max(matrix_norm(mats, cfg.norm)))
    terms = [mats[0].copy()]
    level = mats  # M_0(t, u_j) = A(u_j)
    for n in range(N):
        F = _cumulative_integral(level, hq)
        size = (N - n - 1) * P + 1
        # M_{n+1}(t, s_j) = -A(s_j) F_n(j + P)
        level = -np.einsum("jik,jkl->jil", mats[:size], F[P: P + size])
        terms.append(level[0].copy())
    return SeriesTerms(terms, m, tau, cfg.norm)


def Mn_series(A: MatrixFunction, tau: float, t: float,
              cfg: SpecialSeriesConfig = SpecialSeriesConfig()) -> tuple[np.ndarray, float]:
    """(truncated sum of ``M_n(t, t)``, analytic tail bound)."""
    series = Mn_terms(A, tau, t, cfg)
    if series.m * math.e * tau >= 1:
        raise ModelError(f"(h1) fails on [t - N tau, t]: m e tau = {series.m * math.e * tau}")
    return series.truncated, series.tail_bound(cfg.order)


def gamma1(A: MatrixFunction, tau: float, t: float, panels: int = 64) -> np.ndarray:
    """``int_{t - tau}^t (A(u) - A(t)) du`` by composite Simpson."""
    u = np.linspace(t - tau, t, panels + 1)
    wts = np.ones(panels + 1)
    wts[1:-1:2] = 4
    wts[2:-1:2] = 2
    wts *= tau / (3 * panels)
    mats = np.asarray(A(u), dtype=float) - np.asarray(A(t), dtype=float)
    return np.tensordot(wts, mats, axes=1)


def write_series_csv(series: SeriesTerms, path) -> None:
    norms = series.norms()
    bounds = series.step2_bounds()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "norm_Mn", "bound"])
        for n, (a, b) in enumerate(zip(norms, bounds)):
            w.writerow([n, repr(float(a)), repr(float(b))])


# ---------------------------------------------------------------------------
# stability verdicts

def variation_modulus(M: MatrixFunction, tau: float, t: np.ndarray,
                      norm: str = "max-row-sum", samples: int = 33) -> np.ndarray:
    """``max_{s in [t - tau, t]} ||A(t) - A(s)||`` for each t."""
    theta = np.linspace(-tau, 0.0, samples)
    At = np.asarray(M(t), dtype=float)
    As = np.asarray(M(t[:, None] + theta), dtype=float)
    return np.max(matrix_norm(As - At[:, None], norm), axis=1)


def _h2(M, tau, w, norm, m):
    t = w.tail_grid()
    var = variation_modulus(M, tau, t, norm)
    k = max(1, int(H2_FINAL_TAIL * t.size))
    final = float(np.max(var[-k:]))
    slope = float(np.polyfit(t, var, 1)[0]) if t.size > 1 else 0.0
    holds = final < H2_THRESHOLD * m if m > 0 else True
    i = int(np.argmax(var))
    return holds, final, slope, float(t[i])


def _reduced(mats: np.ndarray, tau: float, S1: float) -> np.ndarray:
    p = mats.shape[-1]
    eye = np.eye(p)
    IpA = eye + tau * mats
    if np.any(np.abs(np.linalg.det(IpA)) < 1e-12):
        raise NumericalError("I + tau A(t) numerically singular")
    N = mats @ np.linalg.inv(IpA)
    return N + S1 * np.abs(mats)


class _ReducedMatrix(MatrixFunction):
    def __init__(self, M: MatrixFunction, tau: float, S1: float):
        self.M, self.tau, self.S1 = M, tau, S1
        self.dim = M.dim

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        mats = np.asarray(self.M(t_arr.reshape(-1)), dtype=float)
        out = _reduced(mats, self.tau, self.S1)
        return out.reshape(t_arr.shape + out.shape[-2:])


def _simulate_decay(rhs, dim, tau, w, histories, steps=32):
    rates = []
    for hist in histories:
        prob = DdeProblem(dim, rhs, tau, hist, w.t_end - w.t_start, steps, w.t_start)
        try:
            rates.append(decay_rate(integrate(prob), w.tail_start))
        except DivergedError:
            rates.append(math.inf)
    return rates


def _unit_histories(tau, p):
    return [HistoryFunction.constant(tau, np.eye(p)[i]) for i in range(p)]


def thm41_check(M: MatrixFunction, tau: float, w: AuditWindow,
                cfg: SpecialSeriesConfig = SpecialSeriesConfig()) -> CriterionVerdict:
    """(h1) and (h2) surrogates plus GES of the reduced ODE, by row sums or simulation."""
    w.validate(tau)
    m, h1 = check_h1(M, tau, w, cfg.norm)
    details: dict = {"m": m, "h1": h1, "norm": cfg.norm}
    if not h1:
        return CriterionVerdict("thm4.1", NO, 1 - m * math.e * tau, None, w.surrogate, details)
    h2, eps, slope, t_var = _h2(M, tau, w, cfg.norm, m)
    details.update({"h2": h2, "h2_final_variation": eps, "h2_slope": slope,
                    "h2_surrogate": True})
    if m == 0:
        details["reason"] = "zero matrix"
        return CriterionVerdict("thm4.1", YES, 1.0, None, w.surrogate, details)
    if not h2:
        return CriterionVerdict("thm4.1", NO, H2_THRESHOLD * m - eps, t_var, w.surrogate, details)
    sc = special_constants(m, tau)
    t, mats = _tail_matrices(M, w)
    B = _reduced(mats, tau, sc.S1)
    mu = log_norm_inf(B)
    i = int(np.argmax(mu))
    slack = eps * tau * sc.S0 * float(np.max(matrix_norm(np.abs(mats), "max-row-sum")))
    margin_alpha = -float(mu[i]) - slack
    details.update({"S1": sc.S1, "S0": sc.S0, "lambda0": sc.lambda0,
                    "row_sum_margin": margin_alpha, "row_sum_slack": slack})
    if margin_alpha > 0:
        verdict = CriterionVerdict("thm4.1", YES, margin_alpha, float(t[i]), w.surrogate, details)
        details["h3"] = "row-sum"
    else:
        reduced = DelayedLinearRhs(ConstantMatrix(np.zeros((M.dim, M.dim))),
                                   current=_ReducedMatrix(M, tau, sc.S1))
        rates = _simulate_decay(reduced, M.dim, tau, w, _unit_histories(tau, M.dim))
        worst = max(rates)
        details.update({"h3": "simulation (numerical, not certified)", "ode_rates": rates})
        if worst < 0:
            verdict = CriterionVerdict("thm4.1", YES, -worst, float(t[i]), w.surrogate, details)
        else:
            verdict = CriterionVerdict("thm4.1", NO, min(margin_alpha, -worst), float(t[i]),
                                       w.surrogate, details)
    if verdict.holds == YES:
        rates = _simulate_decay(DelayedLinearRhs(M), M.dim, tau, w, _unit_histories(tau, M.dim))
        details["dde_rates"] = rates
        details["dde_confirms"] = all(r < 0 for r in rates)
    return verdict


def triangular_example_check(a: float, k_sig: CoefficientSignal, tau: float,
                             w: AuditWindow) -> CriterionVerdict:
    """Closed-form conditions for ``[[-a, k(t)], [0, -a]]`` with constant a."""
    if a <= 0:
        raise ModelError("a must be positive")
    if k_sig.analytic_min() < 0:
        raise ModelError("k must be nonnegative")
    w.validate(tau)
    t = w.tail_grid()
    kv = np.broadcast_to(np.asarray(k_sig(t), dtype=float), t.shape)
    i = int(np.argmax(kv))
    sup_k = float(kv[i])
    room = 1 / math.e - tau * a
    details: dict = {"sup_k": sup_k, "first_condition_room": room}
    if room <= 0:
        details["reason"] = "1/e - tau a <= 0: first condition unsatisfiable"
        return CriterionVerdict("triangular", NO, room, None, w.surrogate, details)
    first = room - tau * sup_k
    if first <= 0:
        details["reason"] = "tau sup k >= 1/e - tau a"
        return CriterionVerdict("triangular", NO, first, float(t[i]), w.surrogate, details)
    m = a + sup_k
    S1 = special_constants(m, tau).S1
    bound = a * (1 - tau * a) / (1 + S1 * (1 - tau * a) ** 2)
    second = bound - sup_k
    details.update({"m": m, "S1": S1, "k_bound": bound})
    # slow variation of k, as required by (h2)
    window = np.asarray(k_sig(t[:, None] + np.linspace(-tau, 0.0, 33)), dtype=float)
    kappa = np.max(np.abs(window - window[:, -1:]), axis=1)
    var = float(np.max(kappa[-max(1, int(H2_FINAL_TAIL * t.size)):]))
    details["k_variation"] = var
    if var >= H2_THRESHOLD * m:
        details["reason"] = "k varies too fast over a delay window (h2 surrogate)"
        return CriterionVerdict("triangular", NO, H2_THRESHOLD * m - var, None, w.surrogate, details)
    margin = min(first, second)
    if margin <= 0:
        details["reason"] = "sup k exceeds the bound"
        return CriterionVerdict("triangular", NO, margin, float(t[i]), w.surrogate, details)
    verdict = CriterionVerdict("triangular", YES, margin, float(t[i]), w.surrogate, details)
    A = TimeVaryingMatrix(CoefficientSignal.constant(a, True), CoefficientSignal.constant(a, True),
                          k_sig, CoefficientSignal.constant(0.0, True))
    rates = _simulate_decay(DelayedLinearRhs(A), 2, tau, w, _unit_histories(tau, 2))
    details["dde_rates"] = rates
    details["dde_confirms"] = all(r < 0 for r in rates)
    return verdict
