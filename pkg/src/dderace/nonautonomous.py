"""Checks of sufficient stability criteria for the time-varying race model.

Asymptotic conditions (liminf/limsup as t -> infinity) are replaced by their
values on the tail of a finite audit window; every verdict records that
window so reports make the surrogate explicit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autonomous import dominant_root, tau_minus
from .core import (
    ArmamentMatrix,
    CoefficientSignal,
    ConstantMatrix,
    DomainError,
    HistoryFunction,
    MatrixFunction,
    ModelError,
    TimeVaryingMatrix,
)
from .engine import (
    DdeProblem,
    DelayedLinearRhs,
    DivergedError,
    decay_rate,
    integrate,
)

YES, NO, INCONCLUSIVE = "yes", "no", "inconclusive"

COR31_MARGIN_FLOOR = 1e-6
SIMPSON_PANELS = 256
V_RAY_EXPONENTS = np.arange(-8.0, 8.0 + 1e-9, 0.25)
ALPHA_CANDIDATES = (1.01, 1.1, 1.5, 2.0)


@dataclass(frozen=True)
class AuditWindow:
    t_start: float
    t_end: float
    step: float
    tail_fraction: float = 0.5

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ModelError("audit window must have t_end > t_start")
        if not self.step > 0:
            raise ModelError("audit grid step must be positive")
        if not 0 < self.tail_fraction < 1:
            raise ModelError("tail fraction must lie in (0, 1)")

    @classmethod
    def for_delay(cls, tau: float, t_start: float = 0.0, t_end: float | None = None,
                  tail_fraction: float = 0.5) -> "AuditWindow":
        if t_end is None:
            t_end = t_start + 40 * tau
        return cls(t_start, t_end, tau / 16, tail_fraction)

    def validate(self, tau: float) -> None:
        if self.t_end - self.t_start < 10 * tau * (1 - 1e-12):
            raise ModelError(f"audit window shorter than 10 delays (tau={tau})")
        if self.step > tau / 16 * (1 + 1e-12):
            raise ModelError(f"audit grid step {self.step} exceeds tau/16")

    @property
    def tail_start(self) -> float:
        return self.t_end - self.tail_fraction * (self.t_end - self.t_start)

    def tail_grid(self) -> np.ndarray:
        n = int(math.floor((self.t_end - self.tail_start) / self.step + 1e-9))
        return self.t_end - self.step * np.arange(n, -1, -1)

    @property
    def surrogate(self) -> tuple[float, float]:
        return (self.tail_start, self.t_end)


@dataclass
class CriterionVerdict:
    """Outcome of one criterion.

    ``margin`` is the worst slack over the tail: positive when the condition
    holds, nonpositive when it fails (zero only on an exact boundary).
    """

    criterion: str
    holds: str
    margin: float
    witness_t: float | None
    surrogate_window: tuple[float, float] | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "holds": self.holds,
            "margin": self.margin,
            "witness_t": self.witness_t,
            "surrogate_window": list(self.surrogate_window) if self.surrogate_window else None,
        }


def _signals(M: TimeVaryingMatrix, t):
    return tuple(np.asarray(s(t), dtype=float) for s in M.signals())


def _check_domain(M: TimeVaryingMatrix, lo: float, hi: float) -> None:
    d_lo, d_hi = M.domain
    slack = 1e-12 * max(1.0, abs(lo), abs(hi))
    if lo < d_lo - slack or hi > d_hi + slack:
        raise DomainError(f"signals defined on [{d_lo}, {d_hi}], audit needs [{lo}, {hi}]")


def window_integral(sig, tau: float, t) -> np.ndarray:
    """Composite Simpson integral of ``sig`` over ``[t - tau, t]`` (vectorized in t)."""
    t = np.asarray(t, dtype=float)
    n = SIMPSON_PANELS
    nodes = np.linspace(-tau, 0.0, n + 1)
    weights = np.ones(n + 1)
    weights[1:-1:2] = 4
    weights[2:-1:2] = 2
    weights *= tau / (3 * n)
    vals = np.asarray(sig(t[..., None] + nodes), dtype=float)
    vals = np.broadcast_to(vals, t.shape + nodes.shape)
    return vals @ weights


def c_functions(M: TimeVaryingMatrix, tau: float, t):
    """``c1 = a(t) int (a + k)``, ``c2 = b(t) int (b + l)`` over the delay window."""
    t_arr = np.asarray(t, dtype=float)
    _check_domain(M, float(np.min(t_arr)) - tau, float(np.max(t_arr)))
    a, b, k, l = M.signals()
    ia = window_integral(lambda s: a(s) + k(s), tau, t_arr)
    ib = window_integral(lambda s: b(s) + l(s), tau, t_arr)
    c1 = np.asarray(a(t_arr)) * ia
    c2 = np.asarray(b(t_arr)) * ib
    if c1.ndim == 0:
        return float(c1), float(c2)
    return c1, c2


def _verdict_from_margin(name, margin, witness, w, details, positive=YES, negative=NO):
    holds = positive if margin > 0 else negative
    return CriterionVerdict(name, holds, float(margin), witness, w.surrogate, details)


def ode_lyapunov_check(M: TimeVaryingMatrix, w: AuditWindow):
    """Quadratic-Lyapunov conditions for the delay-free system ``X' = A(t) X``."""
    t = w.tail_grid()
    _check_domain(M, float(t[0]), float(t[-1]))
    a, b, k, l = _signals(M, t)
    if np.any(a < 0) or np.any(b < 0):
        raise DomainError("a(t) and b(t) must be nonnegative on the audit window")
    gap = a * b - (k + l) ** 2 / 4
    i = int(np.argmin(gap))
    m_us = float(gap[i])
    if m_us > 0:
        us = CriterionVerdict("prop3.1-uniform", YES, m_us, float(t[i]), w.surrogate)
    elif m_us == 0:
        # equality is allowed by the condition but leaves no slack to certify
        us = CriterionVerdict("prop3.1-uniform", INCONCLUSIVE, 0.0, float(t[i]), w.surrogate)
    else:
        us = CriterionVerdict("prop3.1-uniform", NO, m_us, float(t[i]), w.surrogate)
    alpha = float(np.min(a + b))
    beta = m_us
    m_as = min(alpha, beta)
    j = int(np.argmin(a + b)) if alpha <= beta else i
    ast = _verdict_from_margin("prop3.1-asymptotic", m_as, float(t[j]), w,
                               {"alpha": alpha, "beta": beta})
    return us, ast


def thm31_check(M: TimeVaryingMatrix, tau: float, v: Sequence[float] | None,
                w: AuditWindow) -> CriterionVerdict:
    """Delay-dependent M-matrix criteria (a) and (b); yes if either certifies."""
    w.validate(tau)
    t = w.tail_grid()
    a, b, k, l = _signals(M, t)
    if np.any(a <= 0) or np.any(b <= 0):
        raise DomainError("a(t) and b(t) must be positive on the audit window")
    c1, c2 = c_functions(M, tau, t)
    sup_coeff = float(max(np.max(a), np.max(b), np.max(k), np.max(l)))
    if v is not None:
        v_arr = np.asarray(v, dtype=float)
        if v_arr.shape != (2,) or np.any(v_arr <= 0):
            raise ValueError("v must be a positive 2-vector")
        rays = [v_arr]
    else:
        rays = [np.array([2.0 ** e, 1.0]) / max(2.0 ** e, 1.0) for e in V_RAY_EXPONENTS]

    def slack_a(vv):
        r1 = (a - c1) * vv[0] - k * vv[1]
        r2 = -l * vv[0] + (b - c2) * vv[1]
        s = np.minimum(r1, r2)
        i = int(np.argmin(s))
        return float(s[i]), float(t[i])

    def slack_b(vv, alpha):
        r1 = a * vv[0] - alpha * (c1 * vv[0] + k * vv[1])
        r2 = b * vv[1] - alpha * (l * vv[0] + c2 * vv[1])
        s = np.minimum(r1, r2)
        i = int(np.argmin(s))
        return float(s[i]), float(t[i])

    best_a = max(((*slack_a(vv), vv) for vv in rays), key=lambda r: r[0])
    lower_ok = float(min(np.min(a), np.min(b))) > 0
    best_b = max(((*slack_b(vv, al), vv, al) for vv in rays for al in ALPHA_CANDIDATES),
                 key=lambda r: r[0])
    details = {
        "a": {"margin": best_a[0], "witness_t": best_a[1], "v": best_a[2].tolist()},
        "b": {"margin": best_b[0], "witness_t": best_b[1], "v": best_b[2].tolist(),
              "alpha": best_b[3], "lower_bound_ok": lower_ok},
        "sup_coefficient": sup_coeff,
        "v_searched": v is None,
    }
    if best_a[0] > 0:
        return CriterionVerdict("thm3.1", YES, best_a[0], best_a[1], w.surrogate, details)
    if lower_ok and best_b[0] > 0:
        return CriterionVerdict("thm3.1", YES, best_b[0], best_b[1], w.surrogate, details)
    holds = NO if v is not None else INCONCLUSIVE
    return CriterionVerdict("thm3.1", holds, best_a[0], best_a[1], w.surrogate, details)


def cor31_check(M: TimeVaryingMatrix, tau: float, w: AuditWindow) -> CriterionVerdict:
    w.validate(tau)
    t = w.tail_grid()
    _check_domain(M, float(t[0]) - tau, float(t[-1]))
    a, b, k, l = _signals(M, t)
    if np.any(a <= 0) or np.any(b <= 0):
        raise DomainError("a(t) and b(t) must be positive on the audit window")
    sa, sb, sk, sl = M.signals()
    e1 = window_integral(lambda s: sa(s) + sk(s), tau, t) + k / a
    e2 = window_integral(lambda s: sb(s) + sl(s), tau, t) + l / b
    worst = np.maximum(e1, e2)
    i = int(np.argmax(worst))
    margin = (1 - COR31_MARGIN_FLOOR) - float(worst[i])
    return _verdict_from_margin("cor3.1", margin, float(t[i]), w,
                                {"sup_expr1": float(np.max(e1)), "sup_expr2": float(np.max(e2))})


def _block_stats(sig: CoefficientSignal, w: AuditWindow, n_blocks: int = 8):
    t = w.tail_grid()
    vals = np.asarray(sig(t), dtype=float)
    chunks = np.array_split(np.arange(t.size), n_blocks)
    times = np.array([t[c].mean() for c in chunks])
    means = np.array([vals[c].mean() for c in chunks])
    mins = np.array([vals[c].min() for c in chunks])
    return times, means, mins


def _loglog_slope(times, values) -> float | None:
    if np.any(values <= 0) or np.any(times <= 0):
        return None
    return float(np.polyfit(np.log(times), np.log(values), 1)[0])


def _integral_diverges(sig: CoefficientSignal, w: AuditWindow) -> tuple[str, float]:
    """(verdict, margin) for divergence of the integral of a positive coefficient."""
    known = sig.integral_diverges()
    if known is not None:
        lim = sig.liminf()
        margin = 1.0 if known else -1.0
        if known and lim is not None and lim > 0:
            margin = lim
        return (YES if known else NO), margin
    times, means, _ = _block_stats(sig, w)
    if means.min() >= 0.5 * means.max() and means.min() > 0:
        return YES, float(means.min())
    slope = _loglog_slope(times, means)
    if slope is None:
        return INCONCLUSIVE, 0.0
    # coefficient ~ t^slope: integral diverges iff slope >= -1
    if slope >= -0.9:
        return YES, slope + 1
    if slope <= -1.1:
        return NO, slope + 1
    return INCONCLUSIVE, slope + 1


def _liminf_positive(sig: CoefficientSignal, w: AuditWindow) -> tuple[str, float]:
    lim = sig.liminf()
    if lim is not None:
        return (YES if lim > 0 else NO), float(lim)
    times, _, mins = _block_stats(sig, w)
    if mins.min() <= 0:
        return NO, float(mins.min())
    slope = _loglog_slope(times, mins)
    if slope is not None and slope < -0.05:
        # decaying trend: the infimum is heading to zero
        return NO, slope
    return YES, float(mins.min())


def thm32_check(M: TimeVaryingMatrix, tau: float, Gsig: CoefficientSignal,
                Hsig: CoefficientSignal, w: AuditWindow):
    """(global attractor, global exponential stability) under hostility envelopes G, H.

    The ratio term of B1 uses k at the current time.
    """
    w.validate(tau)
    for name, sig in (("G", Gsig), ("H", Hsig)):
        if sig.analytic_min() < 0:
            raise ModelError(f"envelope {name} must be nonnegative")
    t = w.tail_grid()
    _check_domain(M, float(t[0]) - tau, float(t[-1]))
    a, b, k, l = _signals(M, t)
    if np.any(a <= 0) or np.any(b <= 0):
        raise DomainError("a(t) and b(t) must be positive on the audit window")
    G = np.broadcast_to(np.asarray(Gsig(t), dtype=float), t.shape)
    H = np.broadcast_to(np.asarray(Hsig(t), dtype=float), t.shape)
    sa, sb, sk, sl = M.signals()
    B1 = (k + G) / a + window_integral(lambda s: sa(s) + sk(s) + Gsig(s), tau, t)
    B2 = (l + H) / b + window_integral(lambda s: sb(s) + sl(s) + Hsig(s), tau, t)
    worst = np.maximum(B1, B2)
    i = int(np.argmax(worst))
    m3 = (1 - COR31_MARGIN_FLOOR) - float(worst[i])
    t3 = float(t[i])
    div_a, md_a = _integral_diverges(sa, w)
    div_b, md_b = _integral_diverges(sb, w)
    inf_a, mi_a = _liminf_positive(sa, w)
    inf_b, mi_b = _liminf_positive(sb, w)
    details = {
        "sup_B1": float(np.max(B1)), "sup_B2": float(np.max(B2)),
        "integral_a_diverges": div_a, "integral_b_diverges": div_b,
        "liminf_a_positive": inf_a, "liminf_b_positive": inf_b,
    }

    def combine(name, parts):
        # parts: list of (verdict, margin)
        margin = min(m for _, m in parts)
        if all(v == YES for v, _ in parts):
            holds = YES
        elif any(v == NO for v, _ in parts):
            holds = NO
            margin = min(m for v, m in parts if v == NO)
        else:
            holds = INCONCLUSIVE
        margin = float(margin)
        if holds == YES and margin <= 0:
            holds = INCONCLUSIVE
        if holds == NO and margin > 0:
            margin = -margin
        return CriterionVerdict(name, holds, margin, t3, w.surrogate, dict(details))

    c3 = (YES if m3 > 0 else NO, m3)
    attractor = combine("thm3.2-attractor", [c3, (div_a, md_a), (div_b, md_b)])
    exponential = combine("thm3.2-exponential", [c3, (inf_a, mi_a), (inf_b, mi_b)])
    return attractor, exponential


def perturbation_check(A: ArmamentMatrix, tau: float, delta_bound: float) -> CriterionVerdict:
    """Entrywise perturbations below the decay margin of the constant system keep it EAS."""
    if delta_bound < 0:
        raise ValueError("delta_bound must be nonnegative")
    if A.determinant() <= 0:
        return CriterionVerdict("thm3.3", NO, 0.0, None, None,
                                {"reason": "unperturbed system not EAS (det A <= 0)"})
    tm = tau_minus(A)
    if tau >= tm:
        return CriterionVerdict("thm3.3", NO, float(tm - tau), None, None,
                                {"reason": "unperturbed system not EAS", "tau_minus": tm})
    try:
        root = dominant_root(A, tau)
    except ArithmeticError as exc:
        return CriterionVerdict("thm3.3", INCONCLUSIVE, 0.0, None, None, {"reason": str(exc)})
    alpha = -root.lam.real / tau
    margin = alpha - delta_bound
    return CriterionVerdict(
        "thm3.3", YES if margin > 0 else NO, float(margin), None, None,
        {"alpha": alpha, "delta_bound": delta_bound, "tau_minus": tm,
         "note": "integrable perturbations give uniform stability only (no rate)"},
    )


# ---------------------------------------------------------------------------
# simulation cross-check

@dataclass
class CrossValidation:
    entries: list = field(default_factory=list)

    @property
    def falsifications(self) -> list:
        return [e for e in self.entries if e["falsified"]]

    def to_dict(self) -> dict:
        return {"entries": self.entries, "falsifications": len(self.falsifications)}


def random_histories(tau: float, dim: int, count: int, rng: np.random.Generator):
    out = []
    for _ in range(count):
        c = rng.uniform(-1, 1, dim)
        d = rng.uniform(-0.5, 0.5, dim)
        omega = rng.uniform(0.5, 3.0, dim)
        phi = rng.uniform(0, 2 * math.pi, dim)
        out.append(HistoryFunction.sinusoid(tau, c, d, omega, phi))
    return out


def _system_for(criterion: str, M: MatrixFunction, envelopes):
    zero = ConstantMatrix(np.zeros((M.dim, M.dim)))
    if criterion.startswith("prop3.1"):
        return DelayedLinearRhs(zero, current=M)
    if criterion.startswith("thm3.2") and envelopes is not None:
        return DelayedLinearRhs(M, envelope=tuple(envelopes))
    return DelayedLinearRhs(M)


def cross_validate(M: MatrixFunction, tau: float, verdicts, w: AuditWindow,
                   envelopes: tuple[CoefficientSignal, CoefficientSignal] | None = None,
                   n_histories: int = 5, seed: int = 0,
                   steps_per_delay: int = 32, growth_tol: float = 1e-3) -> CrossValidation:
    """Simulate every system whose criterion said yes and look for growth.

    Delay-free Lyapunov criteria are checked on ``X' = A(t) X``; the
    uniform-stability one only requires non-growth (rate <= growth_tol).
    Envelope criteria use ``G(t) tanh(y(t - tau))`` and ``H(t) tanh(x(t - tau))``
    as worst-case-shaped hostility terms. For the perturbation criterion the
    supplied M is the perturbed system.
    """
    rng = np.random.default_rng(seed)
    report = CrossValidation()
    horizon = w.t_end - w.t_start
    for v in verdicts:
        entry = {"criterion": v.criterion, "holds": v.holds, "rates": [], "falsified": False}
        if v.holds != YES:
            entry["checked"] = False
            report.entries.append(entry)
            continue
        entry["checked"] = True
        rhs = _system_for(v.criterion, M, envelopes)
        uniform_only = v.criterion == "prop3.1-uniform"
        for hist in random_histories(tau, M.dim, n_histories, rng):
            prob = DdeProblem(M.dim, rhs, tau, hist, horizon, steps_per_delay, w.t_start)
            try:
                traj = integrate(prob)
                rate = decay_rate(traj, w.tail_start)
            except DivergedError:
                rate = math.inf
            entry["rates"].append(rate)
            grew = rate > growth_tol if uniform_only else not rate < 0
            if grew:
                entry["falsified"] = True
        report.entries.append(entry)
    return report
