"""Center-manifold normal form at a critical delay and its simulation check.

On the center manifold the radius obeys ``r' = K1 mu r + K2 r^3`` (normalized
time, mu = tau - tau_critical). Cubic hostility is applied to the delayed
state; quadratic terms are not supported.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autonomous import BifurcationPoint
from .core import ArmamentMatrix, CubicHostility, HistoryFunction, ModelError
from .engine import (
    DivergedError,
    NoOscillationError,
    decay_rate,
    integrate,
    linear_problem,
    oscillation_amplitude,
    oscillation_period,
)

DEGENERATE_TOL = 1e-12


class ResonanceError(ModelError):
    """Two critical delays coincide (double Hopf); not analysed here."""


@dataclass(frozen=True)
class HopfData:
    point: BifurcationPoint
    v2: float
    u1: complex
    K1: float
    K2: float
    classification: str
    direction_g: float
    direction_h: float
    h_weight: float
    normalization: float

    @property
    def eigenvector(self) -> np.ndarray:
        return np.array([1.0, self.v2])

    def to_dict(self, mu_values=()) -> dict:
        return {
            "tau": self.point.tau,
            "sigma": self.point.sigma_n,
            "K1": self.K1,
            "K2": self.K2,
            "classification": self.classification,
            "v2": self.v2,
            "predicted_amplitudes": [
                {"mu": mu, "r_star": predicted_amplitude(self, mu)} for mu in mu_values
            ],
        }


def hopf_coefficients(A: ArmamentMatrix, cubic: CubicHostility,
                      point: BifurcationPoint) -> HopfData:
    if A.determinant() <= 0:
        raise ModelError(f"det A = {A.determinant()} <= 0; no critical delays")
    if A.k <= 0 or A.l <= 0:
        raise ModelError("eigenvector formula singular: k and l must be positive")
    if point.resonant:
        raise ResonanceError(
            f"H3 violated at tau={point.tau}: double-Hopf point, out of scope"
        )
    rho, sig, tau = point.rho, point.sigma_n, point.tau
    t = rho * A.a - 1.0
    v2 = t / (rho * A.k)
    D = 1.0 + t * t / (rho * rho * A.k * A.l)
    u1 = 1.0 / ((1.0 + 1j * sig) * D)
    h_weight = t / (rho * A.l)
    G, H = cubic.directional(v2)
    K1 = sig / (rho * (1.0 + sig * sig))
    # real part of the resonant cubic coefficient -i tau/2 * u^T F3(v)
    K2 = -tau * sig / (2.0 * (1.0 + sig * sig)) / D * (G + h_weight * H)
    if abs(K2) < DEGENERATE_TOL:
        cls = "degenerate"
    elif K2 < 0:
        cls = "supercritical"
    else:
        cls = "subcritical"
    norm = abs((1.0 + 1j * sig) * u1 * D) - 1.0
    return HopfData(point, v2, u1, K1, K2, cls, G, H, h_weight, norm)


def predicted_amplitude(data: HopfData, mu: float) -> float | None:
    """Normal-form radius of the bifurcating orbit, or None if no orbit at this mu."""
    if data.classification == "degenerate" or mu == 0:
        return None
    if data.classification == "supercritical" and mu > 0:
        return math.sqrt(-data.K1 * mu / data.K2)
    if data.classification == "subcritical" and mu < 0:
        return math.sqrt(-data.K1 * mu / data.K2)
    return None


def physical_amplitudes(data: HopfData, r: float) -> np.ndarray:
    """First-order amplitude of each state coordinate, ``2 r |v_j|``."""
    return 2.0 * r * np.abs(data.eigenvector)


@dataclass
class HopfRun:
    mu: float
    tau: float
    status: str
    decay_rate: float | None = None
    amplitude: float | None = None
    predicted_amplitude: float | None = None
    period: float | None = None
    message: str = ""


@dataclass
class HopfSimulationReport:
    data: HopfData
    runs: list[HopfRun]
    expected_period: float
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())


def _simulate(A: ArmamentMatrix, cubic: CubicHostility, data: HopfData, mu: float,
              steps_per_delay: int, relax_constants: float) -> HopfRun:
    tau = data.point.tau + mu
    if tau <= 0:
        return HopfRun(mu, tau, "invalid", message="delay not positive")
    omega = data.point.sigma_n / tau
    r_star = predicted_amplitude(data, mu)
    if mu > 0 and r_star is not None:
        amp = physical_amplitudes(data, r_star)
    else:
        # small kick along the critical eigenvector
        amp = 0.02 * np.abs(data.eigenvector) * (1 if mu < 0 else 0.5)
    phases = np.where(data.eigenvector >= 0, math.pi / 2, -math.pi / 2)
    hist = HistoryFunction.sinusoid(tau, np.zeros(2), amp, np.full(2, omega), phases)
    # amplitude transient decays at rate 2 K1 |mu| per unit normalized time
    rate = 2 * data.K1 * abs(mu) / tau
    horizon = max(200 * tau, relax_constants / rate) if rate > 0 else 400 * tau
    horizon = min(horizon, 4000 * tau)
    try:
        traj = integrate(linear_problem(A, tau, hist, horizon, steps_per_delay, cubic=cubic))
    except DivergedError as exc:
        return HopfRun(mu, tau, "escaped basin", message=str(exc))
    t_tail = traj.t_end - 0.2 * horizon
    run = HopfRun(mu, tau, "", predicted_amplitude=r_star)
    run.decay_rate = decay_rate(traj, t_tail)
    try:
        run.amplitude = oscillation_amplitude(traj, 0, t_tail)
        run.period = oscillation_period(traj, 0, t_tail)
        run.status = "oscillating" if run.decay_rate > -1e-3 / tau else "decaying"
    except NoOscillationError:
        run.status = "decayed"
    return run


def verify_hopf_by_simulation(A: ArmamentMatrix, cubic: CubicHostility,
                              point: BifurcationPoint, mu_list,
                              steps_per_delay: int = 64,
                              relax_constants: float = 8.0) -> HopfSimulationReport:
    """Simulate the cubic model at ``tau = point.tau + mu`` for each mu.

    Checks: decay for mu < 0; period of the smallest positive mu within 5% of
    ``2 pi tau / sigma``; amplitude ratios of positive mu follow the square-root
    law within 15%.
    """
    data = hopf_coefficients(A, cubic, point)
    runs = [_simulate(A, cubic, data, float(mu), steps_per_delay, relax_constants)
            for mu in mu_list]
    expected = point.period
    checks: dict = {}
    neg = [r for r in runs if r.mu < 0]
    if neg:
        checks["decay_below_threshold"] = {
            "passed": all(r.decay_rate is not None and r.decay_rate < 0 for r in neg),
            "rates": [r.decay_rate for r in neg],
        }
    pos = sorted((r for r in runs if r.mu > 0), key=lambda r: r.mu)
    osc = [r for r in pos if r.status == "oscillating" and r.amplitude]
    if pos:
        first = pos[0]
        err = None if first.period is None else abs(first.period - expected) / expected
        checks["period"] = {
            "passed": err is not None and err <= 0.05,
            "mu": first.mu,
            "period": first.period,
            "expected": expected,
            "relative_error": err,
        }
    if len(osc) >= 2:
        ratios = []
        for lo, hi in zip(osc[:-1], osc[1:]):
            law = math.sqrt(hi.mu / lo.mu)
            ratios.append({"mu_low": lo.mu, "mu_high": hi.mu,
                           "ratio": hi.amplitude / lo.amplitude, "law": law,
                           "relative_error": abs(hi.amplitude / lo.amplitude / law - 1)})
        checks["sqrt_law"] = {
            "passed": all(r["relative_error"] <= 0.15 for r in ratios),
            "ratios": ratios,
        }
    elif len(pos) >= 2:
        checks["sqrt_law"] = {"passed": False, "ratios": [],
                              "reason": "fewer than two oscillating runs"}
    return HopfSimulationReport(data, runs, expected, checks)


def write_hopf_json(data: HopfData, mu_values, path) -> None:
    with open(path, "w") as fh:
        json.dump(data.to_dict(mu_values), fh, indent=2, sort_keys=True)
        fh.write("\n")
