"""Stability of ``X'(t) = A X(t - tau)`` for a constant armament matrix.

Roots live in the delay-normalized time scale (t -> tau t); divide by tau
to get rates in original time units.
"""
from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass
from enum import Enum

from .core import ArmamentMatrix, ModelError

RESONANCE_TOL = 1e-9
NEWTON_MAX_ITER = 100


def _require_regime(A: ArmamentMatrix) -> float:
    det = A.determinant()
    if det <= 0:
        raise ModelError(f"no positive-determinant regime: det A = {det}")
    return det


def rho_pair(A: ArmamentMatrix) -> tuple[float, float]:
    """Roots rho- <= rho+ of ``det A rho^2 - (a+b) rho + 1 = 0``."""
    det = _require_regime(A)
    s = A.trace_sum + math.sqrt(A.discriminant())
    # small root through the product form avoids cancellation
    return 2.0 / s, s / (2.0 * det)


def tau_minus(A: ArmamentMatrix) -> float:
    """First critical delay; the equilibrium is exponentially stable below it."""
    return (math.pi / 2) * rho_pair(A)[0]


def sigma(n: int) -> float:
    return math.pi / 2 + 2 * n * math.pi


def transversality(A: ArmamentMatrix, sigma_n: float, tau: float) -> float:
    """Real part of d(lambda)/d(tau) at the imaginary root i*sigma_n (normalized scale).

    Zero when the discriminant vanishes.
    """
    d = A.discriminant()
    C = 2 * sigma_n - tau * A.trace_sum
    num = tau * sigma_n**2 * d
    if num == 0.0:
        return 0.0
    return num / (tau**2 * sigma_n**2 * d + C**2)


@dataclass(frozen=True)
class BifurcationPoint:
    n: int
    branch: str
    sigma_n: float
    tau: float
    rho: float
    transversality: float
    resonant: bool = False

    @property
    def frequency(self) -> float:
        """Angular frequency of the critical mode in original time."""
        return self.sigma_n / self.tau

    @property
    def period(self) -> float:
        return 2 * math.pi * self.tau / self.sigma_n


def bifurcation_ladder(A: ArmamentMatrix, n_max: int) -> list[BifurcationPoint]:
    """All critical delays for n = 0..n_max on both branches, sorted by delay."""
    if n_max < 0:
        raise ValueError(f"n_max must be nonnegative, got {n_max}")
    rho_m, rho_p = rho_pair(A)
    raw = []
    for n in range(n_max + 1):
        s = sigma(n)
        for branch, rho in (("minus", rho_m), ("plus", rho_p)):
            tau = s * rho
            raw.append((n, branch, s, tau, rho, transversality(A, s, tau)))
    raw.sort(key=lambda r: (r[3], r[0], r[1] != "minus"))
    taus = [r[3] for r in raw]
    points = []
    for i, r in enumerate(raw):
        resonant = any(
            j != i and abs(taus[j] - r[3]) <= RESONANCE_TOL * max(abs(taus[j]), abs(r[3]))
            for j in range(len(raw))
        )
        points.append(BifurcationPoint(*r, resonant=resonant))
    return points


def find_point(A: ArmamentMatrix, n: int, branch: str) -> BifurcationPoint:
    if branch not in ("minus", "plus"):
        raise ValueError(f"branch must be 'minus' or 'plus', got {branch!r}")
    # resonance can involve a neighbour of higher index, so look one step past n
    for pt in bifurcation_ladder(A, n + 2):
        if pt.n == n and pt.branch == branch:
            return pt
    raise AssertionError("unreachable")


def write_ladder_csv(points, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "branch", "sigma", "tau", "transversality", "resonant"])
        for p in points:
            w.writerow([p.n, p.branch, repr(p.sigma_n), repr(p.tau), repr(p.transversality),
                        str(p.resonant).lower()])


# ---------------------------------------------------------------------------
# characteristic roots

@dataclass(frozen=True)
class CharacteristicRoot:
    """Root of ``l^2 + a0 l e^-l + c0 e^-2l = 0`` in normalized time."""

    lam: complex
    branch_seed: int
    residual: float
    z: float
    converged: bool = True

    def original_time(self, tau: float) -> complex:
        return self.lam / tau


def z_pair(A: ArmamentMatrix, tau: float) -> tuple[float, float]:
    """Both (real, negative) roots of ``z^2 + a0 z + c0 = 0``."""
    _require_regime(A)
    a0 = tau * A.trace_sum
    c0 = tau * tau * A.determinant()
    sq = tau * math.sqrt(A.discriminant())
    z_far = -(a0 + sq) / 2
    z_near = c0 / z_far
    return z_far, z_near


def char_residual(A: ArmamentMatrix, tau: float, lam: complex) -> float:
    a0 = tau * A.trace_sum
    c0 = tau * tau * A.determinant()
    e = cmath.exp(-lam)
    return abs(lam * lam + a0 * lam * e + c0 * e * e)


def _newton_lambert(z: float, seed: complex) -> tuple[complex, bool]:
    """Damped Newton on ``w(l) = l e^l - z``."""
    lam = seed
    w = lam * cmath.exp(lam) - z
    for _ in range(NEWTON_MAX_ITER):
        e = cmath.exp(lam)
        dw = (1 + lam) * e
        if dw == 0:
            return lam, False
        step = -w / dw
        damping = 1.0
        while True:
            cand = lam + damping * step
            try:
                w_c = cand * cmath.exp(cand) - z
            except OverflowError:
                w_c = complex(math.inf)
            if abs(w_c) < abs(w) or damping < 1e-6:
                break
            damping *= 0.5
        converged = abs(cand - lam) <= 1e-15 * max(1.0, abs(cand))
        lam, w = cand, w_c
        if converged or w == 0:
            return lam, True
        if abs(w) <= 4e-16 * abs(z) and abs(step) <= 1e-13 * max(1.0, abs(lam)):
            return lam, True
    return lam, abs(w) <= 1e-13 * max(1.0, abs(z))


def _real_lambert(z: float) -> list[tuple[complex, int]]:
    """Real solutions of ``l e^l = z`` for z in [-1/e, 0)."""
    if z < -1 / math.e - 1e-15 or z >= 0:
        return []
    f = lambda x: x * math.exp(x) - z
    out = []
    # principal branch on [-1, 0), f increasing
    lo, hi = -1.0, 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    out.append((complex(0.5 * (lo + hi)), 0))
    # lower branch on (-inf, -1], f decreasing towards 0-
    lo, hi = -1.0, -2.0
    while f(hi) < 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    out.append((complex(0.5 * (lo + hi)), -1))
    return out


def characteristic_roots(A: ArmamentMatrix, tau: float, count: int = 6) -> list[CharacteristicRoot]:
    """The ``count`` roots of largest real part (normalized time scale).

    Each Lambert-like branch m >= 0 is seeded by its asymptotic expansion
    around ``log|z| + i(2m+1)pi`` and refined by damped Newton; conjugates are
    added, the real branches are included when z >= -1/e. Failed branches
    stay in the list with ``converged=False``.
    """
    if tau <= 0:
        raise ValueError(f"delay must be positive, got {tau}")
    if count < 1:
        raise ValueError("count must be >= 1")
    candidates: list[CharacteristicRoot] = []
    for z in z_pair(A, tau):
        roots: list[tuple[complex, int, bool]] = []
        real = _real_lambert(z)
        for lam, k in real:
            lam2, ok = _newton_lambert(z, lam)
            roots.append((complex(lam2.real, 0.0), k, ok))
        for m in range(count + 1):
            if m == 0 and real:
                continue
            L = complex(math.log(-z), (2 * m + 1) * math.pi)
            seed = L - cmath.log(L)
            lam, ok = _newton_lambert(z, seed)
            if lam.imag < 0:
                lam = lam.conjugate()
            roots.append((lam, m, ok))
            if abs(lam.imag) > 1e-12:
                roots.append((lam.conjugate(), -m - 1, ok))
        for lam, k, ok in roots:
            res = char_residual(A, tau, lam)
            candidates.append(CharacteristicRoot(lam, k, res, z, ok))
    candidates.sort(key=lambda r: (not r.converged, -r.lam.real, -r.lam.imag))
    unique: list[CharacteristicRoot] = []
    for r in candidates:
        if r.converged and any(u.converged and abs(u.lam - r.lam) <= 1e-9 * max(1.0, abs(r.lam))
                               for u in unique):
            continue
        unique.append(r)
    good = [r for r in unique if r.converged][:count]
    failed = [r for r in unique if not r.converged]
    return good + failed


def dominant_root(A: ArmamentMatrix, tau: float) -> CharacteristicRoot:
    roots = characteristic_roots(A, tau, count=2)
    if not roots[0].converged:
        raise ArithmeticError("characteristic root iteration did not converge")
    return roots[0]


class Verdict(str, Enum):
    EAS = "EAS"
    MARGINAL = "marginal"
    UNSTABLE = "unstable"
    INAPPLICABLE = "theorem inapplicable"


def stability_verdict(A: ArmamentMatrix, tau: float, tol: float = RESONANCE_TOL) -> Verdict:
    if A.determinant() <= 0:
        return Verdict.INAPPLICABLE
    tm = tau_minus(A)
    if tau < tm * (1 - tol):
        return Verdict.EAS
    rho_m, _ = rho_pair(A)
    n_max = max(0, int(math.ceil((tau / rho_m - math.pi / 2) / (2 * math.pi))) + 1)
    for pt in bifurcation_ladder(A, n_max):
        if abs(tau - pt.tau) <= tol * pt.tau:
            return Verdict.MARGINAL
    return Verdict.UNSTABLE


def hill_thresholds(A: ArmamentMatrix) -> tuple[float, float]:
    """(historical threshold, corrected threshold); the first is three times the second."""
    tm = tau_minus(A)
    return 3 * tm, tm
