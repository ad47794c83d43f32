"""Command-line front end: ``dde-race <command> --model M.json --out DIR``.

Exit status: 0 success, 2 invalid model, 3 numerical failure, 64 usage error.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .autonomous import (
    Verdict,
    bifurcation_ladder,
    dominant_root,
    find_point,
    hill_thresholds,
    rho_pair,
    stability_verdict,
    tau_minus,
    write_ladder_csv,
)
from .charts import chart_from_csv
from .core import (
    ArmamentMatrix,
    CoefficientSignal,
    ConstantMatrix,
    DomainError,
    ModelError,
    NumericalError,
    equilibrium,
)
from .engine import (
    BACKEND,
    DdeProblem,
    DelayedLinearRhs,
    DivergedError,
    decay_rate,
    integrate,
)
from .hopf import hopf_coefficients, verify_hopf_by_simulation
from .modelio import Model, load_model, write_report
from .nonautonomous import (
    INCONCLUSIVE,
    AuditWindow,
    CriterionVerdict,
    cor31_check,
    cross_validate,
    ode_lyapunov_check,
    perturbation_check,
    thm31_check,
    thm32_check,
)
from .special import SpecialSeriesConfig, Mn_terms, special_constants, thm41_check, write_series_csv

EX_OK, EX_MODEL, EX_NUMERIC, EX_USAGE = 0, 2, 3, 64

TIME_SCALE_NOTE = ("characteristic roots are given in delay-normalized time; "
                   "divide by tau for rates in original time units")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str, count: int | None = None, name: str = "value") -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}") from exc
    if count is not None and len(vals) != count:
        raise UsageError(f"{name}: expected {count} numbers, got {text!r}")
    return vals


def _range(text: str, name: str) -> np.ndarray:
    lo, hi, k = _floats(text, 3, name)
    if int(k) != k or k < 2:
        raise UsageError(f"{name}: resolution must be an integer >= 2")
    return np.linspace(lo, hi, int(k))


def _delay(model: Model, override: float | None) -> float:
    tau = override if override is not None else model.delay
    if tau is None:
        raise ModelError("no delay given: set 'delay' in the model or pass --tau")
    if not tau > 0:
        raise ModelError(f"delay must be positive, got {tau}")
    return float(tau)


def _point_dict(p) -> dict:
    return {"n": p.n, "branch": p.branch, "sigma": p.sigma_n, "tau": p.tau, "rho": p.rho,
            "transversality": p.transversality, "resonant": p.resonant}


# ---------------------------------------------------------------------------
# commands

def cmd_analyze(args, model: Model, out: Path) -> int:
    A = model.constant
    rm, rp = rho_pair(A)
    ladder = bifurcation_ladder(A, args.n_max)
    hill, tm = hill_thresholds(A)
    report = {
        "command": "analyze-autonomous",
        "matrix": A.to_dict(),
        "det_A": A.determinant(),
        "rho_minus": rm,
        "rho_plus": rp,
        "tau_minus": tm,
        "hill_tau_star": hill,
        "ladder": [_point_dict(p) for p in ladder],
        "resonances": [_point_dict(p) for p in ladder if p.resonant],
        "time_scale": TIME_SCALE_NOTE,
    }
    if model.bound is not None:
        report["equilibrium"] = equilibrium(A, model.bound)
        report["hostility_bound"] = [model.bound.b1bar, model.bound.b2bar]
    if model.delay is not None:
        tau = model.delay
        root = dominant_root(A, tau)
        report["at_delay"] = {
            "tau": tau,
            "verdict": stability_verdict(A, tau).value,
            "dominant_root_normalized": root.lam,
            "dominant_root_original": root.original_time(tau),
            "residual": root.residual,
        }
    write_ladder_csv(ladder, out / "ladder.csv")
    chart_from_csv("ladder", out / "ladder.csv", out / "ladder.svg")
    write_report(report, out / "report.json")
    return EX_OK


def _parse_point(text: str):
    try:
        n_txt, br = text.split(",")
        n = int(n_txt)
    except ValueError as exc:
        raise UsageError(f"--point: expected 'n,branch', got {text!r}") from exc
    br = {"-": "minus", "+": "plus"}.get(br.strip(), br.strip())
    if br not in ("minus", "plus") or n < 0:
        raise UsageError(f"--point: branch must be minus or plus and n >= 0, got {text!r}")
    return n, br


def cmd_hopf(args, model: Model, out: Path) -> int:
    A = model.constant
    n, br = _parse_point(args.point)
    point = find_point(A, n, br)
    mus = _floats(args.mu, None, "--mu")
    data = hopf_coefficients(A, model.cubic, point)
    report = data.to_dict(mus)
    report.update({"command": "hopf", "n": n, "branch": br, "rho": point.rho,
                   "transversality": point.transversality,
                   "physical_amplitude_note": "first-order mapping: amplitude_j ~ 2 r* |v_j|, v = (1, v2)"})
    warn = [mu for mu in mus if abs(mu) / point.tau > 0.1]
    if warn:
        report["warnings"] = [f"|mu|/tau > 0.1 for mu={mu}; normal form may be inaccurate"
                              for mu in warn]
    if not args.no_simulate and data.classification == "supercritical":
        sim = verify_hopf_by_simulation(A, model.cubic, point, mus, args.steps_per_delay)
        report["simulation"] = {
            "expected_period": sim.expected_period,
            "runs": [vars(r) for r in sim.runs],
            "checks": sim.checks,
        }
        rows = []
        with open(out / "amplitude.csv", "w") as fh:
            fh.write("mu,sqrt_mu,amplitude,predicted,period,status\n")
            for r in sim.runs:
                if r.mu <= 0:
                    continue
                pred = None if r.predicted_amplitude is None else 2 * r.predicted_amplitude
                fh.write(f"{r.mu!r},{math.sqrt(r.mu)!r},{r.amplitude!r},{pred!r},"
                         f"{r.period!r},{r.status}\n")
                rows.append(r)
        if rows:
            chart_from_csv("amplitude", out / "amplitude.csv", out / "amplitude.svg")
    write_report(report, out / "report.json")
    return EX_OK


def cmd_simulate(args, model: Model, out: Path) -> int:
    tau = _delay(model, args.tau)
    if isinstance(model.matrix, ArmamentMatrix):
        rhs = DelayedLinearRhs(ConstantMatrix(model.matrix.as_array()),
                               cubic=None if model.cubic.is_zero else model.cubic)
    else:
        M = model.matrix_function()
        env = model.envelopes if M.dim == 2 else None
        rhs = DelayedLinearRhs(M, cubic=None if (model.cubic.is_zero or M.dim != 2) else model.cubic,
                               envelope=env)
    dim = rhs.dim
    hist = model.history_for(tau, dim)
    prob = DdeProblem(dim, rhs, tau, hist, args.horizon, args.steps_per_delay)
    report = {"command": "simulate", "tau": tau, "horizon": args.horizon,
              "steps_per_delay": args.steps_per_delay, "backend": BACKEND,
              "coordinates": "deviation from equilibrium"}
    if isinstance(model.matrix, ArmamentMatrix):
        report["verdict"] = stability_verdict(model.matrix, tau).value
        if model.bound is not None:
            report["equilibrium"] = equilibrium(model.matrix, model.bound)
    try:
        traj = integrate(prob)
    except DivergedError as exc:
        report.update({"status": "diverged", "t_blowup": exc.t_blowup})
        if exc.partial is not None:
            exc.partial.to_csv(out / "trajectory.csv")
        write_report(report, out / "report.json")
        raise
    traj.to_csv(out / "trajectory.csv")
    chart_from_csv("trajectory", out / "trajectory.csv", out / "trajectory.svg")
    report["status"] = "completed"
    report["final_state"] = traj.states[-1]
    t_tail = traj.t_end / 2
    if (traj.t_end - t_tail) >= 5 * tau:
        report["decay_rate"] = decay_rate(traj, t_tail)
        report["decay_rate_from"] = t_tail
    write_report(report, out / "report.json")
    return EX_OK


def _midrange_perturbation(M, w: AuditWindow):
    t = np.arange(w.t_start, w.t_end + 0.5 * w.step, w.step)
    mats = np.asarray(M(t))
    hi, lo = mats.max(axis=0), mats.min(axis=0)
    base = 0.5 * (hi + lo)
    delta = float(np.max(0.5 * (hi - lo)))
    return base, delta


def cmd_check(args, model: Model, out: Path) -> int:
    tau = _delay(model, args.tau)
    M = model.race_matrix()
    t0, t1 = _floats(args.window, 2, "--window")
    w = AuditWindow(t0, t1, args.step if args.step else tau / 16, args.tail_fraction)
    w.validate(tau)
    v = _floats(args.v, 2, "--v") if args.v else None
    verdicts = list(ode_lyapunov_check(M, w))
    verdicts.append(thm31_check(M, tau, v, w))
    verdicts.append(cor31_check(M, tau, w))
    env = model.envelopes or (CoefficientSignal.constant(0.0, True),
                              CoefficientSignal.constant(0.0, True))
    verdicts.extend(thm32_check(M, tau, env[0], env[1], w))
    base, delta = _midrange_perturbation(M, w)
    if model.delta_bound is not None:
        delta = model.delta_bound
    try:
        A0 = ArmamentMatrix(-base[0, 0], -base[1, 1], base[0, 1], base[1, 0])
        pv = perturbation_check(A0, tau, delta)
        pv.details["base_matrix"] = base
    except ModelError as exc:
        pv = CriterionVerdict("thm3.3", INCONCLUSIVE, 0.0, None, None, {"reason": str(exc)})
    verdicts.append(pv)
    report = {
        "command": "check-nonautonomous",
        "tau": tau,
        "window": [t0, t1],
        "surrogate": "finite-horizon: asymptotic conditions evaluated on the window tail",
        "verdicts": [vd.to_dict() for vd in verdicts],
        "details": {vd.criterion: vd.details for vd in verdicts},
    }
    if args.cross_validate:
        cv = cross_validate(M, tau, verdicts, w, envelopes=model.envelopes)
        report["cross_validation"] = cv.to_dict()
    with open(out / "verdicts.csv", "w") as fh:
        fh.write("criterion,holds,margin,witness_t\n")
        for vd in verdicts:
            fh.write(f"{vd.criterion},{vd.holds},{vd.margin!r},{vd.witness_t!r}\n")
    write_report(report, out / "report.json")
    return EX_OK


def cmd_special(args, model: Model, out: Path) -> int:
    tau = _delay(model, args.tau)
    M = model.matrix_function()
    cfg = SpecialSeriesConfig(args.order, args.panels, args.norm)
    if args.window:
        t0, t1 = _floats(args.window, 2, "--window")
    else:
        t0, t1 = (cfg.order + 1) * tau, (cfg.order + 41) * tau
    w = AuditWindow(t0, t1, tau / 16)
    verdict = thm41_check(M, tau, w, cfg)
    series = Mn_terms(M, tau, t1, cfg)
    report = {
        "command": "special-solutions",
        "tau": tau,
        "verdicts": [verdict.to_dict()],
        "details": verdict.details,
        "series": {
            "t": t1,
            "order": cfg.order,
            "panels": cfg.panels,
            "norm": cfg.norm,
            "m": series.m,
            "M_truncated": series.truncated,
            "tail_bound": series.tail_bound(cfg.order),
            "norms": series.norms(),
        },
    }
    if series.m > 0 and series.m * math.e * tau < 1:
        sc = special_constants(series.m, tau)
        report["constants"] = {"m": sc.m, "lambda0": sc.lambda0, "S0": sc.S0, "S1": sc.S1}
    write_series_csv(series, out / "series.csv")
    write_report(report, out / "report.json")
    return EX_OK


def _sweep_point(args):
    A, tau = args
    try:
        verdict = stability_verdict(A, tau)
    except ModelError:
        return Verdict.INAPPLICABLE.value, math.nan
    if verdict == Verdict.INAPPLICABLE:
        return verdict.value, math.nan
    return verdict.value, dominant_root(A, tau).lam.real / tau


def _threads() -> int:
    env = os.environ.get("DDE_RACE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise UsageError(f"DDE_RACE_THREADS must be an integer, got {env!r}") from exc
        return max(1, n)
    return os.cpu_count() or 1


def cmd_sweep(args, model: Model, out: Path) -> int:
    A = model.constant
    taus = _range(args.tau_range, "--tau-range")
    if np.any(taus <= 0):
        raise UsageError("--tau-range must contain positive delays")
    ks = _range(args.k_range, "--k-range") if args.k_range else np.array([A.k])
    jobs = []
    for k in ks:
        Ak = replace(A, k=float(k))
        for tau in taus:
            jobs.append((Ak, float(tau)))
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(_sweep_point, jobs))
    rows = []
    with open(out / "stability_region.csv", "w") as fh:
        fh.write("index,k,tau,verdict,dominant_re\n")
        for i, ((Ak, tau), (verdict, re)) in enumerate(zip(jobs, results)):
            fh.write(f"{i},{Ak.k!r},{tau!r},{verdict},{re!r}\n")
            rows.append({"index": i, "k": Ak.k, "tau": tau, "verdict": verdict,
                         "dominant_re": re})
    chart_from_csv("stability_region", out / "stability_region.csv", out / "stability_region.svg")
    flips = [i for i in range(1, len(rows)) if rows[i]["k"] == rows[i - 1]["k"]
             and rows[i]["verdict"] != rows[i - 1]["verdict"]]
    report = {"command": "sweep", "matrix": A.to_dict(), "points": rows,
              "verdict_changes": flips, "threads": _threads()}
    try:
        report["tau_minus"] = tau_minus(A)
    except ModelError:
        pass
    write_report(report, out / "report.json")
    return EX_OK


COMMANDS = {
    "analyze-autonomous": cmd_analyze,
    "hopf": cmd_hopf,
    "simulate": cmd_simulate,
    "check-nonautonomous": cmd_check,
    "special-solutions": cmd_special,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dde-race", description="Delayed arms-race model analysis")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--model", required=True, help="model JSON document")
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("analyze-autonomous", help="threshold, ladder and verdict")
    common(sp)
    sp.add_argument("--n-max", type=int, default=3)

    sp = sub.add_parser("hopf", help="normal-form coefficients at a ladder point")
    common(sp)
    sp.add_argument("--point", default="0,minus", help="n,branch (branch: minus|plus)")
    sp.add_argument("--mu", default="0.01", help="comma-separated delay offsets (time units)")
    sp.add_argument("--steps-per-delay", type=int, default=64)
    sp.add_argument("--no-simulate", action="store_true")

    sp = sub.add_parser("simulate", help="integrate the model in deviation coordinates")
    common(sp)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--horizon", type=float, required=True)
    sp.add_argument("--steps-per-delay", type=int, default=64)

    sp = sub.add_parser("check-nonautonomous", help="time-varying stability criteria")
    common(sp)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--window", required=True, help="T0,T1")
    sp.add_argument("--step", type=float)
    sp.add_argument("--tail-fraction", type=float, default=0.5)
    sp.add_argument("--v", help="fixed positive vector v1,v2 for the M-matrix criterion")
    sp.add_argument("--cross-validate", action="store_true")

    sp = sub.add_parser("special-solutions", help="special-solution reduction")
    common(sp)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--order", type=int, default=20)
    sp.add_argument("--panels", type=int, default=64)
    sp.add_argument("--norm", default="max-row-sum")
    sp.add_argument("--window", help="T0,T1 (default: 40 delays after the series reach)")

    sp = sub.add_parser("sweep", help="stability region over (k, tau)")
    common(sp)
    sp.add_argument("--tau-range", required=True, help="A,B,K")
    sp.add_argument("--k-range", help="A,B,K (default: model k)")
    return p


def run(argv: list[str]) -> int:
    if not argv or argv[0] not in COMMANDS:
        if argv and argv[0] in ("-h", "--help", "--version"):
            build_parser().parse_args(argv)
            return EX_OK
        bad = argv[0] if argv else "(none)"
        print(f"dde-race: unknown command {bad}", file=sys.stderr)
        print(build_parser().format_usage(), file=sys.stderr, end="")
        return EX_USAGE
    try:
        args = build_parser().parse_args(argv)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise UsageError(f"output directory {out} is not writable")
        model = load_model(args.model)
        return COMMANDS[args.command](args, model, out)
    except UsageError as exc:
        print(f"dde-race: {exc}", file=sys.stderr)
        return EX_USAGE
    except (ModelError, DomainError) as exc:
        print(f"dde-race: invalid model: {exc}", file=sys.stderr)
        return EX_MODEL
    except DivergedError as exc:
        print(f"dde-race: diverged at t={exc.t_blowup!r}", file=sys.stderr)
        return EX_NUMERIC
    except (NumericalError, ArithmeticError) as exc:
        print(f"dde-race: numerical failure: {exc}", file=sys.stderr)
        return EX_NUMERIC


def main(argv: list[str] | None = None) -> int:
    return run(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
