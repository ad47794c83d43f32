"""Deterministic SVG charts built from CSV rows."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

KINDS = ("ladder", "trajectory", "stability_region", "amplitude")

_RC = {
    "svg.hashsalt": "dderace",
    "svg.fonttype": "none",
    "path.simplify": False,
}


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _f(row, key):
    return float(row[key])


def _ladder(ax, rows):
    ok = [r for r in rows if r["resonant"] != "true"]
    res = [r for r in rows if r["resonant"] == "true"]
    for group, style, label, gid in ((ok, dict(marker="o", color="tab:blue"), "simple", "simple"),
                                     (res, dict(marker="s", color="tab:red", markersize=9),
                                      "resonant (double Hopf)", "resonant")):
        if group:
            ax.plot([_f(r, "tau") for r in group], [_f(r, "sigma") for r in group],
                    linestyle="none", label=label, gid=f"ladder-{gid}", **style)
    ax.set_xlabel("critical delay tau (time units)")
    ax.set_ylabel("sigma_n (rad per delay)")
    ax.set_title("Bifurcation ladder")
    ax.legend()


def _trajectory(ax, rows):
    cols = [c for c in rows[0] if c != "t"]
    t = [_f(r, "t") for r in rows]
    for c in cols:
        ax.plot(t, [_f(r, c) for r in rows], label=c, linewidth=1, gid=f"trajectory-{c}")
    ax.set_xlabel("time t (time units)")
    ax.set_ylabel("deviation from equilibrium (armament units)")
    ax.set_title("Trajectory")
    ax.legend()


_VERDICT_COLORS = {"EAS": "tab:green", "marginal": "tab:orange", "unstable": "tab:red",
                   "theorem inapplicable": "tab:gray"}


def _region(ax, rows):
    for verdict, color in _VERDICT_COLORS.items():
        sel = [r for r in rows if r["verdict"] == verdict]
        if sel:
            ax.plot([_f(r, "tau") for r in sel], [_f(r, "k") for r in sel], linestyle="none",
                    marker="s", color=color, label=verdict, gid="region-" + verdict.replace(" ", "-"))
    ax.set_xlabel("delay tau (time units)")
    ax.set_ylabel("threat coefficient k (1/time)")
    ax.set_title("Stability region")
    ax.legend()


def _amplitude(ax, rows):
    xs = [_f(r, "sqrt_mu") for r in rows if r["amplitude"] not in ("", "None")]
    ys = [_f(r, "amplitude") for r in rows if r["amplitude"] not in ("", "None")]
    ax.plot(xs, ys, marker="o", linestyle="none", label="simulated", gid="amplitude-simulated")
    pred = [(_f(r, "sqrt_mu"), _f(r, "predicted")) for r in rows
            if r.get("predicted") not in (None, "", "None")]
    if pred:
        ax.plot([p[0] for p in pred], [p[1] for p in pred], marker="x", linestyle="--",
                label="normal form 2 r*", gid="amplitude-predicted")
    ax.set_xlabel("sqrt(mu) (sqrt time units)")
    ax.set_ylabel("amplitude of x (armament units)")
    ax.set_title("Hopf amplitude")
    ax.legend()


_DRAW = {"ladder": _ladder, "trajectory": _trajectory, "stability_region": _region,
         "amplitude": _amplitude}


def render_chart(kind: str, data: list[dict]) -> str:
    """SVG text for ``kind`` from CSV-style rows (strings as read back from disk)."""
    if kind not in _DRAW:
        raise ValueError(f"unknown chart kind {kind!r}")
    if not data:
        raise ValueError(f"no data for {kind} chart")
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        try:
            _DRAW[kind](ax, data)
            ax.grid(True, alpha=0.3)
            fig.tight_layout()
            buf = io.StringIO()
            fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        finally:
            plt.close(fig)
    return buf.getvalue()


def chart_from_csv(kind: str, csv_path, svg_path) -> None:
    """Render ``kind`` from a CSV file; nothing is written if rendering fails."""
    svg = render_chart(kind, read_csv_rows(csv_path))
    Path(svg_path).write_text(svg)
