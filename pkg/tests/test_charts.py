import xml.etree.ElementTree as ET

import pytest

from dderace.charts import chart_from_csv, render_chart

NS = {"svg": "http://www.w3.org/2000/svg"}

LADDER = [
    {"tau": "0.6283", "sigma": "1.5708", "resonant": "false"},
    {"tau": "3.1416", "sigma": "1.5708", "resonant": "true"},
    {"tau": "3.1416", "sigma": "7.854", "resonant": "true"},
    {"tau": "15.708", "sigma": "7.854", "resonant": "false"},
]


def markers(svg, gid):
    root = ET.fromstring(svg)
    group = root.find(f".//svg:g[@id='{gid}']", NS)
    return 0 if group is None else len(group.findall(".//svg:use", NS))


def texts(svg):
    root = ET.fromstring(svg)
    return ["".join(t.itertext()) for t in root.iter(f"{{{NS['svg']}}}text")]


def test_ladder_markers():
    svg = render_chart("ladder", LADDER)
    assert markers(svg, "ladder-simple") + markers(svg, "ladder-resonant") == 4
    assert markers(svg, "ladder-resonant") == 2


def test_trajectory_polyline_per_component():
    rows = [{"t": str(t), "x1": str(t * t), "x2": str(-t)} for t in range(5)]
    svg = render_chart("trajectory", rows)
    root = ET.fromstring(svg)
    for c in ("x1", "x2"):
        g = root.find(f".//svg:g[@id='trajectory-{c}']", NS)
        assert g is not None and len(g.findall(".//svg:path", NS)) == 1


def test_axes_have_units():
    labels = texts(render_chart("ladder", LADDER))
    assert any("(time units)" in s for s in labels)
    labels = texts(render_chart("stability_region",
                                [{"tau": "0.1", "k": "3", "verdict": "EAS"}]))
    assert any("tau (time units)" in s for s in labels)
    assert any("(1/time)" in s for s in labels)


def test_amplitude_chart():
    rows = [{"sqrt_mu": str(s), "amplitude": str(2 * s), "predicted": str(2 * s)}
            for s in (0.1, 0.2, 0.3)]
    svg = render_chart("amplitude", rows)
    assert markers(svg, "amplitude-simulated") == 3


def test_deterministic_and_self_contained():
    a = render_chart("ladder", LADDER)
    b = render_chart("ladder", LADDER)
    assert a == b
    assert "<image" not in a and 'href="http' not in a


def test_empty_data(tmp_path):
    with pytest.raises(ValueError):
        render_chart("ladder", [])
    csv = tmp_path / "empty.csv"
    csv.write_text("tau,sigma,resonant\n")
    with pytest.raises(ValueError):
        chart_from_csv("ladder", csv, tmp_path / "out.svg")
    assert not (tmp_path / "out.svg").exists()


def test_unknown_kind():
    with pytest.raises(ValueError):
        render_chart("pie", LADDER)


def test_chart_from_csv_matches_render(tmp_path):
    csv = tmp_path / "l.csv"
    csv.write_text("tau,sigma,resonant\n" + "\n".join(
        f"{r['tau']},{r['sigma']},{r['resonant']}" for r in LADDER) + "\n")
    chart_from_csv("ladder", csv, tmp_path / "l.svg")
    assert (tmp_path / "l.svg").read_text() == render_chart("ladder", LADDER)
