import csv
import math

import pytest

from srnmeasure.numeric import NumericBackend
from srnmeasure.plotting import Figure, Panel, gnuplot_script, upsilon, write_figure
from srnmeasure.report import ReportOptions, build_report, log_growth_fit

B64 = NumericBackend("binary64")


def test_upsilon_is_odd_and_log_like():
    assert upsilon(0.0) == 0.0
    assert upsilon(-3.0) == -upsilon(3.0)
    assert upsilon(math.e - 1) == pytest.approx(1.0)


def _figure():
    p = Panel("a", "first panel", "x", "y").add("s1", [0, 1, 2], [1.0, 2.0, float("inf")])
    p.add("s2", [0, 1], [3.0, 4.0], "lines")
    q = Panel("b", "second panel", "n", "v", logy=True).add("only", [1], [0.5])
    return Figure("demo", [p, q], "demo figure")


def test_series_length_mismatch():
    with pytest.raises(ValueError):
        Panel("a", "t", "x", "y").add("bad", [0, 1], [1.0])


def test_write_figure_files(tmp_path):
    files = write_figure(_figure(), tmp_path, ["manifest: {}"])
    names = sorted(p.name for p in files)
    assert names == ["demo.gp", "demo_a.csv", "demo_b.csv"]
    lines = (tmp_path / "demo_a.csv").read_text().splitlines()
    assert lines[0] == "# manifest: {}"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["series", "x", "y"]
    assert rows[3] == ["s1", "2", "nan"]
    assert len(rows) == 1 + 5


def test_gnuplot_script_selects_series():
    text = gnuplot_script(_figure())
    assert "set multiplot layout 1,2" in text
    assert 'strcol(1) eq "s2"' in text and "with lines" in text
    assert "set logscale y" in text
    assert sum(line.startswith("plot ") for line in text.splitlines()) == 2


def test_png_rendering(tmp_path):
    files = write_figure(_figure(), tmp_path, render=True)
    png = tmp_path / "demo.png"
    assert png in files
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_log_growth_fit_recovers_coefficients():
    states = list(range(4, 51, 2))
    values = {y: math.exp(1.5 + 0.5 * y * math.log(y) - 2.0 * y) for y in states}
    coef, err = log_growth_fit(values, states)
    assert coef == pytest.approx((1.5, 0.5, -2.0), abs=1e-9)
    assert err < 1e-9


def test_report_first_example(net):
    rep = build_report(net("first"), ReportOptions(backend=B64))
    s = rep.summary
    assert s["qp"]["v"] == pytest.approx([0.25138879, 0.74861121], abs=1e-7)
    assert s["linear_small"]["v"] == pytest.approx([0.25138868, 0.74861132], abs=1e-8)
    assert s["a_matrix"]["period"] == 2
    panels = {p.name for p in rep.figures[0].panels}
    assert panels == {"small", "large", "generators", "gamma", "periodic"}


def test_report_qp_refusal_recorded(net):
    rep = build_report(net("first"), ReportOptions(n_qp=30, backend=B64))
    assert "refused" in rep.summary["qp"]


def test_report_cycle_period(net):
    rep = build_report(net("cycle"), ReportOptions(n_large=120, backend=B64))
    assert rep.summary["a_matrix"]["detected_period"] == 3


def test_report_phi_family(net, tmp_path):
    rep = build_report(net("nonunique"), ReportOptions(phis=(2.67, 2.0, 1.54), backend=B64))
    fit = rep.summary["even_fit"]
    assert fit["max_error"] < 0.1
    assert fit["coefficients"][1] == pytest.approx(2.009, abs=0.01)
    assert [f.name for f in rep.figures] == ["measure", "phi_family"]
    for fig in rep.figures:
        write_figure(fig, tmp_path)
    assert (tmp_path / "phi_family_logdiff.csv").exists()
