"""Figure data: long-form CSV per panel, a gnuplot script, and optional PNGs.

A :class:`Figure` is a list of panels, each holding labelled (x, y) series.
:func:`write_figure` always writes the delimited data and a gnuplot script
that reads it; with ``render=True`` it also draws the panels with matplotlib
(Agg backend, no display needed).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path


def upsilon(x: float) -> float:
    """Signed log scale ``log(1+x)`` for ``x >= 0`` and ``-log(1-x)`` below."""
    return math.log1p(x) if x >= 0 else -math.log1p(-x)


@dataclass
class Series:
    label: str
    x: list
    y: list
    style: str = "points"  # points | lines | linespoints

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError(f"series {self.label!r}: {len(self.x)} x values, {len(self.y)} y values")


@dataclass
class Panel:
    name: str
    title: str
    xlabel: str
    ylabel: str
    series: list = field(default_factory=list)
    logy: bool = False

    def add(self, label, x, y, style="points") -> "Panel":
        self.series.append(Series(label, list(x), [float(v) for v in y], style))
        return self


@dataclass
class Figure:
    name: str
    panels: list
    caption: str = ""


def _csv_name(fig: Figure, panel: Panel) -> str:
    return f"{fig.name}_{panel.name}.csv"


def write_panel_csv(path: Path, panel: Panel, header_lines=()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "x", "y"])
        for s in panel.series:
            for x, y in zip(s.x, s.y):
                w.writerow([s.label, x, repr(y) if math.isfinite(y) else "nan"])


def gnuplot_script(fig: Figure) -> str:
    rows = math.ceil(len(fig.panels) / 2)
    cols = 1 if len(fig.panels) == 1 else 2
    lines = [
        f"# {fig.caption}" if fig.caption else f"# {fig.name}",
        'set datafile separator ","',
        "set datafile missing \"nan\"",
        f"set terminal pngcairo size {640 * cols},{480 * rows}",
        f"set output \"{fig.name}.png\"",
        f"set multiplot layout {rows},{cols}",
        "set key top right",
    ]
    for panel in fig.panels:
        lines += [f"set title \"{panel.title}\"", f"set xlabel \"{panel.xlabel}\"",
                  f"set ylabel \"{panel.ylabel}\"",
                  "set logscale y" if panel.logy else "unset logscale y"]
        data = _csv_name(fig, panel)
        plots = []
        for s in panel.series:
            plots.append(f"\"{data}\" every ::1 using 2:(strcol(1) eq \"{s.label}\" ? $3 : 1/0) "
                         f"with {s.style} title \"{s.label}\"")
        lines.append("plot " + ", \\\n     ".join(plots) if plots else "plot 0 notitle")
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def render_png(fig: Figure, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = len(fig.panels)
    cols = 1 if n == 1 else 2
    rows = math.ceil(n / cols)
    f, axes = plt.subplots(rows, cols, figsize=(6.4 * cols, 4.8 * rows), squeeze=False)
    for ax, panel in zip(axes.flat, fig.panels):
        for s in panel.series:
            fmt = {"points": "o", "lines": "-", "linespoints": "o-"}.get(s.style, "o")
            ax.plot(s.x, s.y, fmt, label=s.label, markersize=3)
        if panel.logy:
            ax.set_yscale("log")
        ax.set_title(panel.title)
        ax.set_xlabel(panel.xlabel)
        ax.set_ylabel(panel.ylabel)
        if panel.series:
            ax.legend(fontsize="small")
    for ax in list(axes.flat)[n:]:
        ax.set_visible(False)
    f.tight_layout()
    f.savefig(path, dpi=100)
    plt.close(f)


def write_figure(fig: Figure, outdir, header_lines=(), render: bool = False) -> list:
    """Write ``<name>_<panel>.csv`` files and ``<name>.gp``; also ``<name>.png`` if asked."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for panel in fig.panels:
        path = outdir / _csv_name(fig, panel)
        write_panel_csv(path, panel, header_lines)
        written.append(path)
    gp = outdir / f"{fig.name}.gp"
    gp.write_text(gnuplot_script(fig), encoding="utf-8")
    written.append(gp)
    if render:
        png = outdir / f"{fig.name}.png"
        render_png(fig, png)
        written.append(png)
    return written
