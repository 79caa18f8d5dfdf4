"""Figure-ready data for a network: measures, generators, coefficients, periodicity.

:func:`build_report` runs both approximation schemes over a range of
truncation levels and returns :class:`~srnmeasure.plotting.Figure` objects plus
a JSON-ready summary.  For upwardly skip-free chains a list of ``phi*`` values
adds the one-parameter family of measures and the even-state growth fit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .chain import as_translated
from .coeff import gamma_table
from .errors import NumericalBreakdown
from .numeric import NumericBackend, to_float
from .plotting import Figure, Panel, upsilon
from .solve import (SchemeInvalid, a_matrix_diagnostics, assemble_measure, linear_scheme,
                    qp_generators)
from .upskip import measure_from_phi


@dataclass
class ReportOptions:
    n_small: int = 25
    n_qp: int = 18
    n_large: int = 70
    phis: tuple = ()
    backend: NumericBackend | None = None
    qp_unguarded: bool = False
    fit_range: tuple = (4, 50)


@dataclass
class Report:
    figures: list
    summary: dict = field(default_factory=dict)


def log_growth_fit(values, states) -> tuple:
    """Least squares ``log pi(y) ~ c0 + c1 y log y + c2 y`` over ``states``.

    Returns ``(coefficients, max_abs_error)``.  Logs are taken in mpmath, so
    values beyond the binary64 range are fine.
    """
    y = np.array(states, dtype=float)
    target = np.array([float(mpmath.log(values[k])) for k in states])
    X = np.column_stack([np.ones_like(y), y * np.log(y), y])
    coef, *_ = np.linalg.lstsq(X, target, rcond=None)
    return tuple(float(c) for c in coef), float(np.max(np.abs(X @ coef - target)))


def _scaled(values) -> list:
    arr = [to_float(v) for v in values]
    total = math.fsum(abs(v) for v in arr)
    return [v / total for v in arr] if total else arr


def _measure_figure(tr, table, opts: ReportOptions, summary: dict) -> Figure:
    d, L, U = table.d, table.L, table.U
    small = Panel("small", f"linear n={opts.n_small} and convex n={opts.n_qp}", "state", "probability")
    g = linear_scheme(table, opts.n_small)
    ser = assemble_measure(table, g, opts.n_small)
    small.add(f"linear n={opts.n_small}", ser.states(), _scaled(ser.values))
    summary["linear_small"] = g.to_json()
    try:
        q = qp_generators(table, opts.n_qp, unguarded=opts.qp_unguarded)
        qs = assemble_measure(table, q, opts.n_qp)
        small.add(f"convex n={opts.n_qp}", qs.states(), _scaled(qs.values))
        summary["qp"] = q.to_json()
    except NumericalBreakdown as exc:
        summary["qp"] = {"refused": str(exc)}

    large = Panel("large", f"linear n={opts.n_large}", "state", "value / sum |value|")
    gl = linear_scheme(table, opts.n_large)
    sl = assemble_measure(table, gl, opts.n_large)
    large.add(f"linear n={opts.n_large}", sl.states(), _scaled(sl.values))
    cut = min(50, opts.n_large + 1)
    if sl.instability_onset is not None:
        cut = min(cut, sl.instability_onset)
    prefix = [to_float(v) for v in sl.values[:cut]]
    total = math.fsum(prefix)
    if cut and total:
        large.add(f"first {cut} states, normalized", sl.states()[:cut], [v / total for v in prefix])
    summary["linear_large"] = {"generator": gl.to_json(), "measure": sl.to_json()}

    gens = Panel("generators", "generating terms vs n (linear scheme)", "n", "generator")
    ns, comps = [], [[] for _ in range(d)]
    for n in range(max(U + 1, L + d), opts.n_large + 1):
        try:
            v = linear_scheme(table, n).as_float()
        except (SchemeInvalid, NumericalBreakdown):
            continue
        ns.append(n)
        for j in range(d):
            comps[j].append(v[j])
    for j in range(d):
        gens.add(f"pi({tr.original_state(L + j)})", ns, comps[j], "linespoints")

    coeffs = Panel("gamma", "coefficients on the signed log scale", "l", "Upsilon(gamma_j(l))")
    ells = list(range(opts.n_large + 1))
    for j in range(d):
        coeffs.add(f"gamma_{L + j}", ells, [upsilon(to_float(table.value(L + j, ell))) for ell in ells],
                   "linespoints")
    panels = [small, large, gens, coeffs]

    if d >= 2:
        per = Panel("periodic", f"gamma(n)/|gamma(n)|_1 by residue of n mod {d}", "n", "normalized gamma")
        for r in range(d):
            idx = [n for n in range(U, opts.n_large + 1) if n % d == r]
            rows = []
            for n in idx:
                row = [to_float(v) for v in table.row(n)]
                norm = math.fsum(abs(v) for v in row)
                rows.append([v / norm if norm else 0.0 for v in row])
            for j in range(d):
                per.add(f"n={r} mod {d}, j={L + j}", idx, [row[j] for row in rows], "lines")
        panels.append(per)
        lo = max(U + (U - L), opts.n_large // 2)
        try:
            summary["a_matrix"] = a_matrix_diagnostics(table, lo, opts.n_large).to_json()
        except (ValueError, np.linalg.LinAlgError) as exc:
            summary["a_matrix"] = {"unavailable": str(exc)}
    return Figure("measure", panels, "stationary measure, generators and coefficients")


def _phi_figure(tr, table, opts: ReportOptions, summary: dict) -> Figure:
    n_max = max(opts.n_large, opts.fit_range[1])
    fams = [(phi, measure_from_phi(tr, phi, 1, n_max)) for phi in opts.phis]
    ref_phi, ref = fams[0]
    logs = {phi: [float(mpmath.log(v)) if v > 0 else math.nan for v in s.values] for phi, s in fams}
    xs = list(range(n_max + 1))
    even = [x for x in xs if x % 2 == 0]
    odd = [x for x in xs if x % 2 == 1]

    logp = Panel("logmeasure", f"log pi(x) with phi*={ref_phi}", "state", "log pi")
    logp.add("even states", even, [logs[ref_phi][x] for x in even])
    logp.add("odd states", odd, [logs[ref_phi][x] for x in odd])
    lo, hi = opts.fit_range
    fit_states = [y for y in range(lo, hi + 1) if y % 2 == 0 and y <= n_max]
    coef, err = log_growth_fit(ref.values, fit_states)
    logp.add("fit (even states)", fit_states,
             [coef[0] + coef[1] * y * math.log(y) + coef[2] * y for y in fit_states], "lines")
    summary["even_fit"] = {"phi_star": ref_phi, "states": [fit_states[0], fit_states[-1]],
                           "coefficients": list(coef), "max_error": err,
                           "model": "log pi(y) = c0 + c1*y*log(y) + c2*y"}

    diff = Panel("logdiff", f"log pi_phi - log pi_{ref_phi}", "state", "difference")
    for phi, _ in fams[1:]:
        diff.add(f"phi*={phi} even", even, [logs[phi][x] - logs[ref_phi][x] for x in even])
        diff.add(f"phi*={phi} odd", odd, [logs[phi][x] - logs[ref_phi][x] for x in odd])

    ratio = Panel("ratio", "pi(n)/|gamma(n)|_1", "n", "ratio")
    top = min(n_max, table.n_max)
    ns = list(range(top + 1))
    norms = [math.fsum(abs(to_float(v)) for v in table.row(n)) for n in ns]
    for phi, s in fams:
        vals = [to_float(s.values[n]) / norms[n] if norms[n] else math.nan for n in ns]
        ratio.add(f"phi*={phi} even", [n for n in ns if n % 2 == 0], [vals[n] for n in ns if n % 2 == 0])
        ratio.add(f"phi*={phi} odd", [n for n in ns if n % 2 == 1], [vals[n] for n in ns if n % 2 == 1])
    return Figure("phi_family", [logp, diff, ratio], "measures of the one-parameter family")


def build_report(ts, opts: ReportOptions | None = None, s: int | None = None) -> Report:
    from .chain import translate

    opts = opts or ReportOptions()
    tr = as_translated(ts) if s is None else translate(ts, s)
    n_top = max(opts.n_large, opts.n_small, opts.n_qp)
    table = gamma_table(tr, n_top, opts.backend)
    summary = {"L": table.L, "U": table.U, "s": tr.s, "omega_star": tr.omega_star,
               "backend": table.backend.tag, "flagged_rows": list(table.flagged)}
    figures = [_measure_figure(tr, table, opts, summary)]
    if opts.phis:
        figures.append(_phi_figure(tr, table, opts, summary))
    return Report(figures, summary)
