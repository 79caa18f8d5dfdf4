"""Numerical schemes for generators, measure assembly and residual checks.

Two schemes estimate the generating terms from a :class:`GammaTable`:

* the convex scheme minimizes ``|v|_2^2`` over ``K_n`` (non-negative ``v``
  with unit 1-norm whose invariant vector is non-negative up to ``n``);
* the linear scheme forces the invariant vector to vanish at the top
  ``U - L`` indices below ``n`` and solves the resulting square system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .coeff import GammaTable, c_fun
from .errors import InternalInconsistency, NumericalBreakdown, ScopeError
from .numeric import NumericBackend, solve_linear, to_float
from .qp import Infeasible, solve_qp
from .series import Generator, MeasureSeries, tail_converges

OVERFLOW_GUARD = 1e300
GROWTH_LIMIT = float(np.finfo(float).eps) ** -0.5


class SchemeInvalid(NumericalBreakdown):
    """The linear scheme produced a generator with a negative component."""


def _row_norm(row) -> float:
    return math.fsum(abs(to_float(v)) for v in row)


def _scaled_row(row, backend):
    """Row divided by its 1-norm (computed in the row's own arithmetic)."""
    total = backend.zero()
    for v in row:
        total = total + abs(v)
    return [v / total for v in row]


# -- convex scheme ------------------------------------------------------------


def qp_generators(table: GammaTable, n: int, tol: float = 1e-12,
                  unguarded: bool = False) -> Generator:
    """Minimum-norm element of ``K_n`` by the dual active-set method.

    Constraint rows are scaled to unit 1-norm before solving.  The scheme is
    refused once the raw coefficients outgrow ``eps**-0.5`` unless ``unguarded``.
    """
    d, L = table.d, table.L
    if n > table.n_max:
        raise ValueError(f"n={n} exceeds the table range {table.n_max}")
    if d == 1:
        return Generator([table.backend.one()], "qp", n, {"kkt": 0.0, "active": []})
    growth = max(_row_norm(table.row(ell)) for ell in range(n + 1))
    if growth > GROWTH_LIMIT and not unguarded:
        # the unscaled constraint system has condition ~ |gamma|^2 > 1/eps here
        raise NumericalBreakdown(
            f"convex scheme refused at n={n}: |gamma(l)|_1 reaches {growth:.1e} > eps^-1/2, "
            f"so the constraint system is too ill-conditioned; use the linear scheme or a "
            f"smaller n", n=n, growth=growth)
    rows, kept, dropped = [], [], []
    for ell in range(n + 1):
        raw = [to_float(v) for v in table.row(ell)]
        big = max(abs(v) for v in raw)
        if not all(math.isfinite(v) for v in raw):
            # binary64 could not even represent the row; rescale in the table's arithmetic
            scaled = [to_float(v) for v in _scaled_row(table.row(ell), table.backend)]
            if not all(math.isfinite(v) for v in scaled):
                dropped.append(ell)
                continue
            raw = scaled
        elif big > OVERFLOW_GUARD / d:
            raw = [v / big for v in raw]
        norm = math.fsum(abs(v) for v in raw)
        rows.append([v / norm for v in raw])
        kept.append(ell)
    if dropped:
        raise NumericalBreakdown(
            f"constraint rows {dropped[:5]} overflow binary64; use the linear scheme",
            dropped=dropped)
    C = np.vstack([np.eye(d), np.array(rows)])
    try:
        res = solve_qp(np.ones((1, d)), [1.0], C, np.zeros(C.shape[0]), tol=tol)
    except Infeasible as exc:
        i = exc.details.get("constraint", -1) - 1 - d
        where = kept[i] if 0 <= i < len(kept) else None
        raise NumericalBreakdown(
            f"K_{n} is numerically empty (violated at l={where}); use the linear scheme",
            violating=where) from None
    v = np.maximum(res.x, 0.0)
    v = v / v.sum()
    active_rows = [kept[i - 1 - d] for i in res.active if i - 1 - d >= 0]
    slack_min, where = math.inf, None
    for k, ell in enumerate(kept):
        row = np.array(rows[k])
        if ell in active_rows or row.min() >= 0 or row.max() <= 0:
            continue
        sl = float(row @ v)
        if sl < slack_min:
            slack_min, where = sl, ell
    diag = {"kkt": res.kkt, "active_rows": active_rows, "iterations": res.iterations,
            "min_slack": slack_min, "min_slack_row": where, "growth": growth}
    return Generator([float(x) for x in v], "qp", n, diag)


# -- linear scheme ------------------------------------------------------------


def linear_matrix(table: GammaTable, n: int) -> list:
    """``G(n)`` with each gamma row scaled to unit 1-norm (this is ``A(n)``)."""
    d = table.d
    rows = [_scaled_row(table.row(n - (d - 2) + i), table.backend) for i in range(d - 1)]
    rows.append([table.backend.one()] * d)
    return rows


def linear_scheme(table: GammaTable, n: int, tol: float | None = None) -> Generator:
    """Solve ``G(n) v = e_d``; reject the solution if a component is negative."""
    d = table.d
    backend = table.backend
    if n < table.U:
        raise ValueError(f"n={n} must be at least U={table.U}")
    if n > table.n_max:
        raise ValueError(f"n={n} exceeds the table range {table.n_max}")
    if d == 1:
        return Generator([backend.one()], "linear", n, {"cond": 1.0})
    A = linear_matrix(table, n)
    cond = float(np.linalg.cond(np.array([[to_float(x) for x in r] for r in A])))
    rhs = [backend.zero()] * (d - 1) + [backend.one()]
    try:
        v = solve_linear(A, rhs, backend)
    except ZeroDivisionError:
        raise NumericalBreakdown(f"G({n}) is singular", cond=cond, n=n) from None
    if tol is None:
        tol = 0.0 if backend.exact else 1e-10
    norm = sum(abs(to_float(x)) for x in v)
    negative = [i for i, x in enumerate(v) if to_float(x) < -tol * norm]
    diag = {"cond": cond}
    if negative:
        if table.tr.base.omega_plus == 1:
            raise InternalInconsistency(
                f"linear scheme at n={n} returned a negative generator although w+ = 1",
                n=n, v=[to_float(x) for x in v])
        raise SchemeInvalid(f"M_{n} has no non-negative solution (component {negative[0]} < 0)",
                            n=n, v=[to_float(x) for x in v], cond=cond)
    return Generator(list(v), "linear", n, diag)


def linear_scheme_auto(table: GammaTable, start: int | None = None, stop: float = 1e-9) -> Generator:
    """Doubling sweep ``n = U+5, 2(U+5), ...`` until the generator stops moving."""
    n = start if start is not None else table.U + 5
    n = min(max(n, table.U), table.n_max)
    prev = None
    history = []
    while True:
        try:
            g = linear_scheme(table, n)
        except SchemeInvalid:
            g = None
        if g is not None:
            history.append(n)
            if prev is not None and np.max(np.abs(g.as_float() - prev.as_float())) < stop:
                g.diagnostics["sweep"] = history
                return g
            prev = g
        if n >= table.n_max:
            break
        n = min(2 * n, table.n_max)
    if prev is None:
        raise NumericalBreakdown("linear scheme produced no valid generator in the sweep")
    prev.diagnostics["sweep"] = history
    prev.diagnostics["converged"] = False
    return prev


# -- assembly -------------------------------------------------------------


def assemble_measure(table: GammaTable, g: Generator, n_max: int | None = None,
                     normalize: bool = False) -> MeasureSeries:
    """``pi(l) = sum_j v_j gamma_j(l)`` for ``l <= n_max``."""
    d = table.d
    if len(g.v) != d:
        raise ValueError(f"generator has {len(g.v)} entries, expected {d}")
    n_max = table.n_max if n_max is None else min(n_max, table.n_max)
    backend = table.backend
    v = [backend.num(x) if not isinstance(x, type(backend.zero())) else x for x in g.v]
    values = []
    for ell in range(n_max + 1):
        row = table.row(ell)
        acc = backend.zero()
        for j in range(d):
            acc = acc + v[j] * row[j]
        values.append(acc)
    # the linear scheme pins pi to zero on its top d-1 rows; rounding there is not instability
    pinned = range(g.n - d + 2, g.n + 1) if g.provenance == "linear" and g.n is not None else ()
    onset = next((k for k, x in enumerate(values) if x < 0 and k not in pinned), None)
    series = MeasureSeries(values, f"{g.provenance}(n={g.n})", backend.tag, g,
                           table.tr.s, table.tr.omega_star, instability_onset=onset)
    if onset is not None:
        scale = math.fsum(abs(to_float(x)) for x in values)
        series.onset_relative = to_float(values[onset]) / scale
        series.notes.append(f"first negative value at index {onset} "
                            f"(state {series.states()[onset]}): {to_float(values[onset]):.3e}, "
                            f"{series.onset_relative:.2e} relative to the assembled 1-norm")
    if normalize:
        normalize_series(series)
    return series


def normalize_series(series: MeasureSeries, rel: float = 1e-14) -> MeasureSeries:
    """Rescale to a distribution when the partial sums have converged."""
    stop = series.instability_onset if series.instability_onset is not None else len(series.values)
    ok, total = tail_converges(series.values[:stop], rel)
    if ok:
        series.values = [x / _same_type(total, x) for x in series.values]
        series.normalized = True
        series.normalizer = total
    else:
        series.notes.append("partial sums did not pass the doubling-horizon tail test; not normalized")
    return series


def _same_type(total: float, sample):
    if isinstance(sample, Fraction):
        return Fraction(total)
    if isinstance(sample, float):
        return total
    return type(sample)(total)


# -- residuals -----------------------------------------------------------------


@dataclass
class ResidualReport:
    master_max: float
    flux_max: float
    master: list  # (x, relative residual)
    flux: list  # (l, relative residual)
    exact: bool
    signed: bool
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "master_max": self.master_max,
            "flux_max": self.flux_max,
            "exact_arithmetic": self.exact,
            "signed": self.signed,
            "checked_states": [x for x, _ in self.master],
            "notes": list(self.notes),
        }


def _backend_for(values) -> NumericBackend:
    if values and all(isinstance(v, (int, Fraction)) for v in values):
        return NumericBackend("exact")
    if values and not isinstance(values[0], (float, int, Fraction, np.floating)):
        return NumericBackend("mp")
    return NumericBackend("binary64")


def residual_report(tr, values) -> ResidualReport:
    """Master-equation and flux-identity residuals of ``values`` (translated coordinates).

    Relative residuals are ``|res| / (1 + |pi(x)| * sum lambda(x))`` for the master
    equation and ``|sum| / (1 + sum |terms|)`` for the flux form.
    """
    from .chain import as_translated

    tr = as_translated(tr)
    if isinstance(values, MeasureSeries):
        values = values.values
    values = list(values)
    backend = _backend_for(values)
    if backend.mode == "mp" and values:
        ctx = backend.ctx
        values = [ctx.mpf(v) for v in values]
    elif backend.mode == "binary64":
        values = [float(v) for v in values]
    ts = tr.base
    n = len(values) - 1
    wm = ts.omega_minus

    def pi(x):
        return values[x] if 0 <= x <= n else backend.zero()

    master = []
    for x in range(0, n + wm + 1):
        inflow = backend.zero()
        for w in ts.omega:
            inflow = inflow + ts.rate(w, x - w, backend) * pi(x - w)
        out = ts.total_rate(x, backend)
        res = inflow - out * pi(x)
        master.append((x, abs(to_float(res)) / (1.0 + abs(to_float(pi(x))) * to_float(out))))
    flux = []
    ms = ts.m_star
    for ell in range(tr.U - tr.L + 1, n + 1):
        total, scale = backend.zero(), 0.0
        for k in range(ms + 1):
            if ell - k < 0:
                continue
            term = pi(ell - k) * c_fun(tr, k, ell - k, backend)
            total = total + term
            scale += abs(to_float(term))
        flux.append((ell, abs(to_float(total)) / (1.0 + scale)))
    signed = any(to_float(v) < 0 for v in values)
    rep = ResidualReport(max((r for _, r in master), default=0.0),
                         max((r for _, r in flux), default=0.0),
                         master, flux, backend.exact, signed)
    if signed:
        rep.notes.append("signed measure accepted for verification")
    return rep


# -- A(n) diagnostics -------------------------------------------------------------


@dataclass
class AnDiagnostics:
    period: int
    detected_period: int
    heuristic: bool
    residues: dict  # residue -> dict(n_last, limit, delta, det, generator)
    agreement: float
    period_deltas: dict

    def to_json(self) -> dict:
        res = {}
        for r, info in self.residues.items():
            res[str(r)] = {
                "n_last": info["n_last"],
                "delta": info["delta"],
                "det": info["det"],
                "generator": info["generator"],
                "limit": info["limit"],
            }
        return {"period": self.period, "detected_period": self.detected_period,
                "heuristic": self.heuristic, "residues": res, "agreement": self.agreement,
                "period_deltas": {str(k): v for k, v in self.period_deltas.items()}}


def _float_matrix(table, n) -> np.ndarray:
    return np.array([[to_float(x) for x in r] for r in linear_matrix(table, n)])


def a_matrix_diagnostics(table: GammaTable, n_from: int, n_to: int,
                         det_min: float = 1e-8, max_period: int | None = None) -> AnDiagnostics:
    """Per-residue limits of ``A(n)`` and the generators they determine."""
    d = table.d
    if n_to > table.n_max:
        raise ValueError(f"n_to={n_to} exceeds the table range {table.n_max}")
    if n_from < table.U + (table.U - table.L):
        raise ValueError("n_from must be at least U + (U - L)")
    if d == 1:
        one = {"n_last": n_to, "delta": 0.0, "det": 1.0, "generator": [1.0], "limit": [[1.0]]}
        return AnDiagnostics(1, 1, False, {0: one}, 0.0, {1: 0.0})
    p = d
    mats = {n: _float_matrix(table, n) for n in range(n_from, n_to + 1)}
    # period detection on normalized gamma rows u(n) = gamma(n)/|gamma(n)|_1
    u = {n: mats[n][-2] for n in mats}
    max_period = max_period or 2 * d
    window = range(max(n_from, n_to - 3 * max_period), n_to + 1)
    deltas = {}
    for q in range(1, max_period + 1):
        diffs = [np.max(np.abs(u[n] - u[n - q])) for n in window if n - q in u]
        deltas[q] = float(max(diffs)) if diffs else math.inf
    best = min(deltas.values())
    detected = next(q for q in sorted(deltas) if deltas[q] <= max(10 * best, 1e-9))
    residues = {}
    for r in range(p):
        ns = [n for n in mats if n % p == r]
        n_last = ns[-1]
        A = mats[n_last]
        delta = float(np.max(np.abs(A - mats[n_last - p]))) if n_last - p in mats else math.inf
        det = float(np.linalg.det(A))
        gen = None
        if abs(det) >= det_min:
            rhs = np.zeros(d)
            rhs[-1] = 1.0
            gen = np.linalg.solve(A, rhs).tolist()
        residues[r] = {"n_last": n_last, "delta": delta, "det": det, "generator": gen,
                       "limit": A.tolist()}
    gens = [np.array(info["generator"]) for info in residues.values() if info["generator"] is not None]
    agreement = max((float(np.max(np.abs(a - b))) for a in gens for b in gens), default=math.inf)
    heuristic = table.tr.base.omega_plus != 1
    return AnDiagnostics(p, detected, heuristic, residues, agreement, deltas)


def normalized_ratios(table: GammaTable, g: Generator, ns) -> list:
    """``pi(n) / |gamma(n)|_1`` along the indices ``ns``."""
    series = assemble_measure(table, g)
    out = []
    for n in ns:
        norm = _row_norm(table.row(n))
        out.append(to_float(series.values[n]) / norm if norm else math.inf)
    return out


def require_generating_range(table: GammaTable):
    if table.d < 1:
        raise ScopeError("empty generating range")
