"""Uniqueness and measure families for upwardly skip-free chains.

Applies to chains with jumps in ``{-2, (-1), 1}`` after translation.  The
stationary measures are parametrized by ``phi(U+2)`` which must lie in the
interval bracketed by the even and odd convergents of the continued fraction
``h(x)(1 + 1/(h(x+1)(1 + 1/(h(x+2)(1 + ...)))))``.  Everything here runs in
mpmath arithmetic because the forward recursions are unstable.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .chain import TranslatedSystem, as_translated
from .coeff import GammaTable
from .errors import AssumptionError, InternalInconsistency, ScopeError
from .numeric import NumericBackend, to_float
from .series import Generator, MeasureSeries

DEFAULT_BITS = 256
DIVERGENCE_STOP = 1e50  # H(x) terms beyond this after steady growth: term test is conclusive


class AdmissibilityError(AssumptionError):
    """``phi`` left the admissible cone: the chosen ``phi*`` is outside the interval."""

    def __init__(self, message, x: int | None = None):
        self.x = x
        super().__init__(message)


def _require_upskip(tr: TranslatedSystem) -> None:
    base = tr.base
    if base.omega_plus != 1 or base.omega_minus != -2:
        raise ScopeError("not upwardly skip-free with smallest jump -2 "
                         f"(jumps {list(base.omega)}); no uniqueness test available")


def _backend(bits: int | None) -> NumericBackend:
    return NumericBackend("mp", bits or DEFAULT_BITS)


class _Rates:
    """Rate accessors ``lam(w, x)`` in one mp backend; off-Omega jumps are zero."""

    def __init__(self, tr: TranslatedSystem, backend: NumericBackend):
        self.tr, self.backend = tr, backend
        self.base = tr.base

    def lam(self, w: int, x: int):
        return self.base.rate(w, x, self.backend)

    def down(self, x: int):
        """``lambda_{-1}(x) + lambda_{-2}(x)``."""
        return self.lam(-1, x) + self.lam(-2, x)

    def h(self, x: int):
        if x < self.tr.U + 2:
            raise ValueError(f"h(x) is defined for x >= U+2 = {self.tr.U + 2}, got {x}")
        den = self.lam(1, x - 1) * self.lam(-2, x)
        if not den > 0:
            raise AssumptionError(f"h({x}) has a vanishing denominator")
        return self.down(x - 1) * self.down(x) / den


def h_fun(ts, x: int, bits: int | None = None):
    tr = as_translated(ts)
    _require_upskip(tr)
    return _Rates(tr, _backend(bits)).h(x)


# -- continued-fraction convergents ----------------------------------------------------


@dataclass
class ConvergentReport:
    x: int
    depth: int
    psi_even: object
    psi_odd: object
    even_sequence: list = field(repr=False, default_factory=list)
    odd_sequence: list = field(repr=False, default_factory=list)
    backward_check: float = 0.0

    @property
    def interval(self) -> tuple:
        return (self.psi_even, self.psi_odd)

    @property
    def width(self) -> float:
        return to_float(self.psi_odd - self.psi_even)

    def to_json(self) -> dict:
        return {
            "x": self.x,
            "depth": self.depth,
            "psi_even": to_float(self.psi_even),
            "psi_odd": to_float(self.psi_odd),
            "interval": [to_float(self.psi_even), to_float(self.psi_odd)],
            "width": self.width,
            "backward_check": self.backward_check,
        }


def _psi_backward(hs: list, k: int, one):
    """``psi(x, k)`` by the defining backward recursion from ``psi(x+k, 0) = h(x+k)``."""
    psi = hs[k]
    for y in range(k - 1, -1, -1):
        psi = hs[y] * (one + one / psi)
    return psi


def psi_convergents(ts, x: int | None = None, depth: int = 700,
                    bits: int | None = None) -> ConvergentReport:
    """All convergents ``psi(x, k)``, ``k <= depth``, by the forward recurrence.

    The generalized continued fraction has ``b_n = c_{n+1} = h(x+n)``.  The last
    two convergents are recomputed by backward evaluation as a cross-check.
    """
    tr = as_translated(ts)
    _require_upskip(tr)
    backend = _backend(bits)
    rates = _Rates(tr, backend)
    x = tr.U + 2 if x is None else x
    hs = [rates.h(x + n) for n in range(depth + 2)]
    one, zero = backend.one(), backend.zero()
    a_prev, a_cur = one, hs[0]
    b_prev, b_cur = zero, one
    values = [a_cur / b_cur]
    for n in range(1, depth + 1):
        a_prev, a_cur = a_cur, hs[n] * a_cur + hs[n - 1] * a_prev
        b_prev, b_cur = b_cur, hs[n] * b_cur + hs[n - 1] * b_prev
        scale = abs(b_cur)
        a_prev, a_cur, b_prev, b_cur = a_prev / scale, a_cur / scale, b_prev / scale, b_cur / scale
        values.append(a_cur / b_cur)
    even = values[0::2]
    odd = values[1::2]
    tol = backend.num(2) ** (10 - backend.mantissa_bits)
    if _breaks_order(even, tol, increasing=True):
        raise InternalInconsistency("even convergents are not increasing")
    if _breaks_order(odd, tol, increasing=False):
        raise InternalInconsistency("odd convergents are not decreasing")
    if odd and even[-1] > odd[-1] * (1 + tol):
        raise InternalInconsistency("even convergent exceeds odd convergent")
    check = 0.0
    for k in (depth - 1, depth):
        if k >= 0:
            back = _psi_backward(hs, k, one)
            check = max(check, to_float(abs(back - values[k]) / abs(values[k])))
    if check > 1e-12:
        raise InternalInconsistency(f"forward and backward convergents disagree ({check:.1e})")
    psi_even = even[-1]
    psi_odd = odd[-1] if odd else hs[0] * (one + one / hs[1])
    return ConvergentReport(x, depth, psi_even, psi_odd, even, odd, check)


def _breaks_order(seq, tol, increasing: bool) -> bool:
    """Monotonicity violated by more than the rounding level ``tol`` (relative)?"""
    for prev, cur in zip(seq, seq[1:]):
        step = cur - prev if increasing else prev - cur
        if step < -tol * abs(prev):
            return True
    return False


# -- uniqueness test ----------------------------------------------------------------


@dataclass
class UniquenessReport:
    method: str
    verdict: str
    x: int
    H_partial: list = field(default_factory=list)  # (n, partial sum)
    Q_values: list = field(default_factory=list)  # (n, Q_n(x))
    terms: list = field(default_factory=list, repr=False)
    tail_exponent: float | None = None
    tail_bound: float | None = None
    interval: tuple | None = None
    notes: list = field(default_factory=list)

    @property
    def H_estimate(self) -> float | None:
        return self.H_partial[-1][1] if self.H_partial else None

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "verdict": self.verdict,
            "x": self.x,
            "H_estimate": self.H_estimate,
            "H_partial": [[n, v] for n, v in self.H_partial],
            "Q_values": [[n, v] for n, v in self.Q_values],
            "tail_exponent": self.tail_exponent,
            "tail_bound": self.tail_bound,
            "interval": list(self.interval) if self.interval else None,
            "notes": list(self.notes),
        }

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["n", "H_partial", "Q_n"])
        q = dict(self.Q_values)
        for n, v in self.H_partial:
            w.writerow([n, repr(v), repr(q.get(n, ""))])
        return out.getvalue()


def h_series_terms(ts, n_terms: int, x: int | None = None, bits: int | None = None,
                   stop_above: float | None = None):
    """Pairs ``(a_2n + a_2n+1, Q_n(x))`` of the series ``H(x)``.

    Terms come from products of ``h``; the same terms recomputed from ``Q_n``
    and the rates must agree (internal cross-check).  With ``stop_above`` the
    computation ends early once a term exceeds it after 100 increasing terms.
    """
    tr = as_translated(ts)
    _require_upskip(tr)
    backend = _backend(bits)
    r = _Rates(tr, backend)
    x = tr.U + 2 if x is None else x
    one = backend.one()
    prod_even = one  # prod h(x+2i)/h(x+2i+1)
    q = one
    terms, qs = [], []
    worst = 0.0
    for n in range(n_terms):
        h0, h1 = r.h(x + 2 * n), r.h(x + 2 * n + 1)
        prod_even = prod_even * h0 / h1
        a_even = r.h(x + 2 * n + 1) * prod_even
        a_odd = one / prod_even
        q = q * (r.lam(1, x + 2 * n - 1) * r.lam(-2, x + 2 * n)) / \
            (r.lam(1, x + 2 * n) * r.lam(-2, x + 2 * n + 1))
        first = r.down(x + 2 * n) * r.down(x - 1) / (r.lam(1, x + 2 * n) * r.lam(-2, x + 2 * n + 1)) / q
        second = r.down(x + 2 * n + 1) / r.down(x - 1) * q
        total = a_even + a_odd
        worst = max(worst, to_float(abs(first + second - total) / total))
        terms.append(total)
        qs.append(q)
        if stop_above is not None and total > stop_above and n >= 100 and \
                all(terms[k] < terms[k + 1] for k in range(n - 100, n)):
            break
    if worst > 1e-20:
        raise InternalInconsistency(f"H(x) terms from h and from Q_n disagree ({worst:.1e})")
    return terms, qs


def _tail_fit(terms: list) -> tuple:
    """Log-log fit ``a_n <= C n^-p`` on the last quarter; returns (p, C, decreasing)."""
    n = len(terms)
    start = max(1, n - n // 4)
    idx = np.arange(start, n) + 1.0
    vals = np.array([to_float(t) for t in terms[start:]])
    if len(vals) < 4 or not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        return None, None, False
    slope, _ = np.polyfit(np.log(idx), np.log(vals), 1)
    p = -slope
    C = float(np.max(vals * idx ** p))
    decreasing = bool(np.all(np.diff(vals) < 0))
    return float(p), C, decreasing


def uniqueness_test(ts, n_terms: int = 40000, depth: int = 700,
                    bits: int | None = None) -> UniquenessReport:
    """Uniqueness verdict for an upwardly skip-free chain."""
    tr = as_translated(ts)
    _require_upskip(tr)
    x = tr.U + 2
    if tr.base.mass_action:
        rep = UniquenessReport("polynomial-rule", "unique", x)
        rep.notes.append("all rates are polynomials (mass-action), so H(x) diverges")
        return rep
    terms, qs = h_series_terms(tr, n_terms, x, bits, stop_above=DIVERGENCE_STOP)
    computed = len(terms)
    sample = sorted(set([0, 1, 2, 5, 10] + [int(round(n_terms * f)) - 1 for f in
                                             (0.01, 0.1, 0.25, 0.5, 0.75, 1.0)] + [computed - 1]))
    sample = [k for k in sample if 0 <= k < computed]
    running = []
    total = terms[0] * 0
    for t in terms:
        total = total + t
        running.append(total)
    partial = [(k, to_float(running[k])) for k in sample]
    qvals = [(k, to_float(qs[k])) for k in sample]
    rep = UniquenessReport("H-sum", "undetermined", x, partial, qvals, terms)
    if computed < n_terms:
        rep.notes.append(f"stopped after {computed} terms: terms grow past {DIVERGENCE_STOP:.0e}")
    p, C, decreasing = _tail_fit(terms)
    rep.tail_exponent = p
    quarter = max(1, computed // 4)
    tail_vals = [to_float(t) for t in terms[-quarter:]]
    prev_vals = [to_float(t) for t in terms[-2 * quarter:-quarter]] or tail_vals
    if p is not None and decreasing and p >= 1.5:
        rep.tail_bound = C * computed ** (1 - p) / (p - 1)
        rep.verdict = "non-unique"
        rep.notes.append(f"H({x}) converges: tail terms <= {C:.3g} n^-{p:.3f}, "
                         f"remaining sum <= {rep.tail_bound:.2e}")
    elif min(tail_vals) >= min(prev_vals) > 0 or not all(math.isfinite(v) for v in tail_vals):
        rep.verdict = "unique"
        rep.notes.append(f"terms of H({x}) do not decrease to zero (term test), so H({x}) diverges")
    else:
        rep.notes.append("no tail certificate and no term-test divergence; increase --terms")
    try:
        conv = psi_convergents(tr, x, depth, bits)
        rep.interval = (to_float(conv.psi_even), to_float(conv.psi_odd))
    except (InternalInconsistency, ArithmeticError) as exc:
        rep.notes.append(f"convergent interval unavailable: {exc}")
    return rep


# -- measures from phi ------------------------------------------------------------


def measure_from_phi(ts, phi_star, pi_star=1, n_max: int = 100,
                     bits: int | None = None) -> MeasureSeries:
    """Stationary measure with ``phi(U+2) = phi_star`` and ``pi(U+1) = pi_star``."""
    tr = as_translated(ts)
    _require_upskip(tr)
    backend = _backend(bits)
    r = _Rates(tr, backend)
    U = tr.U
    if not pi_star > 0:
        raise ValueError("pi_star must be positive")
    if n_max < U + 2:
        raise ValueError(f"n_max must be at least U+2 = {U + 2}")
    phi = backend.num(phi_star)
    values = [backend.zero()] * (n_max + 1)
    values[U + 1] = backend.num(pi_star)
    for x in range(U + 2, n_max + 1):
        if x > U + 2:
            hp = r.h(x - 1)
            if not phi > hp:
                raise AdmissibilityError(
                    f"phi* = {to_float(backend.num(phi_star))} is not admissible: "
                    f"phi({x - 1}) <= h({x - 1})", x=x - 1)
            phi = hp / (phi - hp)
        values[x] = values[x - 1] * r.down(x - 1) / (r.lam(-2, x) * phi)
    for x in range(U, -1, -1):
        lam1 = r.lam(1, x)
        if not lam1 > 0:
            raise AssumptionError(f"lambda_1({x}) = 0; cannot recover pi({x})")
        values[x] = (values[x + 1] * r.down(x + 1) + values[x + 2] * r.lam(-2, x + 2)) / lam1
    gen = Generator(values[tr.L:tr.U + 1], "user", None, {"phi_star": to_float(backend.num(phi_star))})
    series = MeasureSeries(values, f"phi*={to_float(backend.num(phi_star))}", backend.tag, gen,
                           tr.s, tr.omega_star)
    return series


def phi_from_generator(table: GammaTable, v) -> float:
    """``phi(U+2)`` of the invariant vector with generator ``v``."""
    tr = table.tr
    _require_upskip(tr)
    backend = table.backend
    U = tr.U
    vv = [backend.num(to_float(a)) if not isinstance(a, type(backend.zero())) else a for a in v]

    def pi(ell):
        row = table.row(ell)
        return sum((vv[j] * row[j] for j in range(table.d)), backend.zero())

    down = tr.base.rate(-1, U + 1, backend) + tr.base.rate(-2, U + 1, backend)
    return to_float(pi(U + 1) / pi(U + 2) * down / tr.base.rate(-2, U + 2, backend))


def phi_from_ratio(table: GammaTable, ratio) -> float:
    """``phi(U+2)`` for ``pi(U)/pi(L) = ratio``."""
    return phi_from_generator(table, [1.0, to_float(ratio)])


def generator_from_phi(ts, phi_star, bits: int | None = None) -> Generator:
    """Generator (unit 1-norm) of the measure with ``phi(U+2) = phi_star``."""
    tr = as_translated(ts)
    series = measure_from_phi(tr, phi_star, 1, tr.U + 2, bits)
    v = series.values[tr.L:tr.U + 1]
    total = sum(v)
    return Generator([a / total for a in v], "user", None, {"phi_star": to_float(phi_star)})


# -- ratio bounds ---------------------------------------------------------------------


@dataclass
class RatioBounds:
    r1: float
    r2: float
    n: int
    count_L_neg: int
    count_U_neg: int
    last_L_neg: int | None
    last_U_neg: int | None
    phi_interval: tuple | None = None
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"r1": self.r1, "r2": self.r2, "n": self.n,
                "I_L_minus": {"count": self.count_L_neg, "last": self.last_L_neg},
                "I_U_minus": {"count": self.count_U_neg, "last": self.last_U_neg},
                "phi_interval": list(self.phi_interval) if self.phi_interval else None,
                "notes": list(self.notes)}


def ratio_bounds(table: GammaTable, n: int | None = None) -> RatioBounds:
    """Running ``sup``/``inf`` of ``-gamma_L/gamma_U`` over the negative index sets."""
    tr = table.tr
    if tr.U != tr.L + 1:
        raise ScopeError("ratio bounds need exactly two generating terms (smallest jump -2)")
    n = table.n_max if n is None else min(n, table.n_max)
    r1, r2 = -math.inf, math.inf
    cl = cu = 0
    ll = lu = None
    for ell in range(n + 1):
        gl, gu = table.row(ell)
        if gl < 0:
            cl, ll = cl + 1, ell
            r1 = max(r1, to_float(-gl / gu))
        if gu < 0:
            cu, lu = cu + 1, ell
            r2 = min(r2, to_float(-gl / gu))
    rb = RatioBounds(r1, r2, n, cl, cu, ll, lu)
    if not cl or not cu:
        rb.notes.append("an index set I^- is empty up to n; increase n")
    elif r1 > r2:
        raise InternalInconsistency(f"ratio bounds cross: r1={r1} > r2={r2}")
    if cl and cu and tr.base.omega_plus == 1 and tr.base.omega_minus == -2:
        a, b = phi_from_ratio(table, r1), phi_from_ratio(table, r2)
        rb.phi_interval = (min(a, b), max(a, b))
    return rb
