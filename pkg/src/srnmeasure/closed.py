"""Closed-form stationary measures and the generating-function ODE.

Covers birth-death chains (product formula), downwardly skip-free chains
(single generating term), the ODE satisfied by the probability generating
function of a mass-action network, and the Kummer-function solution of the
network ``0 -> S -> 2S -> 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .chain import TranslatedSystem, as_translated, classify
from .coeff import gamma_table
from .errors import NumericalBreakdown, ScopeError
from .netparse import Reaction, TransitionSystem
from .numeric import NumericBackend, mp_context
from .series import Generator, MeasureSeries, tail_converges


def _normalize(series: MeasureSeries, rel: float = 1e-14) -> MeasureSeries:
    ok, total = tail_converges(series.values, rel)
    if ok:
        series.normalizer = total
    else:
        series.notes.append("partial sums did not pass the doubling-horizon tail test; "
                            "measure may be non-normalizable")
    return series


def birth_death_measure(ts, n_max: int, backend: NumericBackend | None = None) -> MeasureSeries:
    """``pi(l) = prod_{j=1}^{l} lambda_1(j-1) / lambda_{-1}(j)`` with ``pi(0) = 1``."""
    tr = as_translated(ts)
    base = tr.base
    if set(base.omega) != {-1, 1}:
        raise ScopeError(f"birth-death formula needs jumps {{-1, 1}}, got {list(base.omega)}")
    backend = backend or base.default_backend()
    values = [backend.one()]
    for j in range(1, n_max + 1):
        values.append(values[-1] * base.rate(1, j - 1, backend) / base.rate(-1, j, backend))
    series = MeasureSeries(values, "closed-form(birth-death)", backend.tag,
                           Generator([backend.one()], "closed-form"), tr.s, tr.omega_star)
    return _normalize(series)


def downward_skipfree_measure(ts, n_max: int, backend: NumericBackend | None = None) -> MeasureSeries:
    """Unique measure of a chain whose only negative jump is -1: ``pi = gamma_0``."""
    tr = as_translated(ts)
    if tr.base.omega_minus != -1:
        raise ScopeError("not downwardly skip-free: the smallest jump must be -1")
    table = gamma_table(tr, n_max, backend)
    values = table.column(0)
    series = MeasureSeries(values, "closed-form(skip-free)", table.backend.tag,
                           Generator([table.backend.one()], "closed-form"), tr.s, tr.omega_star)
    series.notes.append("unique stationary measure (single generating term)")
    return _normalize(series)


# -- generating-function ODE --------------------------------------------------------


@dataclass(frozen=True)
class PgfOde:
    """``sum_y P_y(z) g^{(y)}(z) = 0`` with polynomials stored as {power: coefficient}."""

    terms: tuple  # ((order, {power: coeff}), ...) sorted by decreasing order
    s: int
    omega_star: int

    def render(self) -> str:
        parts = []
        for order, poly in self.terms:
            deriv = "g" + ("'" * order if order <= 3 else f"^({order})") + "(z)"
            parts.append(f"({_render_poly(poly)})*{deriv}")
        return " + ".join(parts) + " = 0"

    def to_json(self) -> dict:
        return {
            "s": self.s,
            "omega_star": self.omega_star,
            "terms": [{"order": order,
                       "coefficients": {str(p): str(c) for p, c in sorted(poly.items())}}
                      for order, poly in self.terms],
            "rendered": self.render(),
        }

    def evaluate(self, order: int, z):
        for o, poly in self.terms:
            if o == order:
                return sum(c * z ** p for p, c in poly.items())
        return 0


def _render_poly(poly: dict) -> str:
    out = []
    for p in sorted(poly, reverse=True):
        c = poly[p]
        mag = abs(c)
        mono = "" if p == 0 else ("z" if p == 1 else f"z^{p}")
        coef = str(mag) if (mag != 1 or p == 0) else ""
        body = coef + ("*" if coef and mono else "") + mono
        out.append(("- " if c < 0 else "+ ") + body)
    text = " ".join(out) if out else "0"
    return text[2:] if text.startswith("+ ") else "-" + text[2:] if text.startswith("- ") else text


def pgf_ode(network, s: int | None = None) -> PgfOde:
    """ODE for the generating function of the PIC with minimum ``s``."""
    reactions = network.reactions if isinstance(network, TransitionSystem) else tuple(network)
    if isinstance(network, TranslatedSystem):
        reactions = network.base.reactions
    if not all(isinstance(r, Reaction) and r.mass_action for r in reactions):
        raise ScopeError("the generating-function ODE needs mass-action kinetics for every reaction")
    merged: dict = {}
    for r in reactions:
        poly = merged.setdefault(r.source, {})
        for power, sign in ((r.target, 1), (r.source, -1)):
            poly[power] = poly.get(power, Fraction(0)) + sign * r.rate.kappa
    terms = tuple((order, {p: c for p, c in poly.items() if c != 0})
                  for order, poly in sorted(merged.items(), reverse=True))
    omega_star = 1
    if isinstance(network, TransitionSystem):
        cls = classify(network)
        omega_star = cls.omega_star
        if s is None:
            s = cls.pics[0] if cls.pics else 0
        elif cls.pics and s not in cls.pics:
            raise ScopeError(f"s={s} is not a PIC residue; PIC minima are {list(cls.pics)}")
    return PgfOde(terms, s or 0, omega_star)


# -- Kummer function and the 0 -> S -> 2S -> 0 example ------------------------------------


def kummer_1f1(a, b, z, max_terms: int = 100_000, rel: float = 1e-16):
    """Confluent hypergeometric ``1F1(a; b; z)`` by its power series.

    Works in whatever arithmetic the arguments carry (float or mpmath ``mpf``);
    summation stops once ten consecutive terms are below ``rel`` of the sum.
    """
    if b <= 0 and float(b).is_integer():
        raise ValueError(f"1F1 undefined for non-positive integer b={b}")
    if abs(z) > 100:
        raise ValueError("series evaluation restricted to |z| <= 100")
    one = (a - a) + 1  # unit in the arguments' arithmetic
    term, total, small = one, one, 0
    for n in range(max_terms):
        term *= (a + n) * z / ((b + n) * (n + 1))
        total += term
        if total and abs(term / total) < rel:
            small += 1
            if small >= 10:
                return total
        else:
            small = 0
        if term == 0 and n > 0:
            return total
    raise NumericalBreakdown(f"1F1({a}; {b}; {z}) did not converge in {max_terms} terms")


def example53_generator(k1, k2, k3, bits: int | None = None) -> Generator:
    """``(g(0), g'(0))``: the generating terms ``pi(0), pi(1)`` from the Kummer solution.

    With ``bits`` the series are summed in mpmath at that precision.
    """
    rel = 1e-16
    if bits is not None:
        ctx = mp_context(bits)
        k1, k2, k3 = (ctx.mpf(Fraction(k).numerator) / Fraction(k).denominator for k in (k1, k2, k3))
        rel = ctx.mpf(2) ** (-bits)
    a, b = k1 / k2, k2 / k3
    denom = kummer_1f1(a, b, 2 * b, rel=rel)
    v0 = kummer_1f1(a, b, b, rel=rel) / denom
    v1 = a * kummer_1f1(a + 1, b + 1, b, rel=rel) / denom
    return Generator([v0, v1], "closed-form")


def example53_closed_form(k1: float, k2: float, k3: float, n_max: int) -> MeasureSeries:
    """Stationary distribution of ``0 -> S -> 2S -> 0`` with rates ``k1, k2, k3``."""
    if min(k1, k2, k3) <= 0:
        raise ValueError("rate constants must be positive")
    a, b = k1 / k2, k2 / k3
    denom = kummer_1f1(a, b, 2 * b)
    base = math.lgamma(b) - math.lgamma(a)
    values = []
    for x in range(n_max + 1):
        log_w = x * math.log(b) - math.lgamma(x + 1) + base + math.lgamma(x + a) - math.lgamma(x + b)
        values.append(math.exp(log_w) * kummer_1f1(x + a, x + b, b) / denom)
    series = MeasureSeries(values, "closed-form(kummer)", "binary64",
                           example53_generator(k1, k2, k3), 0, 1, normalized=True, normalizer=1.0)
    return series


def poisson_pmf(mean: float, n_max: int) -> list:
    return [math.exp(x * math.log(mean) - mean - math.lgamma(x + 1)) for x in range(n_max + 1)]
