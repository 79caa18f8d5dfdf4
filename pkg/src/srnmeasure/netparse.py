"""Reaction-network DSL and the transition system it induces.

A document is a list of clauses, one per line (``;`` also separates
clauses, ``#`` starts a comment)::

    S -> 2S @ 40
    2S <-> 3S @ 22, 1
    0 -> S @ expr(pow(2, x)) i=0

Mass-action intensities are ``kappa * x!/(x-y)!``; ``expr(...)`` intensities
are arbitrary expressions in ``x`` and are taken to be zero below the source
complex.  Jumps with equal size are summed into one rate function
``lambda_omega``.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import AssumptionError, ParseError
from .expr import EXACT_OPS, Expression, NotExact, ops_for
from .numeric import NumericBackend

X_PROBE = 10_000

_REAL = re.compile(r"[0-9]+/[0-9]+|[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?|[0-9]+\.")
_INT = re.compile(r"[0-9]+")


@dataclass(frozen=True)
class RateSpec:
    kind: str  # "mass-action" or "expr"
    kappa: Fraction | None = None
    kappa_text: str | None = None
    expr: Expression | None = None
    declared_threshold: int | None = None

    @classmethod
    def mass_action(cls, kappa) -> "RateSpec":
        text = str(kappa)
        q = Fraction(text) if not isinstance(kappa, Fraction) else kappa
        if q <= 0:
            raise ParseError(f"rate constant must be positive, got {text}")
        return cls("mass-action", kappa=q, kappa_text=text)

    @classmethod
    def expression(cls, source: str, threshold: int | None = None) -> "RateSpec":
        return cls("expr", expr=Expression(source), declared_threshold=threshold)

    @property
    def exact_capable(self) -> bool:
        return self.kind == "mass-action" or self.expr.exact_capable

    def render(self) -> str:
        if self.kind == "mass-action":
            return self.kappa_text
        return f"expr({self.expr.source})"


@dataclass(frozen=True)
class Reaction:
    source: int
    target: int
    rate: RateSpec

    def __post_init__(self):
        if self.source < 0 or self.target < 0:
            raise ParseError("complexes must be non-negative multiples of S")
        if self.source == self.target:
            raise ParseError(f"reaction {self.source}S -> {self.target}S has zero jump")

    @property
    def jump(self) -> int:
        return self.target - self.source

    @property
    def mass_action(self) -> bool:
        return self.rate.kind == "mass-action"

    def exact_intensity(self, x: int) -> Fraction:
        """Intensity at state ``x`` as an exact rational (``NotExact`` if impossible)."""
        if x < self.source:
            return Fraction(0)
        if self.mass_action:
            return self.rate.kappa * math.perm(x, self.source)
        return self.rate.expr.exact(x)

    def intensity(self, x: int, backend: NumericBackend):
        if x < self.source:
            return backend.zero()
        if self.mass_action or self.rate.expr.exact_capable:
            return backend.num(self.exact_intensity(x))
        return self.rate.expr.evaluate(x, ops_for(backend))

    def render(self) -> str:
        text = f"{_complex(self.source)} -> {_complex(self.target)} @ {self.rate.render()}"
        if self.rate.declared_threshold is not None:
            text += f" i={self.rate.declared_threshold}"
        return text


def _complex(n: int) -> str:
    if n == 0:
        return "0"
    return "S" if n == 1 else f"{n}S"


# -- parsing ---------------------------------------------------------------


class _Cursor:
    def __init__(self, text: str, line: int, offset: int = 0):
        self.text = text
        self.line = line
        self.pos = 0
        self.offset = offset

    @property
    def column(self) -> int:
        return self.offset + self.pos + 1

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r":
            self.pos += 1

    def at_end(self) -> bool:
        self.skip()
        return self.pos >= len(self.text)

    def peek(self, literal: str) -> bool:
        self.skip()
        return self.text.startswith(literal, self.pos)

    def take(self, literal: str) -> bool:
        if self.peek(literal):
            self.pos += len(literal)
            return True
        return False

    def error(self, message, expected=None):
        raise ParseError(message, self.line, self.column, expected)

    def match(self, pattern: re.Pattern):
        self.skip()
        m = pattern.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return m.group(0)
        return None


def _parse_complex(cur: _Cursor) -> int:
    cur.skip()
    col = cur.column
    digits = cur.match(_INT)
    if cur.pos < len(cur.text) and cur.text[cur.pos] == "S":
        cur.pos += 1
        return 1 if digits is None else int(digits)
    if digits is None:
        cur.error("missing complex", ["'0'", "'nS'"])
    if int(digits) != 0:
        raise ParseError(f"complex '{digits}' must be '0' or carry the species S", cur.line, col, ["'S'"])
    return 0


def _parse_rate(cur: _Cursor):
    cur.skip()
    col = cur.column
    if cur.take("expr("):
        start = cur.pos
        depth = 1
        while cur.pos < len(cur.text) and depth:
            ch = cur.text[cur.pos]
            depth += (ch == "(") - (ch == ")")
            cur.pos += 1
        if depth:
            cur.error("unterminated expr(", ["')'"])
        body = cur.text[start:cur.pos - 1]
        if not body.strip():
            raise ParseError("empty expression", cur.line, col)
        return ("expr", Expression(body, cur.line, cur.offset + start + 1))
    text = cur.match(_REAL)
    if text is None:
        cur.error("missing rate", ["positive real", "'expr('"])
    if "/" in text and int(text.split("/")[1]) == 0:
        raise ParseError(f"zero denominator in rate constant {text}", cur.line, col)
    if Fraction(text) <= 0:
        raise ParseError(f"rate constant must be positive, got {text}", cur.line, col)
    return ("mass-action", text)


def _parse_clause(cur: _Cursor) -> list[Reaction]:
    source = _parse_complex(cur)
    if cur.take("<->"):
        reversible = True
    elif cur.take("->"):
        reversible = False
    else:
        cur.error("missing arrow", ["'->'", "'<->'"])
    target = _parse_complex(cur)
    if source == target:
        raise ParseError(f"source and target are both {_complex(source)}", cur.line, cur.column)
    if not cur.take("@"):
        cur.error("missing rate section", ["'@'"])
    rates = [_parse_rate(cur)]
    if cur.take(","):
        rates.append(_parse_rate(cur))
    if len(rates) != (2 if reversible else 1):
        cur.error("'<->' needs two rates and '->' exactly one",
                  ["','"] if reversible else ["end of clause"])
    thresholds = [None] * len(rates)
    if cur.take("i="):
        thresholds[0] = _take_int(cur)
        if reversible and cur.take(","):
            thresholds[1] = _take_int(cur)
    if not cur.at_end():
        cur.error(f"unexpected text {cur.text[cur.pos:].strip()!r}", ["'i='", "end of line"])
    pairs = [(source, target)] + ([(target, source)] if reversible else [])
    out = []
    for (y, yp), (kind, value), thr in zip(pairs, rates, thresholds):
        if kind == "mass-action":
            if thr is not None:
                raise ParseError("i= applies to expr(...) rates only", cur.line, cur.column)
            spec = RateSpec("mass-action", kappa=Fraction(value), kappa_text=value)
        else:
            spec = RateSpec("expr", expr=value, declared_threshold=thr)
        out.append(Reaction(y, yp, spec))
    return out


def _take_int(cur: _Cursor) -> int:
    text = cur.match(_INT)
    if text is None:
        cur.error("missing threshold", ["non-negative integer"])
    return int(text)


def parse_network(text: str) -> list[Reaction]:
    """Parse a network document into a list of reactions (reversible arrows expand to two)."""
    reactions = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        offset = 0
        for piece in line.split(";"):
            if piece.strip():
                reactions.extend(_parse_clause(_Cursor(piece, lineno, offset)))
            offset += len(piece) + 1
    if not reactions:
        raise ParseError("document contains no reactions", 1, 1, ["a reaction clause"])
    return reactions


def render(reactions) -> str:
    return "\n".join(r.render() for r in reactions) + "\n"


# -- transition systems ----------------------------------------------------


@dataclass(frozen=True)
class Term:
    """Contribution ``eta(scale * x + shift)`` of one reaction to a rate function."""

    reaction: Reaction
    scale: int = 1
    shift: int = 0


@dataclass(frozen=True)
class TransitionSystem:
    """Jump set with rate functions and activation thresholds."""

    omega: tuple
    terms: dict
    i_omega: dict
    probe_horizon: int | None = None
    reactions: tuple = ()
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def omega_plus(self) -> int:
        return max(self.omega)

    @property
    def omega_minus(self) -> int:
        return min(self.omega)

    @property
    def m_star(self) -> int:
        return self.omega_plus - self.omega_minus - 1

    @property
    def exact_capable(self) -> bool:
        return all(t.reaction.rate.exact_capable for ts in self.terms.values() for t in ts)

    @property
    def mass_action(self) -> bool:
        return all(t.reaction.mass_action for ts in self.terms.values() for t in ts)

    def default_backend(self) -> NumericBackend:
        return NumericBackend("exact") if self.exact_capable else NumericBackend("binary64")

    def rate(self, w: int, x: int, backend: NumericBackend):
        """``lambda_w(x)`` in the backend's number type (zero off Omega or for x < 0)."""
        key = (w, x, backend.tag)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if x < 0 or w not in self.terms:
            value = backend.zero()
        else:
            value = backend.zero()
            for t in self.terms[w]:
                value = value + t.reaction.intensity(t.scale * x + t.shift, backend)
        if len(self._cache) < 2_000_000:
            self._cache[key] = value
        return value

    def exact_rate(self, w: int, x: int) -> Fraction:
        return self.rate(w, x, NumericBackend("exact"))

    def total_rate(self, x: int, backend: NumericBackend):
        total = backend.zero()
        for w in self.omega:
            total = total + self.rate(w, x, backend)
        return total

    def positive(self, w: int, x: int) -> bool:
        """Sign test for (A2), exact or high precision so that overflow cannot fake a zero."""
        if x < 0 or w not in self.terms:
            return False
        return any(_term_positive(t, x) for t in self.terms[w])

    def to_json(self, tabulate: int | None = None) -> dict:
        doc = {
            "omega": list(self.omega),
            "i_omega": {str(w): self.i_omega[w] for w in self.omega},
            "omega_plus": self.omega_plus,
            "omega_minus": self.omega_minus,
            "m_star": self.m_star,
            "exact_rates": self.exact_capable,
            "probe_horizon": self.probe_horizon,
            "reactions": [r.render() for r in self.reactions],
        }
        if tabulate is not None:
            b = NumericBackend("binary64")
            doc["rates"] = {str(w): [float(self.rate(w, x, b)) for x in range(tabulate + 1)]
                            for w in self.omega}
        return doc

    def canonical_json(self, tabulate: int | None = None) -> str:
        return json.dumps(self.to_json(tabulate), sort_keys=True, separators=(",", ":"))


_MP = NumericBackend("mp", 128)


def _term_positive(t: Term, x: int) -> bool:
    z = t.scale * x + t.shift
    r = t.reaction
    if z < r.source:
        return False
    if r.mass_action:
        return True
    if r.rate.expr.exact_capable:
        try:
            return r.exact_intensity(z) > 0
        except NotExact:
            pass
    return r.rate.expr.evaluate(z, ops_for(_MP)) > 0


def _check_value(r: Reaction, x: int):
    """Return the sign of an expr intensity at x, rejecting negative or non-finite values."""
    expr = r.rate.expr
    try:
        if expr.exact_capable:
            v = expr.exact(x)
        else:
            v = expr.evaluate(x, ops_for(_MP))
            if not _MP.ctx.isfinite(v):
                raise AssumptionError(f"rate of {r.render()} is not finite at x={x}")
    except ZeroDivisionError:
        raise AssumptionError(f"rate of {r.render()} divides by zero at x={x}") from None
    except NotExact:
        v = expr.evaluate(x, ops_for(_MP))
    except (ValueError, OverflowError) as exc:
        raise AssumptionError(f"rate of {r.render()} cannot be evaluated at x={x}: {exc}") from None
    if v < 0:
        raise AssumptionError(f"rate of {r.render()} is negative at x={x}")
    return v > 0


def build_transition_system(reactions, probe_horizon: int = X_PROBE) -> TransitionSystem:
    """Group reactions by jump size and validate (A1) and (A2)."""
    reactions = list(reactions)
    if not reactions:
        raise AssumptionError("no reactions given")
    groups: dict[int, list[Reaction]] = {}
    for r in reactions:
        groups.setdefault(r.jump, []).append(r)
    omega = tuple(sorted(groups))
    if not any(w > 0 for w in omega) or not any(w < 0 for w in omega):
        side = "positive" if not any(w > 0 for w in omega) else "negative"
        raise AssumptionError(f"(A1) violated: the network has no {side} jump")
    # canonical ordering so the result does not depend on input order
    terms = {w: tuple(Term(r) for r in sorted(groups[w], key=lambda r: r.render())) for w in omega}
    needs_probe = any(not r.mass_action for r in reactions)
    i_omega = {}
    for w in omega:
        i_omega[w] = _threshold(w, groups[w], probe_horizon)
    ordered = tuple(sorted(reactions, key=lambda r: (r.source, r.target, r.render())))
    return TransitionSystem(omega, terms, i_omega, probe_horizon if needs_probe else None, ordered)


def _threshold(w: int, group: list[Reaction], horizon: int) -> int:
    if all(r.mass_action for r in group):
        return min(r.source for r in group)
    first = None
    for r in group:
        if r.mass_action:
            continue
        found = None
        for x in range(r.source, horizon + 1):
            pos = _check_value(r, x)
            if pos and found is None:
                found = x
        if r.rate.declared_threshold is not None and found is not None \
                and r.rate.declared_threshold != found:
            raise AssumptionError(
                f"(A2) violated: {r.render()} is first positive at x={found}, "
                f"not at the declared i={r.rate.declared_threshold}")
    # the sum over the group must be positive exactly from its first positive state on
    for x in range(0, horizon + 1):
        pos = any(_term_positive(Term(r), x) for r in group)
        if pos and first is None:
            first = x
        elif not pos and first is not None:
            raise AssumptionError(
                f"(A2) violated: lambda_{w} vanishes at x={x} although it is positive at x={first}")
    if first is None:
        raise AssumptionError(f"(A2) violated: lambda_{w} is zero on [0, {horizon}]")
    return first


def load_network(path) -> TransitionSystem:
    with open(path, encoding="utf-8") as fh:
        return build_transition_system(parse_network(fh.read()))
