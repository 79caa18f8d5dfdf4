"""State-space classification and translation of a PIC onto the non-negative integers."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

from .errors import AssumptionError, ScopeError
from .netparse import Term, TransitionSystem


@dataclass(frozen=True)
class Classification:
    neutral: tuple  # inclusive (a, b) or () when empty
    trapping: tuple
    escaping: tuple
    omega_star: int
    pics: tuple
    qics: tuple
    i: int
    i_plus: int
    o: int
    o_minus: int

    def kind(self, x: int) -> str:
        """Class of state ``x``: 'neutral', 'trapping', 'escaping', 'pic' or 'qic'."""
        for name in ("neutral", "trapping", "escaping"):
            rng = getattr(self, name)
            if rng and rng[0] <= x <= rng[1]:
                return name
        r = x % self.omega_star
        for s in self.pics:
            if x >= s and (x - s) % self.omega_star == 0:
                return "pic"
        for s in self.qics:
            if x >= s and (x - s) % self.omega_star == 0:
                return "qic"
        raise AssertionError(f"state {x} (residue {r}) is unclassified")

    def to_json(self) -> dict:
        return {
            "neutral": list(self.neutral),
            "trapping": list(self.trapping),
            "escaping": list(self.escaping),
            "omega_star": self.omega_star,
            "pics": list(self.pics),
            "qics": list(self.qics),
            "i": self.i,
            "i_plus": self.i_plus,
            "o": self.o,
            "o_minus": self.o_minus,
        }


def _range(a: int, b: int) -> tuple:
    return (a, b) if a <= b else ()


def classify(ts: TransitionSystem) -> Classification:
    omega = ts.omega
    i_w = ts.i_omega
    o_w = {w: i_w[w] + w for w in omega}
    i = min(i_w.values())
    i_plus = min(i_w[w] for w in omega if w > 0)
    o = min(o_w.values())
    o_minus = min(o_w[w] for w in omega if w < 0)
    wstar = reduce(math.gcd, (abs(w) for w in omega))
    neutral = _range(0, min(i, o) - 1)
    trapping = _range(o, i - 1)
    escaping = _range(i, max(i_plus, o_minus) - 1)
    n_trap = max(0, i - o)
    if n_trap == 0:
        pics = tuple(range(o_minus, o_minus + wstar))
        qics = ()
    elif n_trap >= wstar:
        pics = ()
        qics = tuple(range(i_plus, i_plus + wstar))
    else:
        pics = tuple(range(i_plus, o_minus + wstar))
        qics = tuple(range(o_minus + wstar, i_plus + wstar))
    return Classification(neutral, trapping, escaping, wstar, pics, qics, i, i_plus, o, o_minus)


@dataclass(frozen=True)
class TranslatedSystem:
    base: TransitionSystem
    s: int
    L: int
    U: int
    omega_star: int = 1

    @property
    def d(self) -> int:
        return self.U - self.L + 1

    def original_state(self, x: int) -> int:
        return self.omega_star * x + self.s

    def to_json(self) -> dict:
        return {"s": self.s, "L": self.L, "U": self.U, "omega_star": self.omega_star,
                "system": self.base.to_json()}


def translate(ts: TransitionSystem, s: int | None = None) -> TranslatedSystem:
    """Restrict to the PIC with minimum ``s`` and rescale it to the non-negative integers."""
    cls = classify(ts)
    if not cls.pics:
        raise ScopeError("the chain has no positive irreducible component")
    if s is None:
        s = cls.pics[0]
    if s not in cls.pics:
        raise ScopeError(f"s={s} is not a PIC residue; PIC minima are {list(cls.pics)}")
    wstar = cls.omega_star
    omega = tuple(w // wstar for w in ts.omega)
    terms = {}
    i_new = {}
    for w in ts.omega:
        ws = w // wstar
        terms[ws] = tuple(Term(t.reaction, t.scale * wstar, t.scale * s + t.shift)
                          for t in ts.terms[w])
        i_new[ws] = max(0, -((s - ts.i_omega[w]) // wstar))  # ceil((i - s) / w*)
    base = TransitionSystem(omega, terms, i_new, ts.probe_horizon, ts.reactions)
    wm = base.omega_minus
    L = i_new[wm] + wm
    U = i_new[wm] - 1
    if L < 0 or U < L:
        raise AssumptionError(f"translated chain has inconsistent generating range L={L}, U={U}")
    return TranslatedSystem(base, s, L, U, wstar)


def as_translated(ts) -> TranslatedSystem:
    """Accept either a raw or an already translated system."""
    if isinstance(ts, TranslatedSystem):
        return ts
    return translate(ts)
