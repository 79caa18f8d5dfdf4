"""Arithmetic backends: binary64, mpmath high precision, exact rationals.

All numerical modules take a :class:`NumericBackend` and do their arithmetic
on whatever number type it produces (``float``, ``mpf`` or ``Fraction``).
Python's operators work uniformly on all three, so recursions are written
once.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np

MODES = ("binary64", "mp", "exact")

_ALIASES = {
    "binary64": "binary64",
    "float": "binary64",
    "double": "binary64",
    "mp": "mp",
    "high-precision": "mp",
    "hp": "mp",
    "exact": "exact",
    "exact-rational": "exact",
    "rational": "exact",
}


@lru_cache(maxsize=None)
def mp_context(bits: int) -> mpmath.ctx_mp.MPContext:
    ctx = mpmath.MPContext()
    ctx.prec = bits
    return ctx


@dataclass(frozen=True)
class NumericBackend:
    mode: str = "binary64"
    mantissa_bits: int = 256
    zero_tol: float = 1e-12
    fallback: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown numeric mode {self.mode!r}")
        if self.mode == "mp" and self.mantissa_bits < 64:
            raise ValueError("high-precision mode needs at least 64 mantissa bits")

    @classmethod
    def parse(cls, text: str, **kwargs) -> "NumericBackend":
        """Parse ``"binary64"``, ``"exact"``, ``"mp"`` or ``"mp:512"``."""
        name, _, bits = text.strip().partition(":")
        mode = _ALIASES.get(name.lower())
        if mode is None:
            raise ValueError(f"unknown precision {text!r}; use one of binary64, mp[:bits], exact")
        if bits:
            kwargs["mantissa_bits"] = int(bits)
        return cls(mode=mode, **kwargs)

    @classmethod
    def from_env(cls, default: "NumericBackend | None" = None) -> "NumericBackend | None":
        text = os.environ.get("SRN_PRECISION")
        if text:
            return cls.parse(text)
        return default

    @property
    def tag(self) -> str:
        return f"mp{self.mantissa_bits}" if self.mode == "mp" else self.mode

    @property
    def exact(self) -> bool:
        return self.mode == "exact"

    @property
    def ctx(self):
        return mp_context(self.mantissa_bits)

    def high_precision(self) -> "NumericBackend":
        return NumericBackend("mp", self.mantissa_bits, self.zero_tol, False)

    def num(self, x):
        """Convert an int, Fraction, float or mpf to this backend's number type."""
        if self.mode == "exact":
            if isinstance(x, (int, Fraction)):
                return Fraction(x)
            if isinstance(x, float):
                return Fraction(x)
            raise TypeError(f"cannot represent {x!r} exactly")
        if self.mode == "mp":
            ctx = self.ctx
            if isinstance(x, Fraction):
                return ctx.mpf(x.numerator) / x.denominator
            return ctx.mpf(x)
        if isinstance(x, Fraction):
            try:
                return x.numerator / x.denominator
            except OverflowError:
                return math.inf if x > 0 else -math.inf
        try:
            return float(x)
        except OverflowError:
            return math.inf if x > 0 else -math.inf

    def zero(self):
        return self.num(0)

    def one(self):
        return self.num(1)

    def is_finite(self, x) -> bool:
        if self.mode == "binary64":
            return math.isfinite(x)
        if self.mode == "mp":
            return bool(self.ctx.isfinite(x))
        return True

    def sign(self, x, scale=None) -> int:
        """Sign of ``x``; in float modes values within ``zero_tol * scale`` count as zero."""
        if self.mode != "exact" and scale is not None:
            if abs(x) <= self.zero_tol * abs(scale):
                return 0
        return (x > 0) - (x < 0)


def to_float(x) -> float:
    """Lossy conversion of any backend number to a Python float (±inf on overflow)."""
    if isinstance(x, Fraction):
        try:
            return x.numerator / x.denominator
        except OverflowError:
            return math.inf if x > 0 else -math.inf
    try:
        return float(x)
    except OverflowError:
        return math.inf if x > 0 else -math.inf


def to_float_array(rows) -> np.ndarray:
    return np.array([[to_float(v) for v in row] for row in rows], dtype=float)


def solve_linear(a, b, backend: NumericBackend):
    """Solve ``a @ x = b`` (lists of backend numbers) by Gaussian elimination.

    ``b`` may be a vector or a list of right-hand-side rows (a matrix).  Uses
    partial pivoting; raises ``ZeroDivisionError`` when a pivot vanishes.
    """
    n = len(a)
    matrix_rhs = bool(b) and isinstance(b[0], (list, tuple))
    rhs = [list(r) if matrix_rhs else [r] for r in b]
    m = [list(row) + rhs[i] for i, row in enumerate(a)]
    width = len(m[0])
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(m[r][col]))
        if m[pivot][col] == 0:
            raise ZeroDivisionError("singular matrix")
        m[col], m[pivot] = m[pivot], m[col]
        p = m[col][col]
        for r in range(col + 1, n):
            factor = m[r][col] / p
            if factor:
                row_r, row_c = m[r], m[col]
                for c in range(col, width):
                    row_r[c] -= factor * row_c[c]
    x = [[None] * (width - n) for _ in range(n)]
    for r in range(n - 1, -1, -1):
        for k in range(width - n):
            acc = m[r][n + k]
            for c in range(r + 1, n):
                acc -= m[r][c] * x[c][k]
            x[r][k] = acc / m[r][r]
    return x if matrix_rhs else [row[0] for row in x]


def determinant(a, backend: NumericBackend):
    """Determinant by elimination with partial pivoting (exact in rational mode)."""
    n = len(a)
    m = [list(row) for row in a]
    det = backend.one()
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(m[r][col]))
        if m[pivot][col] == 0:
            return backend.zero()
        if pivot != col:
            m[col], m[pivot] = m[pivot], m[col]
            det = -det
        p = m[col][col]
        det *= p
        for r in range(col + 1, n):
            factor = m[r][col] / p
            if factor:
                for c in range(col, n):
                    m[r][c] -= factor * m[col][c]
    return det
