"""Flux-balance coefficients and the gamma recursion.

Every stationary measure on a PIC (translated to the non-negative integers)
is a linear combination ``pi(l) = sum_j pi(j) * gamma_j(l)`` of its
generating terms ``pi(L), ..., pi(U)``.  This module computes the jump sets
``B_k``, the signed flux coefficients ``c_k``, the recursion weights ``f_k``,
the boundary matrices ``H`` and ``G`` and the table of ``gamma_j(l)``, plus
the Hessenberg-determinant form of the same numbers.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .chain import TranslatedSystem, as_translated
from .errors import InternalInconsistency, ScopeError
from .numeric import NumericBackend, determinant, solve_linear, to_float


def jump_set(tr, k: int) -> frozenset:
    """``B_k = {w : k'(w - k') > 0}`` with ``k' = w_- + k + 1/2``."""
    ts = as_translated(tr).base
    if not 0 <= k <= ts.m_star:
        raise ValueError(f"k={k} outside 0..{ts.m_star}")
    kp2 = 2 * (ts.omega_minus + k) + 1  # 2k', kept integral
    return frozenset(w for w in ts.omega if kp2 * (2 * w - kp2) > 0)


def _sgn(k: int, wm: int) -> int:
    return 1 if wm + k >= 0 else -1


def c_fun(tr, k: int, ell: int, backend: NumericBackend | None = None):
    """Signed flux coefficient ``c_k(l)``."""
    tr = as_translated(tr)
    backend = backend or tr.base.default_backend()
    ts = tr.base
    total = backend.zero()
    for w in jump_set(tr, k):
        total = total + ts.rate(w, ell, backend)
    return total if _sgn(k, ts.omega_minus) > 0 else -total


def f_fun(tr, k: int, ell: int, backend: NumericBackend | None = None):
    """Recursion weight ``f_k(l) = -c_k(l-k) / c_0(l)`` for ``l > U``."""
    tr = as_translated(tr)
    backend = backend or tr.base.default_backend()
    if ell <= tr.U:
        raise ValueError(f"f_k(l) needs l > U={tr.U}, got {ell}")
    c0 = c_fun(tr, 0, ell, backend)
    if not c0 < 0:
        raise InternalInconsistency(f"c_0({ell}) = {c0} is not negative; (A2) premise broken")
    return -c_fun(tr, k, ell - k, backend) / c0


# -- boundary block --------------------------------------------------------


@dataclass
class Boundary:
    H: list
    G: list
    wcdd: bool
    scaled: list = field(default_factory=list)


def is_wcdd(a) -> bool:
    """Column-wise weak chain diagonal dominance (floats)."""
    n = len(a)
    if n == 0:
        return True
    absa = [[abs(to_float(v)) for v in row] for row in a]
    strict = []
    for j in range(n):
        off = sum(absa[i][j] for i in range(n) if i != j)
        d = absa[j][j]
        if d < off * (1 - 1e-14):
            return False
        strict.append(d > off * (1 + 1e-14))
    # a column that is only weakly dominant needs a path from some strict column;
    # edge k -> j whenever entry (k, j) is non-zero (column digraph)
    reach = {j for j in range(n) if strict[j]}
    frontier = list(reach)
    while frontier:
        k = frontier.pop()
        for j in range(n):
            if j not in reach and absa[k][j] > 0:
                reach.add(j)
                frontier.append(j)
    return len(reach) == n


def boundary_matrices(tr, backend: NumericBackend | None = None) -> Boundary:
    """``H`` (L x U) and ``G = -H1^{-1} H2`` (L x (U-L)) with column scaling of ``H1``."""
    tr = as_translated(tr)
    backend = backend or tr.base.default_backend()
    L, U, ts = tr.L, tr.U, tr.base
    if L == 0 or U == L:
        return Boundary([], [[] for _ in range(L)], True)
    tot = [ts.total_rate(m, backend) for m in range(L)]
    H = []
    for m in range(L):
        row = []
        for n in range(U):
            delta = backend.one() if m == n else backend.zero()
            row.append(delta - ts.rate(m - n, n, backend) / tot[m])
        H.append(row)
    # A = D H1 D^{-1}, D = diag(total rate); then G = -D^{-1} A^{-1} D H2
    A = [[tot[m] * H[m][n] / tot[n] for n in range(L)] for m in range(L)]
    rhs = [[tot[m] * H[m][n] for n in range(L, U)] for m in range(L)]
    try:
        Y = solve_linear(A, rhs, backend)
    except ZeroDivisionError:
        raise InternalInconsistency("boundary block H1 is singular; (A1)/(A2) premise broken") from None
    G = [[-Y[m][c] / tot[m] for c in range(U - L)] for m in range(L)]
    return Boundary(H, G, is_wcdd(A), A)


# -- gamma table -----------------------------------------------------------


@dataclass
class GammaTable:
    tr: TranslatedSystem
    n_max: int
    backend: NumericBackend
    gamma: list  # rows l = 0..n_max, columns j = L..U
    cond: list  # per-row condition estimate (floats)
    boundary: Boundary
    f_cache: dict
    flagged: list = field(default_factory=list)  # rows where binary64 overflowed
    requested: NumericBackend | None = None

    @property
    def L(self) -> int:
        return self.tr.L

    @property
    def U(self) -> int:
        return self.tr.U

    @property
    def d(self) -> int:
        return self.tr.U - self.tr.L + 1

    @property
    def H(self):
        return self.boundary.H

    @property
    def G(self):
        return self.boundary.G

    def row(self, ell: int) -> list:
        if ell < 0:
            return [self.backend.zero()] * self.d
        return self.gamma[ell]

    def value(self, j: int, ell: int):
        return self.row(ell)[j - self.L]

    def column(self, j: int) -> list:
        return [r[j - self.L] for r in self.gamma]

    def f(self, k: int, ell: int):
        return self.f_cache[(k, ell)]

    def as_float(self):
        import numpy as np

        return np.array([[to_float(v) for v in r] for r in self.gamma], dtype=float)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["l"] + [f"gamma_{j}" for j in range(self.L, self.U + 1)] + ["cond"])
        for ell, r in enumerate(self.gamma):
            w.writerow([ell] + [repr(to_float(v)) for v in r] + [repr(self.cond[ell])])
        return out.getvalue()

    def to_json(self) -> dict:
        return {
            "L": self.L,
            "U": self.U,
            "s": self.tr.s,
            "n_max": self.n_max,
            "precision": self.backend.tag,
            "flagged_rows": list(self.flagged),
            "H": [[to_float(v) for v in r] for r in self.H],
            "G": [[to_float(v) for v in r] for r in self.G],
            "gamma": [[to_float(v) for v in r] for r in self.gamma],
            "cond": [c if math.isfinite(c) else None for c in self.cond],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def resolve_backend(ts, backend: NumericBackend | None) -> NumericBackend:
    env = NumericBackend.from_env()
    backend = backend or env or ts.default_backend()
    if backend.exact and not ts.exact_capable:
        raise ScopeError("exact-rational mode needs rational-valued rates (no exp/log/sqrt)")
    return backend


def gamma_table(tr, n_max: int, backend: NumericBackend | None = None) -> GammaTable:
    """Tabulate ``gamma_j(l)`` for ``l = 0..n_max``.

    In binary64 mode an overflow (or NaN) restarts the whole table in the
    high-precision backend when ``backend.fallback`` is set; the first
    offending row is recorded in ``flagged``.
    """
    tr = as_translated(tr)
    backend = resolve_backend(tr.base, backend)
    if n_max < tr.U:
        raise ValueError(f"n_max={n_max} must be at least U={tr.U}")
    table = _build(tr, n_max, backend)
    if isinstance(table, int):
        bad = table
        if backend.mode != "binary64" or not backend.fallback:
            raise InternalInconsistency(f"gamma recursion overflowed at row {bad}", row=bad)
        table = _build(tr, n_max, backend.high_precision())
        if isinstance(table, int):
            raise InternalInconsistency(f"gamma recursion overflowed at row {table} in high precision")
        table.flagged = [bad]
        table.requested = backend
    return table


def _build(tr: TranslatedSystem, n_max: int, backend: NumericBackend):
    L, U, ts = tr.L, tr.U, tr.base
    d = U - L + 1
    ms = ts.m_star
    zero, one = backend.zero(), backend.one()
    bnd = boundary_matrices(tr, backend)
    gamma, cond = [], []
    for ell in range(min(L, n_max + 1)):
        gamma.append([bnd.G[ell][c] for c in range(d - 1)] + [zero])
        cond.append(1.0)
    for ell in range(L, U + 1):
        gamma.append([one if ell == j else zero for j in range(L, U + 1)])
        cond.append(1.0)
    # f_k(l) for l > U, memoized; c_k evaluated through the rate cache
    sets = [jump_set(tr, k) for k in range(ms + 1)]
    signs = [_sgn(k, ts.omega_minus) for k in range(ms + 1)]

    def c(k, ell):
        total = zero
        for w in sets[k]:
            total = total + ts.rate(w, ell, backend)
        return total if signs[k] > 0 else -total

    f_cache = {}
    for ell in range(U + 1, n_max + 1):
        c0 = c(0, ell)
        if not c0 < 0:
            if backend.mode == "binary64" and not backend.is_finite(c0):
                return ell
            raise InternalInconsistency(f"c_0({ell}) is not negative; (A2) premise broken")
        row = [zero] * d
        for k in range(1, ms + 1):
            fk = -c(k, ell - k) / c0
            f_cache[(k, ell)] = fk
            if ell - k < 0 or not fk:
                continue
            prev = gamma[ell - k]
            for jj in range(d):
                row[jj] = row[jj] + prev[jj] * fk
        # normwise cancellation estimate: sum of |terms| over the 1-norm of the row
        if backend.mode == "binary64" and not all(math.isfinite(v) for v in row):
            return ell
        try:
            terms = math.fsum(abs(to_float(gamma[ell - k][jj] * f_cache[(k, ell)]))
                              for k in range(1, ms + 1) if ell - k >= 0 for jj in range(d))
            norm = math.fsum(abs(to_float(v)) for v in row)
        except OverflowError:
            # the row sits near the top of the binary64 range
            if backend.mode == "binary64":
                return ell
            terms, norm = math.inf, math.inf
        if not (math.isfinite(terms) and math.isfinite(norm)):
            if backend.mode == "binary64":
                return ell
            worst = 1.0
        else:
            worst = max(1.0, terms / norm) if norm else (1.0 if not terms else math.inf)
        gamma.append(row)
        cond.append(worst)
    return GammaTable(tr, n_max, backend, gamma[: n_max + 1], cond[: n_max + 1], bnd, f_cache)


# -- determinant representation ------------------------------------------------


def hessenberg_det(entry, n: int, one=1):
    """Leading principal minors ``D_0..D_n`` of a lower Hessenberg matrix.

    ``entry(r, k)`` returns the (1-based) entry of row ``r``, column ``k`` for
    ``k <= r + 1``.  Expansion along the last row gives
    ``D_r = sum_k (-1)^(r-k) a_{r,k} prod_{i=k}^{r-1} a_{i,i+1} D_{k-1}``.
    """
    D = [one]
    sup = [None] + [entry(i, i + 1) for i in range(1, n)]  # a_{i,i+1}
    for r in range(1, n + 1):
        acc = 0 * one
        prod = one
        for k in range(r, 0, -1):
            a = entry(r, k)
            if a:
                sign = 1 if (r - k) % 2 == 0 else -1
                acc = acc + sign * a * prod * D[k - 1]
            if k > 1:
                prod = prod * sup[k - 1]
                if not prod:
                    break
        D.append(acc)
    return D


def _band_entry(table: GammaTable, j: int):
    """Entries of ``B_j`` in the 1-based convention of :func:`hessenberg_det`."""
    U, ms = table.U, table.tr.base.m_star
    backend = table.backend
    zero = backend.zero()

    def g(r):
        total = zero
        for t in range(r, ms + 1):
            total = total + _f(table, t, U + r) * table.value(j, U + r - t)
        return total

    def entry(r, k):
        if k == 1:
            return g(r) if r <= ms else zero
        lag = r - k + 1
        if lag == 0:
            return -backend.one()
        if 1 <= lag <= ms:
            return _f(table, lag, U + r)
        return zero

    return entry


def _f(table: GammaTable, k: int, ell: int):
    key = (k, ell)
    if key not in table.f_cache:
        table.f_cache[key] = f_fun(table.tr, k, ell, table.backend)
    return table.f_cache[key]


def hessenberg_matrix(table: GammaTable, j: int, ell: int) -> list:
    """Dense ``B_j(l)`` (for cross-checks against generic determinant routines)."""
    entry = _band_entry(table, j)
    zero = table.backend.zero()
    return [[entry(r, k) if k <= r + 1 else zero for k in range(1, ell + 1)]
            for r in range(1, ell + 1)]


def hessenberg_gamma(table: GammaTable, j: int, ell: int):
    """``gamma_j(U + l) = det B_j(l)`` via the minor recursion, O(l * m*)."""
    if not table.L <= j <= table.U:
        raise ValueError(f"j={j} outside [{table.L}, {table.U}]")
    if ell < 1:
        raise ValueError("the determinant form needs l >= 1")
    entry = _band_entry(table, j)
    return hessenberg_det(entry, ell, table.backend.one())[ell]


def hessenberg_series(table: GammaTable, j: int, ell: int) -> list:
    """``[det B_j(1), ..., det B_j(l)]`` from one pass of the recursion."""
    entry = _band_entry(table, j)
    return hessenberg_det(entry, ell, table.backend.one())[1:]


def dense_det(matrix, backend: NumericBackend):
    return determinant(matrix, backend)


# -- flux identity and lemma checks -------------------------------------------


def flux_sum(table: GammaTable, nu, ell: int):
    """``sum_k nu(l-k) c_k(l-k)``; returns (sum, sum of absolute terms)."""
    tr, backend = table.tr, table.backend
    total = backend.zero()
    scale = 0.0
    for k in range(table.tr.base.m_star + 1):
        x = ell - k
        if x < 0:
            continue
        term = nu[x] * c_fun(tr, k, x, backend)
        total = total + term
        scale += abs(to_float(term))
    return total, scale


def lemma_violations(table: GammaTable) -> list:
    """Pointwise sign checks on ``c_k`` and ``f_k`` (empty list when all hold)."""
    tr, backend = table.tr, table.backend
    ts = tr.base
    wm, wp, ms = ts.omega_minus, ts.omega_plus, ts.m_star
    ip, im = ts.i_omega[wp], ts.i_omega[wm]
    bad = []
    if jump_set(tr, 0) != frozenset({wm}):
        bad.append("B_0 != {w_-}")
    for ell in range(table.n_max + 1):
        c0 = c_fun(tr, 0, ell, backend)
        if (ell > tr.U and not c0 < 0) or (ell <= tr.U and c0 != 0):
            bad.append(f"c_0({ell}) sign")
        for k in range(ms + 1):
            ck = c_fun(tr, k, ell, backend)
            nxt = c_fun(tr, k, ell + 1, backend)
            if k >= -wm:
                if ck < 0 or (ell >= ip and not ck > 0):
                    bad.append(f"c_{k}({ell}) should be positive")
            else:
                if ck > 0 or (ell >= im and not ck < 0):
                    bad.append(f"c_{k}({ell}) should be negative")
            if (ck > 0 and not nxt > 0) or (ck < 0 and not nxt < 0):
                bad.append(f"c_{k} sign not persistent at {ell}")
    return bad


def exact_fraction_det(matrix) -> Fraction:
    return determinant([[Fraction(v) for v in r] for r in matrix], NumericBackend("exact"))


def sign_structure_violations(table: GammaTable) -> list:
    """With one generating term every ``gamma_L(l) > 0``; otherwise each column
    must take both signs within the table (empty list when this holds)."""
    bad = []
    rows = range(table.n_max + 1)
    if table.d == 1:
        bad += [f"gamma_{table.L}({ell}) <= 0" for ell in rows if not table.value(table.L, ell) > 0]
        return bad
    for j in range(table.L, table.U + 1):
        col = table.column(j)
        if not any(v > 0 for v in col) or not any(v < 0 for v in col):
            bad.append(f"gamma_{j} does not take both signs on l <= {table.n_max}")
    return bad
