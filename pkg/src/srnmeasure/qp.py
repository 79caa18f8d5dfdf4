"""Dual active-set solver for tiny strictly convex quadratic programs.

Solves ``min 1/2 |x|^2`` subject to ``E x = e`` and ``C x >= c`` in the style
of Goldfarb and Idnani: start from the unconstrained minimizer, repeatedly
add the most violated constraint (ties go to the lowest index), and drop
active inequalities whose multipliers would turn negative.  Every iterate is
dual feasible, so the first primal feasible point is optimal.  Dimension is
a handful of variables; normals are kept as a dense matrix and projections
are recomputed by least squares each step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalBreakdown


@dataclass
class QPResult:
    x: np.ndarray
    active: list
    multipliers: dict
    iterations: int
    kkt: float
    notes: list = field(default_factory=list)


class Infeasible(NumericalBreakdown):
    pass


def solve_qp(E, e, C, c, tol: float = 1e-12, max_iter: int | None = None) -> QPResult:
    E = np.atleast_2d(np.asarray(E, dtype=float)) if len(E) else np.zeros((0, np.shape(C)[1]))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    e = np.asarray(e, dtype=float)
    c = np.asarray(c, dtype=float)
    n = C.shape[1] if C.size else E.shape[1]
    normals = np.vstack([E, C]) if E.size else C
    rhs = np.concatenate([e, c]) if E.size else c
    m_eq = E.shape[0]
    m = normals.shape[0]
    max_iter = max_iter or 50 * (m + n)

    x = np.zeros(n)
    active: list[int] = []
    sign: dict[int, float] = {}  # orientation used for equalities
    u: dict[int, float] = {}
    scale = np.maximum(1.0, np.abs(normals).sum(axis=1))

    def slack(i):
        return normals[i] @ x - rhs[i]

    def normal(i):
        return sign.get(i, 1.0) * normals[i]

    it = 0
    while True:
        # choose the most violated constraint (equalities first)
        p = None
        worst = 0.0
        for i in range(m):
            if i in active:
                continue
            s = slack(i)
            if i < m_eq:
                viol = abs(s) / scale[i]
                if viol > tol and (p is None or p >= m_eq or viol > worst):
                    p, worst = i, viol
                    sign[i] = -1.0 if s > 0 else 1.0
            elif p is None or p >= m_eq:
                viol = -s / scale[i]
                if viol > tol and viol > worst:
                    p, worst = i, viol
        if p is None:
            break
        u_p = 0.0
        while True:
            it += 1
            if it > max_iter:
                raise NumericalBreakdown("active-set iteration limit reached", iterations=it)
            n_p = normal(p)
            if active:
                N = np.array([normal(i) for i in active]).T  # n x q
                r, *_ = np.linalg.lstsq(N, n_p, rcond=None)
                z = n_p - N @ r
            else:
                r = np.zeros(0)
                z = n_p.copy()
            # partial step: largest dual step keeping inequality multipliers >= 0
            t1, k = np.inf, None
            for idx, i in enumerate(active):
                if i >= m_eq and r[idx] > 1e-15:
                    ratio = u[i] / r[idx]
                    if ratio < t1 or (ratio == t1 and i < k):
                        t1, k = ratio, i
            zz = z @ n_p
            t2 = np.inf if np.linalg.norm(z) <= 1e-14 * max(1.0, np.linalg.norm(n_p)) else \
                -sign.get(p, 1.0) * slack(p) / zz
            t = min(t1, t2)
            if not np.isfinite(t):
                raise Infeasible("constraints are infeasible", constraint=int(p))
            if np.isfinite(t2):
                x = x + t * z
            for idx, i in enumerate(active):
                u[i] -= t * r[idx]
            u_p += t
            if t == t2:
                active.append(p)
                u[p] = u_p
                break
            active.remove(k)
            u.pop(k)
    kkt = kkt_residual(normals, rhs, m_eq, x, {i: sign.get(i, 1.0) * u[i] for i in active})
    return QPResult(x, sorted(active), {i: sign.get(i, 1.0) * u[i] for i in active}, it, kkt)


def kkt_residual(normals, rhs, m_eq, x, mult) -> float:
    """Max of stationarity, primal/dual feasibility and complementarity violations."""
    grad = x.copy()
    for i, ui in mult.items():
        grad = grad - ui * normals[i]
    res = float(np.max(np.abs(grad))) if grad.size else 0.0
    for i in range(normals.shape[0]):
        s = normals[i] @ x - rhs[i]
        res = max(res, abs(s) if i < m_eq else max(0.0, -s))
    for i, ui in mult.items():
        if i >= m_eq:
            res = max(res, max(0.0, -ui), abs(ui * (normals[i] @ x - rhs[i])))
    return res
