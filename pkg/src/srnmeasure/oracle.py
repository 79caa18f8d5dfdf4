"""Gillespie simulation: time-weighted occupancy of one long trajectory.

Random numbers come from NumPy's counter-based Philox generator
(``Generator(Philox(seed))``), consumed directly inside the compiled loop:
one standard exponential for each waiting time and one uniform for each jump
choice.  Rates are tabulated in binary64 for states ``0..cap-1``; the table
doubles whenever the trajectory approaches its end.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .chain import classify
from .errors import InternalInconsistency
from .netparse import TransitionSystem
from .numeric import NumericBackend, to_float

DONE, GROW, MAX_EVENTS, ABSORBED = 0, 1, 2, 3
REASONS = {DONE: "t_total reached", MAX_EVENTS: "max_events reached", ABSORBED: "absorbed"}


@dataclass(frozen=True)
class SsaConfig:
    x0: int
    t_total: float
    t_burn: float = 0.0
    seed: int = 0
    max_events: int = 10**11

    def __post_init__(self):
        if not self.t_total > self.t_burn >= 0:
            raise ValueError("need t_total > t_burn >= 0")
        if self.x0 < 0:
            raise ValueError("x0 must be a non-negative state")


@dataclass
class SsaResult:
    states: np.ndarray
    fractions: np.ndarray
    t_end: float
    events: int
    reason: str
    config: SsaConfig
    flags: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {int(x): float(p) for x, p in zip(self.states, self.fractions)}

    def dense(self, n_max: int) -> np.ndarray:
        """Fractions on ``0..n_max`` (mass above ``n_max`` is dropped)."""
        out = np.zeros(n_max + 1)
        keep = self.states <= n_max
        out[self.states[keep]] = self.fractions[keep]
        return out

    def to_csv(self, header_lines=()) -> str:
        out = io.StringIO()
        for line in header_lines:
            out.write(f"# {line}\n")
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["state", "time_fraction"])
        for x, p in zip(self.states, self.fractions):
            w.writerow([int(x), repr(float(p))])
        return out.getvalue()

    def to_json(self) -> dict:
        return {"t_end": self.t_end, "events": self.events, "reason": self.reason,
                "flags": list(self.flags), "x0": self.config.x0, "t_total": self.config.t_total,
                "t_burn": self.config.t_burn, "seed": self.config.seed,
                "support": [int(self.states.min()), int(self.states.max())] if len(self.states) else []}


@njit(nogil=True, cache=True)
def _kernel(x, t, t_burn, t_total, rates, total, jumps, occ, comp, rng, events, max_events, margin):
    m = jumps.shape[0]
    cap = total.shape[0]
    while True:
        if x + margin >= cap:
            return x, t, events, GROW
        q = total[x]
        if q <= 0.0:
            lo = max(t, t_burn)
            if t_total > lo:
                occ[x] += t_total - lo
            return x, t_total, events, ABSORBED
        tn = t + rng.standard_exponential() / q
        lo = max(t, t_burn)
        hi = min(tn, t_total)
        if hi > lo:
            # compensated summation keeps long occupancy sums accurate
            y = (hi - lo) - comp[x]
            s = occ[x] + y
            comp[x] = (s - occ[x]) - y
            occ[x] = s
        if tn >= t_total:
            return x, t_total, events, DONE
        u = rng.random() * q
        j = 0
        acc = rates[x, 0]
        while acc <= u and j < m - 1:
            j += 1
            acc += rates[x, j]
        x += jumps[j]
        t = tn
        events += 1
        if events >= max_events:
            return x, t, events, MAX_EVENTS


def _rate_table(ts: TransitionSystem, cap: int) -> tuple:
    backend = NumericBackend("binary64")
    rates = np.zeros((cap, len(ts.omega)))
    for x in range(cap):
        for k, w in enumerate(ts.omega):
            rates[x, k] = to_float(ts.rate(w, x, backend))
    rates[~np.isfinite(rates)] = np.finfo(float).max / (4 * len(ts.omega))
    return rates, rates.sum(axis=1)


def ssa_occupancy(ts: TransitionSystem, cfg: SsaConfig, cap: int = 1024) -> SsaResult:
    """Exact SSA from ``cfg.x0``; occupancy over ``(t_burn, t_total]``."""
    cls = classify(ts)
    wstar = cls.omega_star
    if not any(cfg.x0 >= s and (cfg.x0 - s) % wstar == 0 for s in cls.pics):
        raise ValueError(f"x0={cfg.x0} is not in a positive irreducible component "
                         f"(PIC minima {list(cls.pics)}, step {wstar})")
    jumps = np.array(ts.omega, dtype=np.int64)
    margin = int(max(abs(w) for w in ts.omega))
    cap = max(cap, 2 * (cfg.x0 + margin + 1))
    rates, total = _rate_table(ts, cap)
    occ = np.zeros(cap)
    comp = np.zeros(cap)
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    x, t, events = cfg.x0, 0.0, 0
    while True:
        x, t, events, status = _kernel(x, t, cfg.t_burn, cfg.t_total, rates, total, jumps,
                                       occ, comp, rng, events, cfg.max_events, margin)
        if status != GROW:
            break
        cap *= 2
        rates, total = _rate_table(ts, cap)
        occ = np.concatenate([occ, np.zeros(cap - occ.size)])
        comp = np.concatenate([comp, np.zeros(cap - comp.size)])
    flags = []
    if status == MAX_EVENTS and t <= cfg.t_burn:
        flags.append("max_events reached before t_burn: suspected explosive chain; partial result")
    elif status == MAX_EVENTS:
        flags.append(f"max_events reached at t={t:.6g} < t_total; partial result")
    states = np.nonzero(occ)[0]
    weights = occ[states]
    if weights.sum() > 0:
        fractions = weights / math.fsum(weights)
    else:
        fractions = weights
    s0 = cfg.x0 % wstar
    if np.any((states - s0) % wstar != 0):
        raise InternalInconsistency("trajectory left the residue class of x0")
    return SsaResult(states, fractions, t, int(events), REASONS[status], cfg, flags)


def ssa_many(ts: TransitionSystem, cfgs, workers: int | None = None) -> list:
    """Independent trajectories on a thread pool (the compiled loop releases the GIL)."""
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: ssa_occupancy(ts, c), cfgs))


def tv_distance(p, q) -> float:
    """Total-variation distance of two non-negative vectors (zero-padded to equal length)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = max(p.size, q.size)
    p = np.pad(p, (0, n - p.size))
    q = np.pad(q, (0, n - q.size))
    return 0.5 * float(np.abs(p / p.sum() - q / q.sum()).sum())


def fsp_distribution(ts: TransitionSystem, x_min: int, n_states: int, wstar: int = 1) -> np.ndarray:
    """Finite state projection on ``x_min, x_min + wstar, ...`` (``n_states`` states).

    Jumps leaving the window are dropped; the null vector of the truncated
    generator is returned normalized.  Used as an independent reference.
    """
    backend = NumericBackend("binary64")
    xs = [x_min + wstar * k for k in range(n_states)]
    Q = np.zeros((n_states, n_states))
    for a, x in enumerate(xs):
        for w in ts.omega:
            r = to_float(ts.rate(w, x, backend))
            y = x + w
            if r == 0 or y < x_min or (y - x_min) % wstar or (y - x_min) // wstar >= n_states:
                continue
            b = (y - x_min) // wstar
            Q[a, b] += r
            Q[a, a] -= r
    # solve pi Q = 0 with the last balance equation replaced by sum(pi) = 1
    A = Q.T.copy()
    A[-1, :] = 1.0
    rhs = np.zeros(n_states)
    rhs[-1] = 1.0
    pi = np.linalg.solve(A, rhs)
    return pi
