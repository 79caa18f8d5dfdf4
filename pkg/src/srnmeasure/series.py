"""Generators and measure series shared by the solver modules."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .numeric import to_float


@dataclass
class Generator:
    """Generating terms ``(v_L, ..., v_U)`` with their provenance."""

    v: list
    provenance: str
    n: int | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def norm1(self) -> float:
        return float(sum(abs(to_float(x)) for x in self.v))

    def as_float(self) -> np.ndarray:
        return np.array([to_float(x) for x in self.v], dtype=float)

    def to_json(self) -> dict:
        doc = {"v": [to_float(x) for x in self.v], "provenance": self.provenance,
               "norm1": self.norm1}
        if self.n is not None:
            doc["n"] = self.n
        if self.diagnostics:
            doc["diagnostics"] = _jsonable(self.diagnostics)
        return doc


@dataclass
class MeasureSeries:
    """Values ``pi(0..n_max)`` in translated coordinates, with provenance."""

    values: list
    method: str
    precision_mode: str
    generator: Generator | None = None
    s: int = 0
    omega_star: int = 1
    normalized: bool = False
    normalizer: float | None = None
    residual_max: float | None = None
    flux_max: float | None = None
    instability_onset: int | None = None
    onset_relative: float | None = None  # pi(onset) / sum |pi| over the assembled range
    notes: list = field(default_factory=list)

    @property
    def n_max(self) -> int:
        return len(self.values) - 1

    def states(self) -> list:
        """States of the original chain that the entries refer to."""
        return [self.omega_star * k + self.s for k in range(len(self.values))]

    def as_float(self) -> np.ndarray:
        return np.array([to_float(x) for x in self.values], dtype=float)

    def normalized_copy(self) -> np.ndarray:
        arr = self.as_float()
        return arr / arr.sum()

    def to_csv(self, header_lines=()) -> str:
        out = io.StringIO()
        for line in header_lines:
            out.write(f"# {line}\n")
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["state", "index", "value"])
        for k, (x, v) in enumerate(zip(self.states(), self.values)):
            w.writerow([x, k, repr(to_float(v))])
        return out.getvalue()

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "precision": self.precision_mode,
            "s": self.s,
            "omega_star": self.omega_star,
            "n_max": self.n_max,
            "normalized": self.normalized,
            "normalizer": self.normalizer,
            "residual_max": self.residual_max,
            "flux_max": self.flux_max,
            "instability_onset": self.instability_onset,
            "onset_state": (self.states()[self.instability_onset]
                            if self.instability_onset is not None else None),
            "onset_relative": self.onset_relative,
            "generator": self.generator.to_json() if self.generator else None,
            "notes": list(self.notes),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, int, str)) or obj is None:
        return obj
    try:
        f = to_float(obj)
    except (TypeError, ValueError):
        return str(obj)
    return f if math.isfinite(f) else None


def tail_converges(values, rel: float = 1e-14) -> tuple[bool, float]:
    """Doubling-horizon test: does the second half add less than ``rel`` of the total?

    Returns ``(converged, total)`` with ``total`` the full partial sum.
    """
    arr = [to_float(v) for v in values]
    total = math.fsum(arr)
    half = math.fsum(arr[: (len(arr) + 1) // 2])
    if not math.isfinite(total) or total <= 0:
        return False, total
    return abs(total - half) <= rel * abs(total), total


def read_measure_csv(text: str) -> tuple[list, list]:
    """Parse a ``state,...,value`` CSV (comment lines start with '#')."""
    rows = [r for r in csv.reader(line for line in text.splitlines() if line and not line.startswith("#"))]
    header, body = rows[0], rows[1:]
    si = header.index("state")
    vi = header.index("value") if "value" in header else header.index("time_fraction")
    states = [int(r[si]) for r in body]
    values = [r[vi] for r in body]
    return states, values
