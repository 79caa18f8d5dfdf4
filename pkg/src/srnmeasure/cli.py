"""Command-line front end.

Every command prints one JSON document on stdout (``simulate`` prints CSV)
and embeds a run manifest.  Exit codes: 0 ok, 2 parse error, 3 assumption
violated, 4 out of scope, 5 numerical breakdown.
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import math
import os
import platform
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from importlib import metadata
from pathlib import Path

from .chain import classify, translate
from .closed import birth_death_measure, downward_skipfree_measure, pgf_ode
from .coeff import gamma_table
from .errors import NumericalBreakdown, SrnError
from .netparse import load_network
from .numeric import NumericBackend
from .series import read_measure_csv
from .solve import (assemble_measure, linear_scheme, linear_scheme_auto, normalize_series,
                    qp_generators, residual_report)

log = logging.getLogger("srnmeasure")

SCHEMA_VERSION = 1


@dataclass
class RunManifest:
    input: str
    command: str
    parameters: dict
    backend: str | None = None
    seed: int | None = None
    versions: dict = field(default_factory=dict)
    timestamp: str = ""

    @classmethod
    def create(cls, args: argparse.Namespace, backend: str | None = None, seed: int | None = None):
        params = {k: v for k, v in vars(args).items() if k not in ("func", "file", "command")}
        return cls(str(getattr(args, "file", "")), args.command, _jsonable(params), backend, seed,
                   _versions(), _timestamp())

    def header_lines(self) -> list:
        return ["manifest: " + json.dumps(asdict(self), sort_keys=True)]

    def to_json(self) -> dict:
        return asdict(self)


def _jsonable(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "mpmath", "numba"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the timestamp for byte-reproducible outputs
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc) if epoch else dt.datetime.now(dt.timezone.utc)
    return when.isoformat(timespec="seconds")


def _emit(doc: dict, manifest: RunManifest) -> None:
    doc = _jsonable({"schema_version": SCHEMA_VERSION, "manifest": manifest.to_json(), **doc})
    json.dump(doc, sys.stdout, indent=2, allow_nan=False, default=str)
    sys.stdout.write("\n")


def _backend(args) -> NumericBackend | None:
    if getattr(args, "precision", None):
        return NumericBackend.parse(args.precision)
    return NumericBackend.from_env()


# -- commands -------------------------------------------------------------------


def cmd_classify(args) -> int:
    ts = load_network(args.file)
    cls = classify(ts)
    doc = {"classification": cls.to_json(), "omega": list(ts.omega),
           "i_omega": {str(w): ts.i_omega[w] for w in ts.omega}}
    if cls.pics:
        doc["translations"] = [{"s": s, "L": tr.L, "U": tr.U}
                               for s, tr in ((s, translate(ts, s)) for s in cls.pics)]
    _emit(doc, RunManifest.create(args))
    return 0


def _solve(ts, args, backend):
    tr = translate(ts, args.pic)
    method = args.method
    cross = None
    if method == "auto" and tr.base.omega_minus == -1:
        if set(tr.base.omega) == {-1, 1}:
            series = birth_death_measure(tr, args.nmax, backend)
        else:
            series = downward_skipfree_measure(tr, args.nmax, backend)
        return tr, series, None
    n = args.n
    table = gamma_table(tr, max(args.nmax, n or 0, tr.U), backend)
    if method == "qp":
        g = qp_generators(table, n if n is not None else min(18, table.n_max),
                          unguarded=args.qp_unguarded)
    elif method == "linear" and n is not None:
        g = linear_scheme(table, n)
    else:
        g = linear_scheme_auto(table) if n is None else linear_scheme(table, n)
        if method == "auto":
            cross = _qp_cross_check(table, g)
    series = assemble_measure(table, g, args.nmax)
    if table.flagged:
        series.notes.append(f"binary64 overflow at row {table.flagged[0]}; table rebuilt in "
                            f"{table.backend.tag}")
    return tr, series, cross


def _qp_cross_check(table, g) -> dict:
    n = min(18, table.n_max)
    try:
        q = qp_generators(table, n)
    except NumericalBreakdown as exc:
        return {"n": n, "skipped": str(exc)}
    diff = float(max(abs(a - b) for a, b in zip(q.as_float(), g.as_float())))
    return {"n": n, "generator": q.as_float().tolist(), "max_abs_difference": diff}


def cmd_solve(args) -> int:
    ts = load_network(args.file)
    backend = _backend(args)
    tr, series, cross = _solve(ts, args, backend)
    if args.normalize and not series.normalized:
        if series.normalizer is not None:
            total = series.normalizer
            series.values = [v / (Fraction(total) if isinstance(v, Fraction) else type(v)(total))
                             for v in series.values]
            series.normalized = True
        else:
            normalize_series(series)
    rep = residual_report(tr, series.values)
    series.residual_max, series.flux_max = rep.master_max, rep.flux_max
    manifest = RunManifest.create(args, series.precision_mode)
    if args.csv:
        Path(args.csv).write_text(series.to_csv(manifest.header_lines()), encoding="utf-8")
    doc = {"translation": {"s": tr.s, "L": tr.L, "U": tr.U, "omega_star": tr.omega_star},
           "measure": series.to_json(), "residuals": rep.to_json()}
    if cross is not None:
        doc["qp_cross_check"] = cross
    if args.values:
        doc["values"] = [{"state": x, "value": float(v)} for x, v in zip(series.states(), series.values)]
    _emit(doc, manifest)
    return 0


def cmd_uniqueness(args) -> int:
    from .upskip import ratio_bounds, uniqueness_test

    ts = load_network(args.file)
    tr = translate(ts, args.pic)
    rep = uniqueness_test(tr, n_terms=args.terms, depth=args.depth)
    doc = {"report": rep.to_json()}
    if args.ratio_n:
        table = gamma_table(tr, args.ratio_n, _backend(args))
        doc["ratio_bounds"] = ratio_bounds(table).to_json()
    if args.csv:
        Path(args.csv).write_text(rep.to_csv(), encoding="utf-8")
    _emit(doc, RunManifest.create(args, "mp256"))
    return 0


def cmd_simulate(args) -> int:
    from .oracle import SsaConfig, ssa_occupancy

    ts = load_network(args.file)
    cfg = SsaConfig(args.x0, args.t, args.burn, args.seed, args.max_events)
    res = ssa_occupancy(ts, cfg)
    manifest = RunManifest.create(args, "binary64", args.seed)
    text = res.to_csv(manifest.header_lines() + ["summary: " + json.dumps(res.to_json())])
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        _emit({"simulation": res.to_json(), "output": args.out}, manifest)
    else:
        sys.stdout.write(text)
    for flag in res.flags:
        log.warning(flag)
    return 0


def _exact_value(text: str) -> Fraction:
    # decimal literals in measure files are binary64 reprs; take the double they denote
    text = text.strip()
    if "/" in text or text.lstrip("+-").isdigit():
        return Fraction(text)
    return Fraction(float(text))


def _dense_values(states, raw, s, wstar, exact):
    conv = _exact_value if exact else float
    bad = [x for x in states if x < s or (x - s) % wstar]
    if bad:
        raise ValueError(f"states {bad[:5]} are outside the class s={s}, step {wstar}")
    top = max((x - s) // wstar for x in states)
    dense = [conv("0")] * (top + 1)
    for x, v in zip(states, raw):
        dense[(x - s) // wstar] = conv(v)
    return dense


def cmd_verify(args) -> int:
    ts = load_network(args.file)
    cls = classify(ts)
    states, raw = read_measure_csv(Path(args.measure).read_text(encoding="utf-8"))
    if not states:
        raise ValueError("measure file has no rows")
    s = args.pic
    if s is None:
        s = next((p for p in cls.pics if (min(states) - p) % cls.omega_star == 0), None)
    tr = translate(ts, s)
    values = _dense_values(states, raw, tr.s, tr.omega_star, ts.exact_capable)
    rep = residual_report(tr, values)
    doc = {"translation": {"s": tr.s, "L": tr.L, "U": tr.U}, "residuals": rep.to_json(),
           "n_values": len(values)}
    _emit(doc, RunManifest.create(args, "exact" if rep.exact else "binary64"))
    return 0


def cmd_ode(args) -> int:
    ts = load_network(args.file)
    ode = pgf_ode(ts, args.pic)
    _emit({"ode": ode.to_json()}, RunManifest.create(args, "exact"))
    return 0


def cmd_report(args) -> int:
    from .plotting import write_figure
    from .report import ReportOptions, build_report

    ts = load_network(args.file)
    backend = _backend(args) or NumericBackend("binary64")
    opts = ReportOptions(args.n_small, args.n_qp, args.n_large, tuple(args.phi), backend,
                         args.qp_unguarded)
    rep = build_report(ts, opts, args.pic)
    manifest = RunManifest.create(args, rep.summary["backend"])
    files = []
    for fig in rep.figures:
        files += [str(p) for p in write_figure(fig, args.out, manifest.header_lines(), args.plot)]
    out = Path(args.out)
    summary = {"summary": rep.summary, "files": files}
    (out / "summary.json").write_text(
        json.dumps(_jsonable({"schema_version": SCHEMA_VERSION, "manifest": manifest.to_json(),
                              **summary}), indent=2, default=str), encoding="utf-8")
    _emit(summary, manifest)
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="srnmeasure",
                                description="Stationary measures of one-species reaction networks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, func, help_text, file_help="network file"):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("file", help=file_help)
        sp.set_defaults(func=func)
        return sp

    def add_pic(sp):
        sp.add_argument("--pic", type=int, default=None, metavar="S",
                        help="minimum state of the positive irreducible class (default: first)")

    def add_precision(sp):
        sp.add_argument("--precision", default=None,
                        help="binary64 | mp[:bits] | exact (default: SRN_PRECISION or per network)")

    command("classify", cmd_classify, "state-space classification")

    sp = command("solve", cmd_solve, "stationary measure by an approximation scheme or closed form")
    sp.add_argument("--method", choices=("linear", "qp", "auto"), default="auto")
    sp.add_argument("--n", type=int, default=None, help="truncation level of the scheme")
    sp.add_argument("--nmax", type=int, default=50, help="largest translated state to assemble")
    sp.add_argument("--normalize", action="store_true", help="rescale to a probability distribution")
    sp.add_argument("--qp-unguarded", action="store_true",
                    help="run the convex scheme even when the coefficients are too large")
    sp.add_argument("--csv", default=None, metavar="PATH", help="write the measure as CSV")
    sp.add_argument("--values", action="store_true", help="include the values in the JSON")
    add_pic(sp)
    add_precision(sp)

    sp = command("uniqueness", cmd_uniqueness, "uniqueness test for upwardly skip-free chains")
    sp.add_argument("--terms", type=int, default=40000, help="terms of the series H(x)")
    sp.add_argument("--depth", type=int, default=700, help="continued-fraction depth")
    sp.add_argument("--ratio-n", type=int, default=0, help="also report ratio bounds up to this n")
    sp.add_argument("--csv", default=None, metavar="PATH", help="write partial sums as CSV")
    add_pic(sp)
    add_precision(sp)

    sp = command("simulate", cmd_simulate, "Gillespie occupancy measure")
    sp.add_argument("--x0", type=int, required=True)
    sp.add_argument("--t", type=float, required=True, help="total simulated time")
    sp.add_argument("--burn", type=float, default=0.0, help="burn-in time excluded from occupancy")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-events", type=int, default=10**11)
    sp.add_argument("--out", default=None, metavar="PATH", help="write CSV here, JSON summary to stdout")

    sp = command("verify", cmd_verify, "master-equation residuals of a measure CSV")
    sp.add_argument("measure", help="CSV with a state column and a value or time_fraction column")
    add_pic(sp)

    sp = command("ode", cmd_ode, "generating-function ODE of a mass-action network")
    add_pic(sp)

    sp = command("report", cmd_report, "figure data (CSV + gnuplot, optional PNG)")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--plot", action="store_true", help="also render PNG figures with matplotlib")
    sp.add_argument("--n-small", type=int, default=25)
    sp.add_argument("--n-qp", type=int, default=18)
    sp.add_argument("--n-large", type=int, default=70)
    sp.add_argument("--phi", type=float, action="append", default=[],
                    help="phi* value for the measure family (repeatable; skip-free chains only)")
    sp.add_argument("--qp-unguarded", action="store_true")
    add_pic(sp)
    add_precision(sp)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SrnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
