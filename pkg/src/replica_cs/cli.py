"""Command-line front end.

Every output starts with a header recording the tool version, the prior hash
and the seed.  CSV files carry it as ``#`` comment lines and JSON documents as
a ``meta`` object.  Information values are in nats and are labelled ``_nats``.

Exit codes: 0 success, 1 single-crossing check failed, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import bounds_report, boundary_bound, mi_sandwich, mmse_sandwich
from .errors import EnumerationTooLarge, TieAtMinimum
from .montecarlo import ESTIMATORS, McEstimate, _mean_se, estimate, trial_statistics
from .prior import Prior, parse_prior, prior_from_dict, prior_hash
from .replica import (
    _fold_range,
    _fp_grid,
    fixed_points,
    phase_transition,
    replica_curve,
    se_iterate,
    single_crossing_check,
)

EXIT_OK, EXIT_NOT_SINGLE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
SE_SLACK = 3.0


class ConfigError(ValueError):
    pass


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:step`` with ``stop`` included, or a single value."""
    parts = text.split(":")
    try:
        vals = [float(v) for v in parts]
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}") from exc
    if len(vals) == 1:
        start = stop = vals[0]
        step = 1.0
    elif len(vals) == 3:
        start, stop, step = vals
    else:
        raise ConfigError(f"grid must be start:stop:step, got {text!r}")
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"grid values must be finite: {text!r}")
    if start < 0 or stop < start or step <= 0:
        raise ConfigError(f"grid needs 0 <= start <= stop and step > 0: {text!r}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    # rounding keeps 0.1-type steps free of representation noise
    return np.round(start + step * np.arange(count), 12)


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"range must be lo:hi, got {text!r}") from exc
    if not 0 <= lo < hi:
        raise ConfigError(f"range needs 0 <= lo < hi: {text!r}")
    return lo, hi


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _clean(v):
    """Make a value JSON-safe: numpy scalars to Python, non-finite floats to null."""
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    return v


class Run:
    def __init__(self, args, prior: Prior):
        self.args = args
        self.prior = prior

    @property
    def meta(self) -> dict:
        return {
            "tool": "replica-cs",
            "version": __version__,
            "command": self.args.command,
            "prior": str(self.args.prior),
            "prior_hash": prior_hash(self.prior),
            "seed": self.args.seed,
        }

    def csv_text(self, columns, rows, notes=()) -> str:
        buf = io.StringIO()
        for k, v in self.meta.items():
            buf.write(f"# {k}: {v}\n")
        for note in notes:
            buf.write(f"# {note}\n")
        buf.write(",".join(columns) + "\n")
        for row in rows:
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()

    def json_text(self, body: dict) -> str:
        doc = {"schema": 1, "meta": self.meta}
        doc.update(body)
        return json.dumps(_clean(doc), indent=2) + "\n"

    def table(self, columns, rows, body_extra=None, notes=()) -> str:
        if self.args.format == "json":
            body = {"columns": list(columns), "rows": [list(r) for r in rows]}
            body.update(body_extra or {})
            return self.json_text(body)
        return self.csv_text(columns, rows, notes)


def _write(text: str, out) -> None:
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _single_crossing_warning(p: Prior) -> None:
    if _fold_range(_fp_grid(p)) is None:
        return
    rep = single_crossing_check(p)
    if not rep.is_single_crossing:
        _warn(
            f"the prior does not satisfy the single-crossing property "
            f"({len(rep.crossings)} crossings); the replica prediction is not "
            f"guaranteed to be the large-system limit"
        )


def cmd_curve(run: Run) -> int:
    p, args = run.prior, run.args
    curve = replica_curve(p, parse_grid(args.delta))
    cols = ["delta", "i_rs_nats", "m_rs", "branch_count"]
    rows = list(zip(curve.deltas, curve.i_rs, curve.m_rs, curve.branch_count))
    jumps = [
        {"delta_star": j.delta_star, "z_minus": j.z_minus, "z_plus": j.z_plus}
        for j in curve.jumps
    ]
    _write(run.table(cols, rows, {"jumps": jumps}), args.out)
    if jumps:
        sidecar = args.jumps
        if sidecar is None and args.out not in (None, "-"):
            sidecar = str(args.out) + ".jumps.json"
        if sidecar is not None:
            _write(run.json_text({"jumps": jumps}), sidecar)
        else:
            for j in jumps:
                print(f"jump at delta={j['delta_star']!r}: z {j['z_minus']!r} -> {j['z_plus']!r}",
                      file=sys.stderr)
    _single_crossing_warning(p)
    return EXIT_OK


def cmd_check(run: Run) -> int:
    rep = single_crossing_check(run.prior)
    body = {
        "is_single_crossing": rep.is_single_crossing,
        "crossings": list(rep.crossings),
        "plateaus": [
            {"delta_star": d, "z_low": z1, "z_high": z2} for d, z1, z2 in rep.plateaus
        ],
        "touches": list(rep.touches),
        "tail_verified": rep.tail_verified,
    }
    _write(run.json_text(body), run.args.out)
    return EXIT_OK if rep.is_single_crossing else EXIT_NOT_SINGLE


def cmd_transition(run: Run) -> int:
    p = run.prior
    rng = _range(run.args.range) if run.args.range else None
    d_star = phase_transition(p, rng)
    body = {"delta_star": d_star, "stable_fixed_points": []}
    if d_star is not None:
        body["stable_fixed_points"] = [
            {"z": r.z, "potential_nats": r.R} for r in fixed_points(p, d_star).stable
        ]
    _write(run.json_text(body), run.args.out)
    return EXIT_OK


def _ms_from(args) -> list[int]:
    if (args.m is None) == (args.delta is None):
        raise ConfigError("give exactly one of --m or --delta")
    if args.m is not None:
        vals = parse_grid(args.m)
        if np.any(vals != np.round(vals)):
            raise ConfigError("--m values must be integers")
        return [int(v) for v in vals]
    ms = []
    for d in parse_grid(args.delta):
        m = d * args.n
        if abs(m - round(m)) > 1e-9:
            raise ConfigError(f"delta={d!r} times n={args.n} is not an integer")
        ms.append(int(round(m)))
    return ms


BOUNDS_COLUMNS = [
    "n", "m", "delta", "mi_lower_nats", "mi_upper_nats", "mmse_lower", "mmse_upper",
    "mi_gap_nats", "mmse_gap", "boundary_bound_nats",
]


def cmd_bounds(run: Run) -> int:
    n = run.args.n
    reports = [bounds_report(run.prior, n, m) for m in _ms_from(run.args)]
    if run.args.format == "json":
        _write(run.json_text({"reports": reports}), run.args.out)
        return EXIT_OK
    rows = [
        [r["n"], r["m"], r["m"] / n, r["mi_lower"], r["mi_upper"], r["mmse_lower"],
         r["mmse_upper"], r["mi_gap"], r["mmse_gap"], r["boundary_bound"]]
        for r in reports
    ]
    note = "boundary bound uses the explicit constant 4+sqrt(2)"
    _write(run.csv_text(BOUNDS_COLUMNS, rows, [note]), run.args.out)
    return EXIT_OK


COMPARE_COLUMNS = [
    "delta", "m", "mmse_hat", "mmse_se", "mi_hat_nats", "mi_se_nats", "i_rs_nats", "m_rs",
    "mmse_lower", "mmse_upper", "mi_lower_nats", "mi_upper_nats", "boundary_bound_nats",
    "violations",
]


def compare_rows(p: Prior, n: int, ms: list[int], trials: int, seed: int, estimator: str):
    err, pvar, mi = trial_statistics(p, n, ms, trials, seed)
    per = pvar if estimator == "posterior_var_avg" else err
    deltas = np.array(ms, dtype=float) / n
    order = np.argsort(deltas)
    uniq = np.unique(deltas)
    curve = replica_curve(p, uniq)
    rs = {float(d): (float(i), float(mm)) for d, i, mm in zip(uniq, curve.i_rs, curve.m_rs)}
    rows = []
    for j in order:
        m, delta = ms[j], float(deltas[j])
        mm_hat, mm_se = (float(v) for v in _mean_se(per[:, j]))
        mi_hat, mi_se = (float(v) for v in _mean_se(mi[:, j]))
        i_rs, m_rs = rs[delta]
        mb = mmse_sandwich(p, n, m)
        ib = mi_sandwich(p, n, m)
        bb = boundary_bound(delta) if delta >= 4 else None
        slack_m = SE_SLACK * (mm_se if math.isfinite(mm_se) else 0.0)
        slack_i = SE_SLACK * (mi_se if math.isfinite(mi_se) else 0.0)
        bad = []
        if not mb.lower - slack_m <= mm_hat <= mb.upper + slack_m:
            bad.append("mmse_sandwich")
        if not ib.lower - slack_i <= mi_hat <= ib.upper + slack_i:
            bad.append("mi_sandwich")
        if bb is not None and abs(mi_hat / n - i_rs) > bb:
            bad.append("boundary")
        rows.append([delta, m, mm_hat, mm_se, mi_hat, mi_se, i_rs, m_rs, mb.lower, mb.upper,
                     ib.lower, ib.upper, bb, ";".join(bad) if bad else "none"])
    return rows


def cmd_compare(run: Run) -> int:
    a = run.args
    rows = compare_rows(run.prior, a.n, _ms_from(a), a.trials, a.seed, a.estimator)
    violations = sum(r[-1] != "none" for r in rows)
    notes = [f"n: {a.n}", f"trials: {a.trials}", f"estimator: {a.estimator}"]
    extra = {"n": a.n, "trials": a.trials, "estimator": a.estimator, "violations": violations}
    _write(run.table(COMPARE_COLUMNS, rows, extra, notes), a.out)
    if violations:
        _warn(f"{violations} row(s) violate a bound beyond {SE_SLACK:g} standard errors")
    return EXIT_OK


def cmd_se(run: Run) -> int:
    a = run.args
    res = se_iterate(run.prior, a.delta, z0=a.z0, max_iters=a.max_iters, keep_trace=True)
    if not res.converged:
        _warn(f"state evolution did not converge in {a.max_iters} iterations")
    rows = list(enumerate(res.trace))
    extra = {"delta": a.delta, "z": res.z, "iterations": res.iterations, "converged": res.converged}
    notes = [f"delta: {a.delta!r}", f"converged: {_fmt(res.converged)}"]
    _write(run.table(["iteration", "z"], rows, extra, notes), a.out)
    return EXIT_OK


def _manifest_prior(value) -> Prior:
    if isinstance(value, dict):
        return prior_from_dict(value)
    return parse_prior(value)


def cmd_estimate(run: Run) -> int:
    a = run.args
    est: McEstimate = estimate(run.prior, a.n, a.m, a.trials, a.seed, a.estimator,
                               dump_path=a.dump_trials)
    body = est.to_dict()
    body.pop("schema")
    _write(run.json_text(body), a.out)
    return EXIT_OK


COMMANDS = {
    "curve": cmd_curve,
    "check": cmd_check,
    "transition": cmd_transition,
    "bounds": cmd_bounds,
    "compare": cmd_compare,
    "se": cmd_se,
    "estimate": cmd_estimate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="replica-cs",
        description="Replica-symmetric MI/MMSE for compressed sensing, with bounds and Monte Carlo checks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, fmt=True, prior_required=True):
        sp.add_argument("--prior", required=prior_required,
                        help="preset (gaussian[:var], bpsk, fig1:<alpha>, "
                             "bernoulli-gaussian:<rho>:<var>) or a prior JSON file")
        sp.add_argument("--out", default="-", help="output file, '-' for stdout")
        sp.add_argument("--seed", type=int, default=0)
        if fmt:
            sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("curve", help="replica MI and MMSE over a delta grid")
    common(sp)
    sp.add_argument("--delta", default="0:6:0.01", help="grid start:stop:step (inclusive)")
    sp.add_argument("--jumps", default=None, help="jump sidecar path (default <out>.jumps.json)")

    sp = sub.add_parser("check", help="single-crossing check; exit 1 if it fails")
    common(sp, fmt=False)

    sp = sub.add_parser("transition", help="locate the phase transition")
    common(sp, fmt=False)
    sp.add_argument("--range", default=None, help="search range lo:hi")

    sp = sub.add_parser("bounds", help="finite-n sandwich, gap and boundary bounds")
    common(sp)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m", default=None, help="grid of measurement counts")
    sp.add_argument("--delta", default=None, help="grid of ratios; m = delta * n")

    sp = sub.add_parser("compare", help="Monte Carlo against replica predictions and bounds")
    common(sp)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m", default=None, help="grid of measurement counts")
    sp.add_argument("--delta", default=None, help="grid of ratios; m = delta * n")
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--estimator", choices=ESTIMATORS, default="posterior_var_avg")

    sp = sub.add_parser("se", help="state-evolution trace")
    common(sp)
    sp.add_argument("--delta", type=float, required=True)
    sp.add_argument("--z0", type=float, default=None)
    sp.add_argument("--max-iters", type=int, default=10_000)

    sp = sub.add_parser("estimate", help="one Monte Carlo estimate, from flags or a manifest")
    common(sp, fmt=False, prior_required=False)
    sp.add_argument("--manifest", default=None,
                    help="JSON with prior, n, m, trials, seed and optionally estimator")
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--m", type=int, default=None)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--estimator", choices=ESTIMATORS, default="posterior_var_avg")
    sp.add_argument("--dump-trials", default=None, help="write per-trial values to this CSV")
    return parser


def _resolve(args) -> Run:
    if args.command == "estimate" and args.manifest is not None:
        doc = json.loads(Path(args.manifest).read_text())
        for key in ("prior", "n", "m", "trials", "seed"):
            if key not in doc:
                raise ConfigError(f"manifest is missing {key!r}")
        prior = _manifest_prior(doc["prior"])
        args.prior = doc["prior"] if isinstance(doc["prior"], str) else f"manifest:{args.manifest}"
        args.n, args.m, args.trials, args.seed = doc["n"], doc["m"], doc["trials"], doc["seed"]
        args.estimator = doc.get("estimator", args.estimator)
        if args.estimator not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {args.estimator!r}")
        return Run(args, prior)
    if args.prior is None:
        raise ConfigError("--prior is required")
    if args.command == "estimate" and (args.n is None or args.m is None):
        raise ConfigError("estimate needs --n and --m, or --manifest")
    if getattr(args, "trials", 1) < 1:
        raise ConfigError("--trials must be at least 1")
    if getattr(args, "n", 1) is not None and getattr(args, "n", 1) < 1:
        raise ConfigError("--n must be at least 1")
    if not 0 <= args.seed < 2**64:
        raise ConfigError("--seed must be a 64-bit unsigned integer")
    return Run(args, parse_prior(args.prior))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = _resolve(args)
        return COMMANDS[args.command](run)
    except (EnumerationTooLarge, TieAtMinimum, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
