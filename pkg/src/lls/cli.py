"""Command line driver: ``lls simulate|estimate|evaluate|rank-scan|check-id``.

Exit codes: 0 success, 2 input error, 3 model-condition error (for example a
dimension above the identifiability bound). Flags override config values.
Every command writes ``manifest.json`` last; it is the only output carrying
wall-clock timings, all other files are byte-identical across re-runs.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from ._io import dumps, fmt, sha256_file, write_json, write_text
from .exceptions import LLSError, PreconditionError, SchemaMismatchError
from .ingest import FrequencyTable, ParseError, read_csv, write_csv
from .mixing import histogram, mixing_from_full_patterns, wasserstein1_1d
from .moment_matrix import build_moment_matrix, computational_rank, rank_profile
from .patterns import Schema, iter_patterns
from .simulator import GeneratorConfig, mixing_from_json, sample
from .solver import MomentSolver, full_pattern_expectations, moment_orders
from .subspace import Subspace, check_identifiability, fit_subspace, principal_angles

EXIT_OK, EXIT_INPUT, EXIT_MODEL = 0, 2, 3


class InputError(Exception):
    pass


class ModelError(Exception):
    pass


class Run:
    """Collects inputs, outputs and timings for the manifest."""

    def __init__(self, command, out_dir, args):
        self.command = command
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs, self.outputs, self.timings = [], [], {}
        self.seed = None
        self.config_hash = None
        self.args = {k: v for k, v in vars(args).items() if k != "func"}
        self._t = time.perf_counter()

    def tick(self, label):
        now = time.perf_counter()
        self.timings[label] = round(now - self._t, 6)
        self._t = now

    def add_input(self, path):
        self.inputs.append({"path": str(path), "sha256": sha256_file(path)})

    def path(self, name):
        p = self.out / name
        self.outputs.append(p)
        return p

    def finish(self):
        manifest = {
            "command": self.command,
            "tool_version": __version__,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "arguments": {k: (str(v) if v is not None else None) for k, v in self.args.items()},
            "inputs": self.inputs,
            "outputs": [{"path": p.name, "sha256": sha256_file(p)} for p in self.outputs],
            "timings_seconds": self.timings,
        }
        write_text(self.out / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _load_schema(path) -> Schema:
    obj = _load_json(path)
    try:
        return Schema.from_json(obj) if isinstance(obj, dict) else Schema(tuple(obj))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad schema in {path}: {exc}") from exc


def _load_data(path, schema):
    try:
        return read_csv(path, schema)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


# -- simulate ------------------------------------------------------------------------

def cmd_simulate(args):
    cfg_obj = _load_json(args.config)
    run = Run("simulate", args.out, args)
    run.add_input(args.config)
    run.config_hash = hashlib.sha256(Path(args.config).read_bytes()).hexdigest()
    try:
        cfg = GeneratorConfig.from_json(cfg_obj, seed=args.seed, n=args.n)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid config: {exc}") from exc
    run.seed = cfg.seed
    ds, g = sample(cfg)
    run.tick("sample")
    write_csv(ds, run.path("dataset.csv"))
    _write_rows(run.path("latent.csv"), ["index"] + [f"g{k + 1}" for k in range(cfg.basis.K)],
                ([str(i)] + [fmt(x) for x in row] for i, row in enumerate(g)))
    truth = cfg.basis.to_json()
    truth.pop("diagnostics", None)
    truth["mixing"] = cfg.mixing.to_json()
    write_json(run.path("truth_basis.json"), truth)
    write_json(run.path("schema.json"), cfg.schema.to_json())
    run.tick("write")
    run.finish()
    print(f"simulated N={cfg.n} individuals, J={cfg.schema.n_questions}, K={cfg.basis.K} -> {run.out}")
    return EXIT_OK


# -- estimate ------------------------------------------------------------------------

def _subspace_summary(sub: Subspace) -> dict:
    obj = sub.to_json()
    diag = dict(obj.pop("diagnostics"))
    comp = diag.pop("completion", None)
    if comp is not None:
        diag["completion"] = {k: v for k, v in comp.items() if k != "filled_entries"}
    obj["diagnostics"] = diag
    return obj


def cmd_estimate(args):
    schema = _load_schema(args.schema)
    ds = _load_data(args.data, schema)
    run = Run("estimate", args.out, args)
    run.add_input(args.data)
    run.add_input(args.schema)
    if args.k < 1:
        raise InputError("--k must be at least 1")
    verdict = check_identifiability(schema, args.k)
    if not verdict.identifiable and not args.force:
        raise ModelError(verdict.describe() + " (use --force to fit anyway)")
    table = FrequencyTable.from_dataset(ds)
    M = build_moment_matrix(table, schema, args.col_support)
    run.tick("moment_matrix")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sub = fit_subspace(M, args.k)
    run.tick("subspace")
    write_json(run.path("subspace.json"), _subspace_summary(sub))

    solver = MomentSolver(sub, table)
    moments = {}
    for p in iter_patterns(schema, max_support=1):
        key = "".join(map(str, p))
        try:
            cm = solver.solve(p, args.moment_order - 1)
            moments[key] = cm.to_json()
        except LLSError as exc:
            moments[key] = {"error": str(exc)}
    write_json(run.path("moments.json"), {
        "levels": list(schema.levels), "K": sub.K,
        "orders": [list(v) for d in range(args.moment_order + 1) for v in moment_orders(sub.K, d)],
        "patterns": moments,
    })
    run.tick("moments")

    fp = full_pattern_expectations(sub, ds, method=args.method)
    est = mixing_from_full_patterns(fp, ds.n_individuals)
    run.tick("full_patterns")
    write_text(run.path("mixing.csv"), est.to_csv())
    pts = fp.individual_points()
    _write_rows(run.path("individuals.csv"), ["index"] + [f"g{k + 1}" for k in range(sub.K)],
                ([str(i)] + [fmt(x) for x in row] for i, row in enumerate(pts)))
    axes = [0] if sub.K == 2 else list(range(sub.K))
    hists = [histogram(est, axis=a, bins=args.bins, lo=0.0, hi=1.0) for a in axes]
    csv_text = "axis,bin_lo,bin_hi,mass\n" + "".join(h.to_csv().split("\n", 1)[1] for h in hists)
    write_text(run.path("histogram.csv"), csv_text)
    write_json(run.path("histogram.json"), {"bins": args.bins, "histograms": [h.to_json() for h in hists]})
    write_text(run.path("histogram.dat"), "\n\n".join(h.to_gnuplot() for h in hists))
    run.tick("write")
    run.finish()
    print(verdict.describe())
    print(f"estimated K={sub.K} basis (nonnegative={sub.nonnegative}); "
          f"{len(est)} distinct patterns -> {run.out}")
    return EXIT_OK


# -- evaluate ------------------------------------------------------------------------

def _read_matrix_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        return np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    except ValueError as exc:
        raise InputError(f"bad number in {path}: {exc}") from exc


def cmd_evaluate(args):
    est_dir = Path(args.estimate)
    run = Run("evaluate", args.out or est_dir, args)
    est_obj = _load_json(est_dir / "subspace.json")
    truth_obj = _load_json(args.truth)
    try:
        est_sub = Subspace.from_json(est_obj)
        truth = Subspace.from_json(truth_obj)
    except (KeyError, ValueError) as exc:
        raise InputError(f"bad basis file: {exc}") from exc
    if est_sub.schema != truth.schema:
        raise SchemaMismatchError(
            f"estimate has levels of length {est_sub.schema.n_questions}, "
            f"truth has {truth.schema.n_questions}"
        )
    if est_sub.K != truth.K:
        raise SchemaMismatchError(f"estimate has K={est_sub.K}, truth has K={truth.K}")
    for p in (est_dir / "subspace.json", est_dir / "individuals.csv", args.latent, args.truth):
        run.add_input(p)
    g_est = _read_matrix_csv(est_dir / "individuals.csv")
    g_true = _read_matrix_csv(args.latent)
    if g_est.shape != g_true.shape:
        raise InputError(f"individuals {g_est.shape} and latent {g_true.shape} differ in shape")
    # express estimates in the true basis' coordinates
    mapped = truth.coordinates(est_sub.beta(g_est))
    err = np.abs(mapped - g_true)
    angles = principal_angles(est_sub, truth)
    w = np.full(len(mapped), 1.0 / len(mapped))
    report = {
        "principal_angles": angles.tolist(),
        "max_principal_angle": float(angles.max()),
        "wasserstein1": {},
        "error_quantiles": {},
    }
    true_mixing = None
    if "mixing" in truth_obj:
        true_mixing = mixing_from_json(truth_obj["mixing"])
    axes = [0] if truth.K == 2 else range(truth.K)
    for a in axes:
        name = f"g{a + 1}"
        report["wasserstein1"][name] = {
            "vs_latent_sample": wasserstein1_1d((mapped[:, a], w), (g_true[:, a], w)),
        }
        if true_mixing is not None and truth.K == 2:
            tv, tw = true_mixing.g1_distribution()
            report["wasserstein1"][name]["vs_true_mixing"] = wasserstein1_1d((mapped[:, a], w), (tv, tw))
    for q in (0.5, 0.9, 0.99, 1.0):
        report["error_quantiles"][f"q{q:g}"] = [float(np.quantile(err[:, k], q)) for k in range(truth.K)]
    write_json(run.path("report.json"), report)
    run.finish()
    print(f"max principal angle {angles.max():.4g} rad; W1 {report['wasserstein1']}")
    return EXIT_OK


# -- rank scan / identifiability ------------------------------------------------------

def _parse_k_range(text):
    try:
        if ":" in text:
            lo, hi = (int(x) for x in text.split(":"))
            ks = list(range(lo, hi + 1))
        else:
            ks = [int(x) for x in text.split(",")]
    except ValueError as exc:
        raise InputError(f"bad --k-range {text!r}") from exc
    if not ks or min(ks) < 1:
        raise InputError("--k-range values must be at least 1")
    return ks


def cmd_rank_scan(args):
    ks = _parse_k_range(args.k_range)
    schema = _load_schema(args.schema)
    ds = _load_data(args.data, schema)
    run = Run("rank-scan", args.out, args)
    run.add_input(args.data)
    run.add_input(args.schema)
    M = build_moment_matrix(FrequencyTable.from_dataset(ds), schema, args.col_support)
    scan = []
    for K in ks:
        verdict = check_identifiability(schema, K)
        print(verdict.describe())
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                sub = fit_subspace(M, K)
                entry = {"K": K, "rms_residual": sub.diagnostics["rms_residual"],
                         "objective": sub.diagnostics["objective"]}
            except LLSError as exc:
                entry = {"K": K, "error": str(exc)}
        entry["identifiability"] = verdict.to_json()
        scan.append(entry)
        run.tick(f"K={K}")
    write_json(run.path("scan.json"), {
        "scan": scan,
        "singular_value_profile": rank_profile(M).tolist(),
        "computational_rank": computational_rank(M, args.eps),
        "eps": args.eps,
    })
    run.finish()
    return EXIT_OK


def cmd_check_id(args):
    schema = _load_schema(args.schema)
    if args.k < 1:
        raise InputError("--k must be at least 1")
    verdict = check_identifiability(schema, args.k)
    print(verdict.describe())
    sys.stdout.write(dumps(verdict.to_json()))
    return EXIT_OK if verdict.identifiable else EXIT_MODEL


# -- entry point -------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="lls", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a dataset from a model config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--n", type=int, default=None, help="overrides the config N")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="fit subspace, moments and mixing")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="fit even above the identifiability bound")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--col-support", type=int, default=1)
    p.add_argument("--moment-order", type=int, default=1,
                   help="highest moment degree reported in moments.json")
    p.add_argument("--method", choices=("pooled", "mean"), default="pooled")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="compare an estimate with simulation truth")
    p.add_argument("--estimate", required=True, help="output directory of estimate")
    p.add_argument("--latent", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", default=None, help="defaults to the estimate directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rank-scan", help="masked-fit residuals over a range of K")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--k-range", default="1:4", help="lo:hi or comma list")
    p.add_argument("--out", required=True)
    p.add_argument("--col-support", type=int, default=1)
    p.add_argument("--eps", type=float, default=1e-2)
    p.set_defaults(func=cmd_rank_scan)

    p = sub.add_parser("check-id", help="evaluate the identifiability bound")
    p.add_argument("--schema", required=True)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_check_id)
    return parser


def _thread_limit():
    value = os.environ.get("LLS_THREADS")
    if not value:
        return None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=int(value))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "estimate" and (args.bins < 1 or args.moment_order < 1):
        print("error: --bins and --moment-order must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    limiter = _thread_limit()
    try:
        return args.func(args)
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (InputError, ParseError, SchemaMismatchError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except LLSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    finally:
        if limiter is not None:
            limiter.unregister()


if __name__ == "__main__":
    sys.exit(main())
