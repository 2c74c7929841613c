"""Command-line front end: fit, simulate, eval, grid-report subcommands."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import datagen, engine, evaluation
from .exceptions import CsvFormatError, GridFailureError, InvalidParameterError, MplnError
from .model import COVARIANCE_MODELS, Component, CountMatrix, MixtureParams

SCHEMA_VERSION = 1


class _Parser(argparse.ArgumentParser):
    # Usage errors exit 1 (argparse defaults to 2, which we reserve for grid failure).
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def ingest_csv(path, has_header: bool = False) -> CountMatrix:
    """Parse a rectangular CSV of non-negative integers into a CountMatrix."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for r, record in enumerate(reader, start=1):
            if has_header and r == 1:
                continue
            if not record or (len(record) == 1 and record[0].strip() == ""):
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise CsvFormatError(
                    f"ragged row {r}: expected {width} columns, got {len(record)}", row=r
                )
            parsed = []
            for c, cell in enumerate(record, start=1):
                text = cell.strip()
                try:
                    value = int(text)
                except ValueError:
                    raise CsvFormatError(
                        f"cell ({r},{c}) is not an integer: {text!r}", row=r, column=c
                    ) from None
                if value < 0:
                    raise CsvFormatError(f"cell ({r},{c}) is negative", row=r, column=c)
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise CsvFormatError("no data rows found")
    return CountMatrix(np.array(rows, dtype=np.int64))


def _parse_g_range(text: str) -> tuple:
    if ":" in text:
        lo, hi = text.split(":", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(t) for t in text.split(","))


def _parse_models(text: str) -> tuple:
    if text == "all":
        return COVARIANCE_MODELS
    return tuple(t.strip().upper() for t in text.split(","))


def _params_to_json(params: MixtureParams) -> dict:
    return {
        "weights": params.weights.tolist(),
        "model": params.model,
        "components": [
            {"mu": c.mu.tolist(), "sigma": c.sigma.tolist()} for c in params.components
        ],
    }


def _write_labels(path, labels):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for lab in labels:
            writer.writerow([int(lab)])


def _write_counts(path, counts):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in counts:
            writer.writerow([int(v) for v in row])


def run_fit(args) -> int:
    data = ingest_csv(args.data, has_header=args.header)
    config = engine.FitConfig(
        g_values=_parse_g_range(args.g),
        models=_parse_models(args.models),
        epsilon=args.epsilon,
        max_outer=args.max_outer,
        seed=args.seed,
    )
    t0 = time.perf_counter()
    try:
        best, cells = engine.grid_search(data, config, threads=args.threads)
    except GridFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    total = time.perf_counter() - t0

    best_cell = min((c for c in cells if c.error is None), key=lambda c: c.bic)
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": {
            "data": str(args.data),
            "header": bool(args.header),
            "g_values": list(config.g_values),
            "models": list(config.models),
            "epsilon": config.epsilon,
            "max_outer": config.max_outer,
            "small_em_starts": config.small_em_starts,
            "small_em_iters": config.small_em_iters,
            "seed": config.seed,
            "threads": args.threads,
        },
        "cells": [
            {
                "G": c.G, "model": c.model, "bic": c.bic, "elbo": c.loglik,
                "iterations": c.iterations, "converged": c.converged, "error": c.error,
            }
            for c in cells
        ],
        "best": {"G": best_cell.G, "model": best_cell.model, "bic": best_cell.bic},
        "labels": [int(v) for v in best.labels],
        "params": _params_to_json(best.params),
        "timings": {"total_seconds": total},
    }
    out = Path(args.out)
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    labels_out = args.labels_out or out.with_suffix(".labels.csv")
    _write_labels(labels_out, best.labels)
    print(f"best: G={best_cell.G} model={best_cell.model} BIC={best_cell.bic:.3f}")
    return 0


def _load_param_file(path):
    spec = json.loads(Path(path).read_text())
    kind = spec.get("kind", "mpln")
    pi = np.asarray(spec["pi"], dtype=float)
    if np.any(pi <= 0) or abs(pi.sum() - 1.0) > 1e-8:
        raise InvalidParameterError("pi must be positive and sum to 1")
    n = int(spec["n"])
    return kind, spec, pi, n


def run_simulate(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.preset:
        preset = datagen.preset_params(args.preset)
        stem = preset.name
        echo = {
            "preset": preset.name, "kind": preset.kind, "n": preset.n, "d": preset.d,
            "pi": list(preset.pi), "mus": [list(m) for m in preset.mus],
            "sigmas": [[list(r) for r in s] for s in preset.sigmas],
            "means": [list(m) for m in preset.means],
            "variances": [list(v) for v in preset.variances],
            "seed": args.seed, "replicates": args.replicates,
        }
        def make(rep):
            return datagen.generate_preset(args.preset, args.seed, rep, n=args.n)
    else:
        kind, spec, pi, n = _load_param_file(args.params)
        stem = Path(args.params).stem
        echo = {**spec, "seed": args.seed, "replicates": args.replicates}
        def make(rep):
            rng = datagen.dataset_rng(args.seed, rep)
            if kind == "mpln":
                comps = tuple(
                    Component(np.array(c["mu"], float), np.array(c["sigma"], float))
                    for c in spec["components"]
                )
                params = MixtureParams(pi, comps, spec.get("model", "VVV"))
                return datagen.gen_mpln_mixture(params, n, rng)
            if kind == "nb":
                return datagen.gen_nb_mixture(spec["means"], spec["variances"], pi, n, rng)
            if kind == "poisson":
                return datagen.gen_poisson_mixture(spec["means"], pi, n, rng)
            raise InvalidParameterError(f"unknown generator kind {kind!r}")

    (out_dir / f"{stem}_params.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    for rep in range(args.replicates):
        counts, labels = make(rep)
        _write_counts(out_dir / f"{stem}_rep{rep}_counts.csv", counts.values)
        _write_labels(out_dir / f"{stem}_rep{rep}_labels.csv", labels)
    print(f"wrote {args.replicates} replicate(s) to {out_dir}")
    return 0


def _read_label_csv(path):
    out = []
    with open(path, newline="") as fh:
        for record in csv.reader(fh):
            if record and record[0].strip() != "":
                out.append(record[0].strip())
    return out


def run_eval(args) -> int:
    pred = _read_label_csv(args.pred)
    truth = _read_label_csv(args.truth)
    result = {
        "ari": evaluation.ari(pred, truth),
        "confusion": evaluation.confusion(pred, truth).tolist(),
        "n": len(pred),
    }
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def run_grid_report(args) -> int:
    report = json.loads(Path(args.report).read_text())
    writer = csv.writer(sys.stdout)
    writer.writerow(["G", "model", "bic", "elbo", "iterations", "converged", "error"])
    for cell in report["cells"]:
        writer.writerow([
            cell["G"], cell["model"], cell["bic"], cell["elbo"],
            cell["iterations"], cell["converged"], cell["error"] or "",
        ])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mplnmix", description="MPLN mixture clustering toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    default_threads = int(os.environ.get("MPLNMIX_THREADS", "1"))

    p_fit = sub.add_parser("fit", help="grid-search MPLN mixtures over (G, model)")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--header", action="store_true", help="skip the first CSV row")
    p_fit.add_argument("--g", default="1:3", help="G range a:b (inclusive) or comma list")
    p_fit.add_argument("--models", default="all", help="'all' or comma list of the 8 labels")
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--epsilon", type=float, default=0.001)
    p_fit.add_argument("--max-outer", type=int, default=500)
    p_fit.add_argument("--threads", type=int, default=default_threads)
    p_fit.add_argument("--out", required=True, help="JSON report path")
    p_fit.add_argument("--labels-out", default=None)
    p_fit.set_defaults(func=run_fit)

    p_sim = sub.add_parser("simulate", help="generate synthetic count mixtures")
    group = p_sim.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", choices=sorted(datagen.PRESETS))
    group.add_argument("--params", help="explicit generator parameter JSON")
    p_sim.add_argument("--replicates", type=int, default=1)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--n", type=int, default=None, help="override preset sample size")
    p_sim.add_argument("--out-dir", default=".")
    p_sim.set_defaults(func=run_simulate)

    p_eval = sub.add_parser("eval", help="compare two label CSVs")
    p_eval.add_argument("--pred", required=True)
    p_eval.add_argument("--truth", required=True)
    p_eval.set_defaults(func=run_eval)

    p_rep = sub.add_parser("grid-report", help="dump a report's per-cell table as CSV")
    p_rep.add_argument("--report", required=True)
    p_rep.set_defaults(func=run_grid_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except (MplnError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
