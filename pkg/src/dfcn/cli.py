"""Command-line interface.

Subcommands: ``synth`` generates a labeled block-model bundle,
``prepare`` ingests user CSV/edge-list data (or builds a heat-kernel
KNN graph), ``train`` runs the three-phase optimization and writes
checkpoint/report/CSV outputs, ``eval`` scores predicted labels or a
checkpoint against bundle ground truth, and ``sweep`` repeats train+eval
across values of one config field.

Exit codes: 0 success, 1 validation error, 2 training divergence,
3 I/O error. The environment variable DFCN_SEED overrides the config
seed for train and sweep.
"""

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bundle as bundle_mod
from . import cluster_eval, graph, trainer
from .errors import (
    BundleError,
    ContractError,
    DeterminismError,
    ParameterError,
    ShapeError,
    TrainingDivergedError,
    ValidationError,
)

log = logging.getLogger(__name__)

_ABLATIONS = {
    "no-fusion": {"fusion": False},
    "single-kl": {"supervision": "single"},
    "lw-only": {"igae_loss_mode": "lw"},
    "la-only": {"igae_loss_mode": "la"},
    "multilevel-adj": {"adj_recon": "multilevel"},
}


def _load_config(path, ablations, seed_override):
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise BundleError(f"{path}: cannot read config ({exc})") from None
    config = trainer.TrainConfig.from_dict(raw)
    for name in ablations or []:
        if name not in _ABLATIONS:
            raise ParameterError(
                f"unknown ablation {name!r}; choose from {sorted(_ABLATIONS)}"
            )
        config = replace(config, **_ABLATIONS[name])
    env_seed = os.environ.get("DFCN_SEED")
    if env_seed is not None:
        config = replace(config, seed=int(env_seed))
    if seed_override is not None:
        config = replace(config, seed=seed_override)
    return config


def _write_csv(path, header, rows, float_fmt="%.17g"):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [
                float_fmt % cell if isinstance(cell, float) else str(cell)
                for cell in row
            ]
            fh.write(",".join(cells) + "\n")


def _write_train_outputs(out_dir, bundle_path, params, report, config, elapsed):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle_mod.save_checkpoint(out, params, config)
    _write_csv(
        out / "losses.csv",
        ["phase", "iteration", "l_ae", "l_w", "l_a", "l_kl", "total"],
        report.loss_rows(),
    )
    _write_csv(
        out / "fusion_trajectory.csv",
        ["phase", "iteration", "alpha", "beta"],
        report.fusion_rows(),
    )
    np.savetxt(out / "embedding.csv", report.embedding, delimiter=",",
               fmt=bundle_mod.FLOAT_FMT)
    np.savetxt(out / "labels.csv", report.labels, fmt="%d")
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))

    bundle_root = Path(bundle_path)
    bundle_manifest = json.loads((bundle_root / "manifest.json").read_text())
    manifest = {
        "created": bundle_mod._timestamp(),
        "seed": config.seed,
        "config": config.to_dict(),
        "input_bundle": str(bundle_root),
        "input_digests": {
            name: bundle_mod._sha256(bundle_root / name)
            for name in bundle_manifest["files"]
        },
        "timings": {**report.timings, "total": elapsed},
        "outputs": [
            "checkpoint.json", "checkpoint.bin", "losses.csv",
            "fusion_trajectory.csv", "embedding.csv", "labels.csv", "report.json",
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))


def cmd_synth(args):
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    data = graph.sbm_synthesize(
        k=args.blocks,
        sizes=sizes,
        p_in=args.p_in,
        p_out=args.p_out,
        attr_dim=args.attr_dim,
        attr_sep=args.sep,
        seed=args.seed,
    )
    bundle_mod.write_bundle(args.out, data, seed=args.seed)
    print(f"wrote bundle with n={data.n}, d={data.x.shape[1]}, k={data.k} to {args.out}")


def cmd_prepare(args):
    data = bundle_mod.prepare_bundle(
        args.attrs,
        args.meta,
        args.out,
        edges_path=args.edges,
        knn=args.knn,
        heat=args.heat,
    )
    print(
        f"wrote bundle with n={data.n}, d={data.x.shape[1]}, k={data.k}, "
        f"{data.adj.nnz // 2} edges to {args.out}"
    )


def cmd_train(args):
    config = _load_config(args.config, args.ablate, args.seed)
    data = bundle_mod.read_bundle(args.bundle)
    started = time.perf_counter()
    try:
        params, report = trainer.run_training(data, config)
    except TrainingDivergedError as exc:
        if exc.report is not None:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            _write_csv(
                out / "losses.csv",
                ["phase", "iteration", "l_ae", "l_w", "l_a", "l_kl", "total"],
                exc.report.loss_rows(),
            )
            (out / "report.json").write_text(
                json.dumps(exc.report.to_dict(), indent=2)
            )
        raise
    elapsed = time.perf_counter() - started
    _write_train_outputs(args.out, args.bundle, params, report, config, elapsed)
    summary = {"out": str(args.out), "iterations": len(report.phases),
               "final_total": report.total[-1]}
    if report.metrics is not None:
        summary["metrics"] = report.metrics.to_dict()
    print(json.dumps(summary, indent=2))


def cmd_eval(args):
    data = bundle_mod.read_bundle(args.bundle)
    if data.labels is None:
        raise ValidationError(f"{args.bundle}: bundle carries no ground-truth labels")
    if args.labels is not None:
        y_pred = np.loadtxt(args.labels, dtype=np.int64, ndmin=1)
    else:
        params, config, _ = bundle_mod.load_checkpoint(args.checkpoint)
        embedding = trainer.compute_embedding(data, params, config)
        y_pred, _, _ = cluster_eval.kmeans(
            embedding, data.k, restarts=config.kmeans_restarts,
            seed=np.random.SeedSequence(config.seed).spawn(4)[3],
        )
    report = cluster_eval.evaluate(data.labels, y_pred, data.k)
    text = json.dumps(report.to_dict(), indent=2)
    if args.out is not None:
        Path(args.out).write_text(text)
    print(text)


def cmd_sweep(args):
    data = bundle_mod.read_bundle(args.bundle)
    if data.labels is None:
        raise ValidationError(
            f"{args.bundle}: sweep needs ground-truth labels for scoring"
        )
    base = _load_config(args.config, None, None)
    raw_values = [v for v in args.values.split(",") if v.strip()]
    key = "lambda_" if args.param == "lambda" else args.param
    if not hasattr(base, key):
        raise ParameterError(f"unknown config field {args.param!r}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for raw in raw_values:
        value = type(getattr(base, key))(raw)
        config = replace(base, **{key: value})
        params, report = trainer.run_training(data, config)
        run_dir = out / f"{args.param}_{raw}"
        _write_train_outputs(run_dir, args.bundle, params, report, config, 0.0)
        m = report.metrics
        rows.append((raw, m.acc, m.nmi, m.ari, m.f1))
        log.info("%s=%s -> acc=%.4f", args.param, raw, m.acc)
    _write_csv(out / "sweep.csv", [args.param, "acc", "nmi", "ari", "f1"], rows)
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dfcn",
        description="Deep fusion clustering of attributed graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a stochastic block model bundle")
    p.add_argument("--blocks", type=int, required=True, help="number of clusters")
    p.add_argument("--sizes", required=True, help="comma-separated block sizes")
    p.add_argument("--p-in", type=float, required=True, dest="p_in")
    p.add_argument("--p-out", type=float, required=True, dest="p_out")
    p.add_argument("--sep", type=float, default=8.0, help="attribute center spacing")
    p.add_argument("--attr-dim", type=int, default=16, dest="attr_dim")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="build a bundle from CSV attributes")
    p.add_argument("attrs", help="attribute matrix CSV, one row per node")
    p.add_argument("--meta", required=True, help="JSON with n, d, k, labels_file")
    p.add_argument("--edges", help="edge list, one 'u v' pair per line")
    p.add_argument("--knn", type=int, help="build a heat-kernel KNN graph instead")
    p.add_argument("--heat", default="auto",
                   help="heat-kernel bandwidth (default: mean squared distance)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="run the three training phases")
    p.add_argument("bundle")
    p.add_argument("--config", help="JSON config; keys mirror TrainConfig fields")
    p.add_argument("--ablate", action="append",
                   help=f"one of {sorted(_ABLATIONS)}; repeatable")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score labels or a checkpoint against a bundle")
    p.add_argument("bundle")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--labels", help="predicted labels CSV")
    group.add_argument("--checkpoint", help="checkpoint.json (or its directory)")
    p.add_argument("--out", help="also write the report JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train and score across one config field")
    p.add_argument("bundle")
    p.add_argument("--param", required=True, help="config field name, e.g. lambda")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--config", help="base JSON config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    logging.basicConfig(
        level=os.environ.get("DFCN_LOGLEVEL", "INFO"),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ValidationError, ParameterError, ShapeError, ContractError,
            DeterminismError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 2
    except (BundleError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
