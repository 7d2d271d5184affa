"""Command-line experiment runner.

Verbs:
  run        one experiment (manifest or synthetic data) -> report
  sweep      grid over alpha/beta/neighbor-count -> sweep report
  gradcheck  analytic vs finite-difference gradients on a tiny instance
  synth      generate a synthetic dataset and save it in manifest form

Exit status: 0 on success, 1 on gradcheck failure, 2 on any stage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from mvsc.dataset import (
    NORMALIZATION_SCHEMES,
    DatasetError,
    SyntheticSpec,
    generate_synthetic,
    save_manifest,
)
from mvsc.experiment import (
    ExperimentConfig,
    ReportError,
    StageError,
    emit_report,
    gradcheck,
    run_experiment,
    sweep,
)
from mvsc.graph import DegenerateBandwidthError, GraphError
from mvsc.metrics import METRIC_NAMES, MetricError
from mvsc.network import NetworkError
from mvsc.spectral import SpectralError
from mvsc.training import ConfigError, DivergenceError, TrainConfig

_USER_ERRORS = (
    StageError,
    DatasetError,
    ConfigError,
    ReportError,
    GraphError,
    DegenerateBandwidthError,
    NetworkError,
    SpectralError,
    MetricError,
    DivergenceError,
    OSError,
)


def _parse_float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _load_synth_spec(text: str) -> SyntheticSpec:
    """Accept inline JSON (starts with '{') or a path to a JSON file."""
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
    else:
        path = Path(text)
        if not path.is_file():
            raise DatasetError(f"synthetic spec file not found: {path}")
        doc = json.loads(path.read_text(encoding="utf-8"))
    return SyntheticSpec.from_dict(doc)


def _add_data_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest", help="path to a dataset manifest document")
    src.add_argument(
        "--synth-spec",
        help="synthetic dataset spec: inline JSON or a path to a JSON file",
    )


def _add_train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, help="self-expression trade-off weight")
    p.add_argument("--beta", type=float, help="graph-regularizer trade-off weight")
    p.add_argument("--k", type=int, help="mutual nearest neighbor count")
    p.add_argument("--fusion", choices=("both", "first"), help="graph fusion mode")
    p.add_argument(
        "--layers",
        help="comma-separated encoder widths ending at the latent width; "
        "the decoder mirrors the encoder (e.g. 128,64,32 gives 6 layers)",
    )
    p.add_argument("--epochs", type=int, help="joint training epochs")
    p.add_argument("--pretrain-epochs", type=int, help="reconstruction-only epochs")
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--normalize", choices=NORMALIZATION_SCHEMES, help="per-view scheme")


def _train_config(args: argparse.Namespace) -> TrainConfig:
    kwargs = {}
    for flag, field_name in (
        ("alpha", "alpha"),
        ("beta", "beta"),
        ("k", "n_neighbors"),
        ("fusion", "fusion"),
        ("epochs", "epochs"),
        ("pretrain_epochs", "pretrain_epochs"),
        ("lr", "learning_rate"),
        ("seed", "seed"),
        ("normalize", "normalize"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            kwargs[field_name] = value
    if getattr(args, "layers", None):
        kwargs["encoder_widths"] = tuple(_parse_int_list(args.layers))
    return TrainConfig(**kwargs)


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    synthetic = _load_synth_spec(args.synth_spec) if args.synth_spec else None
    return ExperimentConfig(
        manifest=args.manifest,
        synthetic=synthetic,
        train=_train_config(args),
        clusters=args.clusters,
        repeats=args.repeats,
        retrain_per_repeat=args.retrain_per_repeat,
        restarts=args.restarts,
        out=args.out,
        fmt=args.format,
    )


def _print_summary(report) -> None:
    if report.summary is None:
        print(f"{report.config.repeats} repeat(s), no ground-truth labels to score")
    else:
        for name in METRIC_NAMES:
            cell = report.summary[name]
            print(f"{name:>10}: {cell['mean']:.4f}({cell['std']:.4f})")
    if report.loss_histories and report.loss_histories[0]["total"]:
        totals = report.loss_histories[0]["total"]
        print(f"{'loss':>10}: {totals[0]:.6g} -> {totals[-1]:.6g} over {len(totals)} epochs")


def cmd_run(args: argparse.Namespace) -> int:
    report = run_experiment(_experiment_config(args))
    _print_summary(report)
    if args.out:
        print(f"report written to {args.out}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    doc = sweep(
        config,
        alphas=_parse_float_list(args.alphas),
        betas=_parse_float_list(args.betas),
        ks=_parse_int_list(args.ks),
    )
    emit_report(doc, args.out, "structured")
    failed = [c for c in doc["cells"] if "error" in c]
    print(f"sweep: {len(doc['cells'])} cells, {len(failed)} failed; written to {args.out}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    report = gradcheck(
        n=args.n,
        view_dims=tuple(_parse_int_list(args.view_dims)),
        alpha=args.alpha if args.alpha is not None else 0.1,
        beta=args.beta if args.beta is not None else 100.0,
        seed=args.seed if args.seed is not None else 0,
        step=args.step,
        tolerance=args.tolerance,
        corrupt_group=args.corrupt_group,
    )
    worst = max(report["groups"].items(), key=lambda kv: kv[1]["max_rel_err"])
    print(f"checked {len(report['groups'])} parameter groups")
    print(f"worst group {worst[0]}: max relative error {worst[1]['max_rel_err']:.3e}")
    if args.out:
        emit_report(report, args.out, "structured")
        print(f"report written to {args.out}")
    if report["passed"]:
        print(f"gradcheck PASS (tolerance {report['tolerance']:g})")
        return 0
    print(f"gradcheck FAIL: groups {', '.join(report['failed_groups'])}")
    return 1


def cmd_synth(args: argparse.Namespace) -> int:
    spec = _load_synth_spec(args.synth_spec)
    manifest = save_manifest(generate_synthetic(spec), args.out)
    print(f"synthetic dataset '{spec.name}' written; manifest at {manifest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvsc",
        description="Multi-view subspace clustering experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment end to end")
    _add_data_args(p_run)
    _add_train_args(p_run)
    p_run.add_argument("--clusters", type=int, help="cluster count (default: from labels)")
    p_run.add_argument("--repeats", type=int, default=1, help="clustering repeats")
    p_run.add_argument(
        "--retrain-per-repeat",
        action="store_true",
        help="retrain the network for every repeat instead of only reclustering",
    )
    p_run.add_argument("--restarts", type=int, default=20, help="k-means restarts")
    p_run.add_argument("--out", help="report output path")
    p_run.add_argument(
        "--format", choices=("structured", "csv-summary"), default="structured"
    )
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid over alpha/beta/neighbor count")
    _add_data_args(p_sweep)
    _add_train_args(p_sweep)
    p_sweep.add_argument("--clusters", type=int)
    p_sweep.add_argument("--repeats", type=int, default=1)
    p_sweep.add_argument("--retrain-per-repeat", action="store_true")
    p_sweep.add_argument("--restarts", type=int, default=20)
    p_sweep.add_argument("--alphas", required=True, help="comma-separated values")
    p_sweep.add_argument("--betas", required=True, help="comma-separated values")
    p_sweep.add_argument("--ks", required=True, help="comma-separated neighbor counts")
    p_sweep.add_argument("--out", required=True, help="sweep report output path")
    p_sweep.set_defaults(func=cmd_sweep, format="structured")

    p_grad = sub.add_parser("gradcheck", help="validate gradients on a tiny instance")
    p_grad.add_argument("--n", type=int, default=10, help="sample count")
    p_grad.add_argument("--view-dims", default="5,6", help="comma-separated view dims")
    p_grad.add_argument("--alpha", type=float)
    p_grad.add_argument("--beta", type=float)
    p_grad.add_argument("--seed", type=int)
    p_grad.add_argument("--step", type=float, default=1e-6)
    p_grad.add_argument("--tolerance", type=float, default=1e-5)
    p_grad.add_argument("--corrupt-group", help=argparse.SUPPRESS)  # test hook
    p_grad.add_argument("--out", help="gradcheck report output path")
    p_grad.set_defaults(func=cmd_gradcheck)

    p_synth = sub.add_parser("synth", help="generate and save a synthetic dataset")
    p_synth.add_argument(
        "--synth-spec", required=True, help="inline JSON or a path to a JSON file"
    )
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
