"""Experiment orchestration: end-to-end runs, sweeps, gradient checks, reports.

A run loads or generates a dataset, trains, clusters the learned
coefficients, evaluates against ground truth when available, and emits a
machine-readable report.  Every stage failure is re-raised tagged with the
stage name, and report files are written atomically so a failed run never
leaves a partial document behind.

Report documents are deterministic given the configuration except for the
``timings`` section, which holds wall-clock measurements and is therefore
excluded from the canonical byte representation used to compare reports.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import time
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np

from mvsc.dataset import MultiViewDataset, SyntheticSpec, generate_synthetic, load_manifest
from mvsc.graph import multiview_graph, laplacian
from mvsc.metrics import MetricReport, evaluate
from mvsc.network import NetworkState, init_network, plan_widths
from mvsc.spectral import cluster
from mvsc.training import (
    Gradients,
    TrainConfig,
    backward,
    finite_difference_grad,
    train,
)

SCHEMA_VERSION = 1
REPORT_FORMATS = ("structured", "csv-summary")
METRIC_NAMES = ("nmi", "acc", "f_measure", "rand_index")


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class ReportError(ValueError):
    """Malformed report request (format, path, or config)."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a data source, training settings, and repeat policy.

    Exactly one of ``manifest``/``synthetic`` must be set.  Repeats rerun
    only the spectral/k-means stage with fresh seeds by default; set
    ``retrain_per_repeat`` to retrain the network each time.
    """

    manifest: str | None = None
    synthetic: SyntheticSpec | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    clusters: int | None = None
    repeats: int = 1
    retrain_per_repeat: bool = False
    restarts: int = 20
    out: str | None = None
    fmt: str = "structured"

    def __post_init__(self):
        if (self.manifest is None) == (self.synthetic is None):
            raise ReportError("exactly one of manifest/synthetic must be given")
        if self.repeats < 1:
            raise ReportError(f"repeats must be >= 1, got {self.repeats}")
        if self.restarts < 1:
            raise ReportError(f"restarts must be >= 1, got {self.restarts}")
        if self.fmt not in REPORT_FORMATS:
            raise ReportError(f"format must be one of {REPORT_FORMATS}, got {self.fmt!r}")

    def to_dict(self) -> dict:
        source = (
            {"manifest": self.manifest}
            if self.manifest is not None
            else {"synthetic": self.synthetic.to_dict()}
        )
        return {
            "source": source,
            "train": self.train.to_dict(),
            "clusters": self.clusters,
            "repeats": self.repeats,
            "retrain_per_repeat": self.retrain_per_repeat,
            "restarts": self.restarts,
        }


@dataclass(frozen=True)
class RepeatResult:
    index: int
    train_seed: int
    clustering_seed: tuple[int, int]
    labels: np.ndarray
    metrics: MetricReport | None

    def to_dict(self) -> dict:
        return {
            "repeat": self.index,
            "train_seed": self.train_seed,
            "clustering_seed": list(self.clustering_seed),
            "labels": [int(y) for y in self.labels],
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
        }


@dataclass(frozen=True)
class ClusteringReport:
    """Everything one experiment produced, serializable to one document."""

    config: ExperimentConfig
    clusters: int
    repeats: tuple[RepeatResult, ...]
    summary: dict | None
    loss_histories: tuple[dict, ...]
    graph_diagnostics: dict
    timings: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "clustering-report",
            "config": self.config.to_dict(),
            "clusters": self.clusters,
            "repeats": [r.to_dict() for r in self.repeats],
            "summary": self.summary,
            "loss_histories": list(self.loss_histories),
            "graph_diagnostics": self.graph_diagnostics,
            "timings": self.timings,
        }


def summarize_metrics(reports: list[MetricReport]) -> dict:
    """Per-metric mean and population standard deviation over repeats."""
    out = {}
    for name in METRIC_NAMES:
        values = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        out[name] = {"mean": float(values.mean()), "std": float(values.std())}
    return out


def _resolve_clusters(config: ExperimentConfig, data: MultiViewDataset) -> int:
    if config.clusters is not None:
        if config.clusters < 2:
            raise ReportError(f"cluster count must be >= 2, got {config.clusters}")
        return config.clusters
    if data.n_clusters is not None:
        return data.n_clusters
    raise ReportError("cluster count not given and dataset has no labels to infer it from")


def run_experiment(config: ExperimentConfig) -> ClusteringReport:
    """Load -> train -> cluster -> evaluate -> (optionally) write the report."""
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    try:
        if config.manifest is not None:
            data = load_manifest(config.manifest)
        else:
            data = generate_synthetic(config.synthetic)
        n_clusters = _resolve_clusters(config, data)
    except Exception as exc:
        raise StageError("load", exc) from exc
    timings["load"] = time.perf_counter() - t0

    train_seeds = (
        [config.train.seed + i for i in range(config.repeats)]
        if config.retrain_per_repeat
        else [config.train.seed]
    )
    t0 = time.perf_counter()
    try:
        results = [train(replace(config.train, seed=s), data) for s in train_seeds]
    except Exception as exc:
        raise StageError("train", exc) from exc
    timings["train"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        repeats = []
        for i in range(config.repeats):
            result = results[i if config.retrain_per_repeat else 0]
            cseed = (config.train.seed, i)
            assignment = cluster(
                result.state.coeffs, n_clusters, restarts=config.restarts, seed=cseed
            )
            repeats.append(
                RepeatResult(
                    index=i,
                    train_seed=train_seeds[i if config.retrain_per_repeat else 0],
                    clustering_seed=cseed,
                    labels=assignment.labels,
                    metrics=None,
                )
            )
    except Exception as exc:
        raise StageError("cluster", exc) from exc
    timings["cluster"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        if data.labels is not None:
            repeats = [
                replace(r, metrics=evaluate(r.labels, data.labels)) for r in repeats
            ]
            summary = summarize_metrics([r.metrics for r in repeats])
        else:
            summary = None
    except Exception as exc:
        raise StageError("evaluate", exc) from exc
    timings["evaluate"] = time.perf_counter() - t0

    report = ClusteringReport(
        config=config,
        clusters=n_clusters,
        repeats=tuple(repeats),
        summary=summary,
        loss_histories=tuple(r.history.to_dict() for r in results),
        graph_diagnostics=results[0].graph_diagnostics.to_dict(),
        timings=timings,
    )
    if config.out is not None:
        t0 = time.perf_counter()
        try:
            emit_report(report, config.out, config.fmt)
        except Exception as exc:
            raise StageError("report", exc) from exc
        timings["report"] = time.perf_counter() - t0
    return report


def _atomic_write(path: Path, payload: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_summary(report: ClusteringReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["repeat"] + list(METRIC_NAMES))
    for r in report.repeats:
        if r.metrics is None:
            writer.writerow([r.index] + [""] * len(METRIC_NAMES))
        else:
            writer.writerow([r.index] + [repr(getattr(r.metrics, m)) for m in METRIC_NAMES])
    if report.summary is not None:
        writer.writerow(
            ["mean(std)"]
            + [
                f"{report.summary[m]['mean']:.4f}({report.summary[m]['std']:.4f})"
                for m in METRIC_NAMES
            ]
        )
    else:
        writer.writerow(["mean(std)"] + [""] * len(METRIC_NAMES))
    return buf.getvalue()


def emit_report(report: ClusteringReport | dict, path: str | Path, fmt: str = "structured") -> Path:
    """Write a report document atomically; returns the written path."""
    if fmt not in REPORT_FORMATS:
        raise ReportError(f"format must be one of {REPORT_FORMATS}, got {fmt!r}")
    path = Path(path)
    doc = report.to_dict() if isinstance(report, ClusteringReport) else report
    if fmt == "structured":
        _atomic_write(path, json.dumps(doc, indent=2) + "\n")
    else:
        if not isinstance(report, ClusteringReport):
            raise ReportError("csv-summary output needs a ClusteringReport")
        _atomic_write(path, _csv_summary(report))
    return path


def read_report(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def canonical_report_bytes(doc: dict, include_timings: bool = False) -> bytes:
    """Deterministic byte form of a report document.

    Timings are wall-clock measurements and vary run to run, so they are
    dropped unless explicitly requested.
    """
    doc = dict(doc)
    if not include_timings:
        doc.pop("timings", None)
        if "cells" in doc:  # sweep documents nest run reports
            doc["cells"] = [
                {k: (canonical_cell(v) if k == "report" else v) for k, v in cell.items()}
                for cell in doc["cells"]
            ]
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def canonical_cell(report_doc: dict) -> dict:
    trimmed = dict(report_doc)
    trimmed.pop("timings", None)
    return trimmed


def sweep(
    config: ExperimentConfig,
    alphas: list[float],
    betas: list[float],
    ks: list[int],
) -> dict:
    """Grid of runs over trade-off weights and neighbor counts.

    Each cell embeds the full run report; failures are recorded in place and
    the sweep continues.  Mean NMI/ACC grids (indexed [alpha][beta][k]) are
    included for plotting; cells without labels or with errors hold null.
    """
    if not alphas or not betas or not ks:
        raise ReportError("sweep value sets must be nonempty")
    cells = []
    nmi_grid = [[[None] * len(ks) for _ in betas] for _ in alphas]
    acc_grid = [[[None] * len(ks) for _ in betas] for _ in alphas]
    for (ia, a), (ib, b), (ik, k) in product(
        enumerate(alphas), enumerate(betas), enumerate(ks)
    ):
        cell_config = replace(
            config,
            train=replace(config.train, alpha=a, beta=b, n_neighbors=k),
            out=None,
        )
        cell: dict = {"alpha": a, "beta": b, "k": k}
        try:
            report = run_experiment(cell_config)
            cell["report"] = report.to_dict()
            if report.summary is not None:
                nmi_grid[ia][ib][ik] = report.summary["nmi"]["mean"]
                acc_grid[ia][ib][ik] = report.summary["acc"]["mean"]
        except StageError as exc:
            cell["error"] = str(exc)
        cells.append(cell)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "sweep-report",
        "config": config.to_dict(),
        "alphas": list(alphas),
        "betas": list(betas),
        "ks": list(ks),
        "cells": cells,
        "grids": {"nmi": nmi_grid, "acc": acc_grid},
    }


def gradient_agreement(
    analytic: Gradients, numeric: Gradients, tiny: float = 1e-8
) -> dict[str, dict[str, float]]:
    """Per-parameter-group disagreement between two gradient structures.

    For entries where either magnitude reaches ``tiny`` the error is
    relative to the larger magnitude; smaller entries are compared
    absolutely (reported separately).
    """
    groups: dict[str, dict[str, float]] = {}

    def compare(name: str, a: np.ndarray, b: np.ndarray) -> None:
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        diff = np.abs(a - b)
        denom = np.maximum(np.abs(a), np.abs(b))
        big = denom >= tiny
        max_rel = float((diff[big] / denom[big]).max()) if big.any() else 0.0
        max_abs = float(diff[~big].max()) if (~big).any() else 0.0
        groups[name] = {"max_rel_err": max_rel, "max_abs_err_tiny": max_abs}

    for k, (va, vb) in enumerate(zip(analytic.layers, numeric.layers), start=1):
        for m, (la, lb) in enumerate(zip(va, vb), start=1):
            compare(f"view{k}/layer{m}/weight", la.weight, lb.weight)
            compare(f"view{k}/layer{m}/bias", la.bias, lb.bias)
    compare("coeffs", analytic.coeffs, numeric.coeffs)
    return groups


def gradcheck(
    n: int = 10,
    view_dims: tuple[int, ...] = (5, 6),
    encoder_widths: tuple[int, ...] = (4, 3, 2),
    alpha: float = 0.1,
    beta: float = 100.0,
    n_neighbors: int = 3,
    seed: int = 0,
    step: float = 1e-6,
    tolerance: float = 1e-5,
    tiny: float = 1e-8,
    corrupt_group: str | None = None,
) -> dict:
    """Compare analytic gradients against central finite differences.

    Builds a random tiny instance end to end (random views, real fused
    graph, random coefficients), runs both gradient routes, and reports the
    worst disagreement per parameter group.  ``corrupt_group`` is a test
    hook that perturbs one analytic group to demonstrate failure reporting.
    """
    rng = np.random.default_rng(seed)
    views = tuple(rng.standard_normal((d, n)) for d in view_dims)
    data = MultiViewDataset(views=views, name="gradcheck")
    fused, _ = multiview_graph(data.views, n_neighbors)
    lap = laplacian(fused)
    widths = [plan_widths(d, encoder_widths) for d in view_dims]
    state = init_network(widths, n, seed=(seed, 1))
    state = NetworkState(
        layers=state.layers, coeffs=rng.uniform(-0.05, 0.05, size=(n, n))
    )
    from mvsc.network import forward

    cache = forward(state, data)
    analytic = backward(state, data, lap, alpha, beta, cache)
    if corrupt_group is not None:
        analytic = _corrupt(analytic, corrupt_group)
    numeric = finite_difference_grad(state, data, lap, alpha, beta, step=step)
    groups = gradient_agreement(analytic, numeric, tiny=tiny)
    failed = sorted(
        name
        for name, errs in groups.items()
        if errs["max_rel_err"] > tolerance or errs["max_abs_err_tiny"] > tiny
    )
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "gradcheck-report",
        "n": n,
        "view_dims": list(view_dims),
        "encoder_widths": list(encoder_widths),
        "alpha": alpha,
        "beta": beta,
        "seed": seed,
        "step": step,
        "tolerance": tolerance,
        "groups": groups,
        "failed_groups": failed,
        "passed": not failed,
    }


def _corrupt(grads: Gradients, group: str) -> Gradients:
    """Test hook: shift one parameter group's gradient by a constant."""
    from mvsc.network import LayerParams

    if group == "coeffs":
        return Gradients(layers=grads.layers, coeffs=grads.coeffs + 1e-3)
    views = []
    hit = False
    for k, view in enumerate(grads.layers, start=1):
        layers = []
        for m, lp in enumerate(view, start=1):
            if group == f"view{k}/layer{m}/weight":
                lp = LayerParams(weight=lp.weight + 1e-3, bias=lp.bias)
                hit = True
            elif group == f"view{k}/layer{m}/bias":
                lp = LayerParams(weight=lp.weight, bias=lp.bias + 1e-3)
                hit = True
            layers.append(lp)
        views.append(tuple(layers))
    if not hit:
        raise ReportError(f"unknown gradient group {group!r}")
    return Gradients(layers=tuple(views), coeffs=grads.coeffs)
