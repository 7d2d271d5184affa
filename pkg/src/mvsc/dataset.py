"""Multi-view dataset loading, validation, normalization, and synthesis.

Convention used throughout the package: a view is a ``(d_k, n)`` matrix
whose COLUMNS are samples, so all views share the same column count ``n``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NORMALIZATION_SCHEMES = ("none", "unit-norm-per-sample", "min-max-per-feature")


class DatasetError(ValueError):
    """Malformed manifest, matrix, or label file."""


def _as_matrix(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DatasetError(f"view must be a 2-D matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class MultiViewDataset:
    """``v`` feature matrices over the same ``n`` samples plus optional labels.

    views : tuple of (d_k, n) float64 arrays, columns are samples
    labels : optional int array of n cluster ids in [0, c), every id present
    """

    views: tuple[np.ndarray, ...]
    labels: np.ndarray | None = None
    name: str = "unnamed"

    def __post_init__(self):
        views = tuple(_as_matrix(v) for v in self.views)
        if not views:
            raise DatasetError("dataset needs at least one view")
        n = views[0].shape[1]
        if n < 2:
            raise DatasetError(f"dataset needs at least 2 samples, got {n}")
        for k, v in enumerate(views, start=1):
            if v.shape[1] != n:
                raise DatasetError(
                    f"sample-count mismatch: view {k} has {v.shape[1]} columns, view 1 has {n}"
                )
            if not np.all(np.isfinite(v)):
                i, j = np.argwhere(~np.isfinite(v))[0]
                raise DatasetError(f"non-finite entry in view {k} at row {i}, column {j}")
        object.__setattr__(self, "views", views)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.ndim != 1 or labels.shape[0] != n:
                raise DatasetError(
                    f"labels must be a length-{n} vector, got shape {labels.shape}"
                )
            if not np.issubdtype(labels.dtype, np.integer):
                if not np.all(labels == np.floor(labels)):
                    raise DatasetError("labels must be integers")
            labels = labels.astype(np.int64)
            if labels.min() < 0:
                row = int(np.argmin(labels))
                raise DatasetError(f"label id {labels[row]} at row {row} is negative")
            c = int(labels.max()) + 1
            present = np.unique(labels)
            if len(present) != c:
                missing = sorted(set(range(c)) - set(present.tolist()))
                raise DatasetError(f"label ids {missing} in [0, {c}) never appear")
            object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.views[0].shape[1]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def n_clusters(self) -> int | None:
        return None if self.labels is None else int(self.labels.max()) + 1

    def view_dims(self) -> tuple[int, ...]:
        return tuple(v.shape[0] for v in self.views)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a reproducible union-of-subspaces multi-view dataset.

    ``clusters`` disjoint ``subspace_dim``-dimensional subspaces are drawn in a
    ``latent_dim``-dimensional latent space; each view observes the latent
    points through an independent random linear map followed by a bounded
    smooth nonlinearity and additive noise.
    """

    clusters: int
    per_cluster: int
    subspace_dim: int
    latent_dim: int
    views: int
    view_dims: tuple[int, ...]
    noise: float = 0.0
    seed: int = 0
    name: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "view_dims", tuple(int(d) for d in self.view_dims))
        if self.clusters < 2:
            raise DatasetError(f"need at least 2 clusters, got {self.clusters}")
        if not (self.per_cluster >= self.subspace_dim >= 1):
            raise DatasetError(
                f"need per_cluster >= subspace_dim >= 1, got {self.per_cluster} and {self.subspace_dim}"
            )
        if self.latent_dim < self.clusters * self.subspace_dim:
            raise DatasetError(
                f"latent_dim {self.latent_dim} < clusters*subspace_dim "
                f"{self.clusters * self.subspace_dim}"
            )
        if len(self.view_dims) != self.views or any(d < 1 for d in self.view_dims):
            raise DatasetError(f"view_dims {self.view_dims} does not match views={self.views}")
        if self.noise < 0:
            raise DatasetError(f"noise scale must be >= 0, got {self.noise}")

    @property
    def n_samples(self) -> int:
        return self.clusters * self.per_cluster

    def to_dict(self) -> dict:
        return {
            "clusters": self.clusters,
            "per_cluster": self.per_cluster,
            "subspace_dim": self.subspace_dim,
            "latent_dim": self.latent_dim,
            "views": self.views,
            "view_dims": list(self.view_dims),
            "noise": self.noise,
            "seed": self.seed,
            "name": self.name,
        }

    @staticmethod
    def from_dict(doc: dict) -> "SyntheticSpec":
        try:
            return SyntheticSpec(
                clusters=int(doc["clusters"]),
                per_cluster=int(doc["per_cluster"]),
                subspace_dim=int(doc["subspace_dim"]),
                latent_dim=int(doc["latent_dim"]),
                views=int(doc["views"]),
                view_dims=tuple(int(d) for d in doc["view_dims"]),
                noise=float(doc.get("noise", 0.0)),
                seed=int(doc.get("seed", 0)),
                name=str(doc.get("name", "synthetic")),
            )
        except KeyError as exc:
            raise DatasetError(f"synthetic spec is missing field {exc}") from exc


def synthetic_latents(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    """Latent point cloud of a spec: a (latent_dim, n) matrix and its labels.

    Cluster ``j`` occupies the span of ``subspace_dim`` orthonormal directions,
    mutually orthogonal across clusters.  Within a subspace, points scatter
    around a cluster-specific central direction (a cone, like same-class
    samples in practice) at radii in [0.5, 1.5].  Deterministic in
    ``spec.seed``.
    """
    rng = np.random.default_rng(spec.seed)
    c, m, s, p = spec.clusters, spec.per_cluster, spec.subspace_dim, spec.latent_dim
    basis, _ = np.linalg.qr(rng.standard_normal((p, c * s)))
    blocks = []
    for j in range(c):
        center = rng.standard_normal(s)
        center /= np.linalg.norm(center)
        coeffs = center[:, None] + 0.5 * rng.standard_normal((s, m))
        coeffs /= np.linalg.norm(coeffs, axis=0, keepdims=True)
        coeffs *= rng.uniform(0.5, 1.5, size=m)
        blocks.append(basis[:, j * s : (j + 1) * s] @ coeffs)
    labels = np.repeat(np.arange(c), m)
    return np.concatenate(blocks, axis=1), labels


def generate_synthetic(spec: SyntheticSpec) -> MultiViewDataset:
    """Instantiate a spec: a pure function, identical output for equal specs."""
    latent, labels = synthetic_latents(spec)
    # Per-view RNG is seeded independently of the latent draw so that view
    # count does not perturb the shared latent geometry.
    rng = np.random.default_rng((spec.seed, 0xA11CE))
    views = []
    for d_k in spec.view_dims:
        mixing = rng.standard_normal((d_k, spec.latent_dim))
        if d_k >= spec.latent_dim:
            # orthonormal columns keep latent geometry intact under the map
            mixing, _ = np.linalg.qr(mixing)
        else:
            mixing /= np.sqrt(spec.latent_dim)
        clean = np.tanh(mixing @ latent)
        noise = spec.noise * rng.standard_normal(clean.shape) if spec.noise > 0 else 0.0
        views.append(clean + noise)
    return MultiViewDataset(views=tuple(views), labels=labels, name=spec.name)


def normalize_view(X: np.ndarray, scheme: str) -> np.ndarray:
    """Rescale one view; columns are samples, rows are features.

    none                  -> unchanged
    unit-norm-per-sample  -> every column scaled to Euclidean norm 1
    min-max-per-feature   -> every row affinely mapped into [0, 1]
                             (constant rows map to 0)
    """
    if scheme not in NORMALIZATION_SCHEMES:
        raise DatasetError(f"unknown normalization scheme {scheme!r}")
    X = _as_matrix(X)
    if not np.all(np.isfinite(X)):
        raise DatasetError("cannot normalize a matrix with non-finite entries")
    if scheme == "none":
        return X
    if scheme == "unit-norm-per-sample":
        norms = np.linalg.norm(X, axis=0)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise DatasetError(f"all-zero sample column {zero[0]} cannot be unit-normalized")
        return X / norms
    lo = X.min(axis=1, keepdims=True)
    hi = X.max(axis=1, keepdims=True)
    span = hi - lo
    out = np.zeros_like(X)
    live = (span > 0).ravel()
    out[live] = (X[live] - lo[live]) / span[live]
    return out


def normalize_dataset(data: MultiViewDataset, scheme: str) -> MultiViewDataset:
    if scheme == "none":
        return data
    return MultiViewDataset(
        views=tuple(normalize_view(v, scheme) for v in data.views),
        labels=data.labels,
        name=data.name,
    )


def _write_matrix(path: Path, X: np.ndarray) -> None:
    # repr() emits the shortest digit string that round-trips a float64,
    # which keeps save -> load value-exact.
    with path.open("w", encoding="utf-8") as fh:
        for row in X:
            fh.write(",".join(repr(float(x)) for x in row))
            fh.write("\n")


def _read_matrix(path: Path, rows: int, cols: int, view_no: int) -> np.ndarray:
    try:
        X = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except OSError as exc:
        raise DatasetError(f"view {view_no}: cannot read matrix file {path}: {exc}") from exc
    except ValueError as exc:
        raise DatasetError(f"view {view_no}: malformed matrix file {path}: {exc}") from exc
    if X.shape != (rows, cols):
        raise DatasetError(
            f"view {view_no}: file {path.name} has shape {X.shape}, manifest says ({rows}, {cols})"
        )
    return X


def save_manifest(data: MultiViewDataset, directory: str | Path) -> Path:
    """Write a dataset to ``directory`` and return the manifest path.

    Layout: ``manifest.json`` + one CSV per view (rows are features, columns
    are samples) + ``labels.txt`` (one integer per line) when labels exist.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    views = []
    for k, X in enumerate(data.views):
        fname = f"view_{k}.csv"
        _write_matrix(directory / fname, X)
        views.append({"path": fname, "rows": X.shape[0], "cols": X.shape[1]})
    doc = {"name": data.name, "views": views}
    if data.labels is not None:
        doc["labels_path"] = "labels.txt"
        (directory / "labels.txt").write_text(
            "".join(f"{int(y)}\n" for y in data.labels), encoding="utf-8"
        )
    manifest = directory / "manifest.json"
    manifest.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return manifest


def load_manifest(path: str | Path) -> MultiViewDataset:
    """Read a manifest document and its referenced matrix/label files."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "views" not in doc or not doc["views"]:
        raise DatasetError(f"manifest {path} must declare a non-empty 'views' list")
    base = path.parent
    views = []
    for k, entry in enumerate(doc["views"], start=1):
        try:
            fpath = base / entry["path"]
            rows, cols = int(entry["rows"]), int(entry["cols"])
        except (KeyError, TypeError) as exc:
            raise DatasetError(f"view {k}: manifest entry needs path/rows/cols: {entry}") from exc
        if not fpath.is_file():
            raise DatasetError(f"view {k}: matrix file not found: {fpath}")
        views.append(_read_matrix(fpath, rows, cols, k))
    labels = None
    if doc.get("labels_path"):
        lpath = base / doc["labels_path"]
        if not lpath.is_file():
            raise DatasetError(f"labels file not found: {lpath}")
        lines = [ln for ln in lpath.read_text(encoding="utf-8").splitlines() if ln.strip()]
        try:
            labels = np.array([int(ln) for ln in lines], dtype=np.int64)
        except ValueError as exc:
            raise DatasetError(f"labels file {lpath} has a non-integer line: {exc}") from exc
    return MultiViewDataset(views=tuple(views), labels=labels, name=str(doc.get("name", path.stem)))
