"""Multi-view subspace clustering toolkit.

Per-view autoencoders share a self-expressive coefficient matrix whose
learning is regularized by a fused local/global neighborhood graph; the
learned coefficients feed standard spectral clustering.
"""

from mvsc.dataset import (
    DatasetError,
    MultiViewDataset,
    SyntheticSpec,
    generate_synthetic,
    load_manifest,
    normalize_view,
    save_manifest,
)
from mvsc.graph import (
    DegenerateBandwidthError,
    GraphLaplacian,
    ProximityGraph,
    first_order_proximity,
    fuse_graphs,
    graph_regularizer,
    laplacian,
    second_order_proximity,
)
from mvsc.metrics import MetricReport, accuracy, average_rank, evaluate, f_measure, nmi, rand_index
from mvsc.network import NetworkState, forward, init_network, total_loss
from mvsc.spectral import ClusterAssignment, cluster
from mvsc.training import TrainConfig, TrainResult, train

__all__ = [
    "ClusterAssignment",
    "DatasetError",
    "DegenerateBandwidthError",
    "GraphLaplacian",
    "MetricReport",
    "MultiViewDataset",
    "NetworkState",
    "ProximityGraph",
    "SyntheticSpec",
    "TrainConfig",
    "TrainResult",
    "accuracy",
    "average_rank",
    "cluster",
    "evaluate",
    "f_measure",
    "first_order_proximity",
    "forward",
    "fuse_graphs",
    "generate_synthetic",
    "graph_regularizer",
    "init_network",
    "laplacian",
    "load_manifest",
    "nmi",
    "normalize_view",
    "rand_index",
    "save_manifest",
    "second_order_proximity",
    "total_loss",
    "train",
]

__version__ = "0.1.0"
