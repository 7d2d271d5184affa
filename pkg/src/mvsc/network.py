"""Per-view autoencoders sharing one self-expressive coefficient matrix.

Each view gets an M-layer network (M even) that squeezes its ``d_k``
features down to a latent code at layer M/2 and reconstructs them at layer
M.  All hidden layers use tanh; the final decoder layer is linear so
reconstructions can reach any feature range.  One n-by-n coefficient
matrix is shared across views: it rewrites every latent code as a linear
combination of all samples' codes, and doubles as the cluster affinity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mvsc.dataset import MultiViewDataset
from mvsc.graph import GraphLaplacian, graph_regularizer


class NetworkError(ValueError):
    """Invalid layer plan, parameter shapes, or a non-finite forward pass."""


def activation(y: np.ndarray) -> np.ndarray:
    return np.tanh(y)


def activation_deriv(f: np.ndarray) -> np.ndarray:
    """tanh' expressed through the activation output: 1 - tanh(y)^2."""
    return 1.0 - f * f


@dataclass(frozen=True)
class LayerParams:
    """One affine layer: weight (out_dim, in_dim) and bias (out_dim,)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if W.ndim != 2 or b.ndim != 1 or b.shape[0] != W.shape[0]:
            raise NetworkError(f"bad layer shapes: weight {W.shape}, bias {b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise NetworkError("layer parameters must be finite")
        object.__setattr__(self, "weight", W)
        object.__setattr__(self, "bias", b)


def validate_widths(widths: tuple[int, ...]) -> tuple[int, ...]:
    """Check one view's width chain [d_k, w_1, ..., w_M]; returns it.

    M = len(widths) - 1 must be even and >= 2, every width positive, and the
    chain must end where it starts (the decoder reconstructs the input
    dimension).  The latent code lives at layer M/2.
    """
    widths = tuple(int(w) for w in widths)
    M = len(widths) - 1
    if M < 2 or M % 2 != 0:
        raise NetworkError(f"layer count must be even and >= 2, got {M} (widths {widths})")
    if any(w < 1 for w in widths):
        raise NetworkError(f"all widths must be >= 1, got {widths}")
    if widths[0] != widths[-1]:
        raise NetworkError(
            f"autoencoder must reconstruct its input width: {widths[0]} != {widths[-1]}"
        )
    return widths


def plan_widths(d_k: int, encoder_widths: tuple[int, ...] | None = None) -> tuple[int, ...]:
    """Full width chain for one view; decoder mirrors the encoder.

    With ``encoder_widths=None`` the default six-layer plan is used:
    latent min(d_k, 32), first hidden max(latent, min(d_k, 128)), middle
    hidden max(latent, min(d_k, 64)).
    """
    if encoder_widths is None:
        latent = min(d_k, 32)
        hidden = max(latent, min(d_k, 128))
        middle = max(latent, min(d_k, 64))
        encoder_widths = (hidden, middle, latent)
    enc = tuple(int(w) for w in encoder_widths)
    return validate_widths((d_k,) + enc + tuple(reversed(enc[:-1])) + (d_k,))


@dataclass(frozen=True)
class NetworkState:
    """All trainable parameters: per-view layer lists plus shared coeffs."""

    layers: tuple[tuple[LayerParams, ...], ...]
    coeffs: np.ndarray

    def __post_init__(self):
        if not self.layers:
            raise NetworkError("need at least one view")
        layers = tuple(tuple(view) for view in self.layers)
        for k, view in enumerate(layers, start=1):
            validate_widths(self.view_widths(view))
            for m in range(1, len(view)):
                if view[m].weight.shape[1] != view[m - 1].weight.shape[0]:
                    raise NetworkError(
                        f"view {k}: layer {m + 1} input width "
                        f"{view[m].weight.shape[1]} != layer {m} output width "
                        f"{view[m - 1].weight.shape[0]}"
                    )
        C = np.asarray(self.coeffs, dtype=np.float64)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise NetworkError(f"coefficient matrix must be square, got {C.shape}")
        if not np.all(np.isfinite(C)):
            raise NetworkError("coefficient matrix must be finite")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "coeffs", C)

    @staticmethod
    def view_widths(view: tuple[LayerParams, ...]) -> tuple[int, ...]:
        return (view[0].weight.shape[1],) + tuple(lp.weight.shape[0] for lp in view)

    @property
    def n_views(self) -> int:
        return len(self.layers)

    @property
    def n_samples(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_layers(self) -> int:
        return len(self.layers[0])

    def widths(self) -> tuple[tuple[int, ...], ...]:
        return tuple(self.view_widths(view) for view in self.layers)


def init_network(
    widths_per_view: list[tuple[int, ...]] | tuple[tuple[int, ...], ...],
    n_samples: int,
    seed: int | tuple = 0,
) -> NetworkState:
    """Glorot-uniform weights, zero biases, near-zero coefficients.

    Weights are drawn from U(-b, b) with b = sqrt(6 / (fan_in + fan_out));
    coefficients from U(-1e-4, 1e-4).  Deterministic in ``seed``.
    """
    if n_samples < 2:
        raise NetworkError(f"need at least 2 samples, got {n_samples}")
    rng = np.random.default_rng(seed)
    views = []
    for chain in widths_per_view:
        chain = validate_widths(tuple(chain))
        layers = []
        for fan_in, fan_out in zip(chain[:-1], chain[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append(
                LayerParams(
                    weight=rng.uniform(-bound, bound, size=(fan_out, fan_in)),
                    bias=np.zeros(fan_out),
                )
            )
        views.append(tuple(layers))
    coeffs = rng.uniform(-1e-4, 1e-4, size=(n_samples, n_samples))
    return NetworkState(layers=tuple(views), coeffs=coeffs)


@dataclass(frozen=True)
class ForwardCache:
    """Every pre-activation and activation of one forward pass.

    ``acts[k][0]`` is view k's input matrix; ``acts[k][m]`` the output of
    layer m; ``preacts[k][m-1]`` the affine input to layer m.  The latent
    codes sit at layer M/2 and the reconstructions at layer M.
    """

    preacts: tuple[tuple[np.ndarray, ...], ...]
    acts: tuple[tuple[np.ndarray, ...], ...]

    def latent(self, k: int) -> np.ndarray:
        view = self.acts[k]
        return view[(len(view) - 1) // 2]

    def reconstruction(self, k: int) -> np.ndarray:
        return self.acts[k][-1]

    @property
    def n_views(self) -> int:
        return len(self.acts)


def forward(state: NetworkState, data: MultiViewDataset) -> ForwardCache:
    """Run every view through its autoencoder, caching all intermediates.

    Hidden layers apply tanh; the final layer is linear.  Non-finite values
    abort with the offending view and layer named.
    """
    if data.n_views != state.n_views:
        raise NetworkError(f"state has {state.n_views} views, data has {data.n_views}")
    if data.n_samples != state.n_samples:
        raise NetworkError(
            f"coefficient matrix is for {state.n_samples} samples, data has {data.n_samples}"
        )
    all_pre = []
    all_act = []
    for k, (view, X) in enumerate(zip(state.layers, data.views), start=1):
        if view[0].weight.shape[1] != X.shape[0]:
            raise NetworkError(
                f"view {k}: network expects {view[0].weight.shape[1]} features, "
                f"data has {X.shape[0]}"
            )
        M = len(view)
        pres = []
        acts = [X]
        f = X
        for m, lp in enumerate(view, start=1):
            y = lp.weight @ f + lp.bias[:, None]
            f = y if m == M else activation(y)
            if not np.all(np.isfinite(f)):
                raise NetworkError(f"non-finite activation in view {k}, layer {m}")
            pres.append(y)
            acts.append(f)
        all_pre.append(tuple(pres))
        all_act.append(tuple(acts))
    return ForwardCache(preacts=tuple(all_pre), acts=tuple(all_act))


def reconstruction_loss(cache: ForwardCache, data: MultiViewDataset) -> np.ndarray:
    """Per-view ½||X - X̃||²_F."""
    return np.array(
        [
            0.5 * float(np.sum((X - cache.reconstruction(k)) ** 2))
            for k, X in enumerate(data.views)
        ]
    )


def self_expression_loss(cache: ForwardCache, coeffs: np.ndarray) -> np.ndarray:
    """Per-view ½||Z - ZC||²_F for the shared coefficient matrix C."""
    out = []
    for k in range(cache.n_views):
        Z = cache.latent(k)
        out.append(0.5 * float(np.sum((Z - Z @ coeffs) ** 2)))
    return np.array(out)


@dataclass(frozen=True)
class LossParts:
    """Unweighted subtotals; the trade-off weights enter only in total()."""

    reconstruction: float
    self_expression: float
    graph: float

    def total(self, alpha: float, beta: float) -> float:
        return self.reconstruction + alpha * self.self_expression + beta * self.graph

    def to_dict(self) -> dict:
        return {
            "reconstruction": self.reconstruction,
            "self_expression": self.self_expression,
            "graph": self.graph,
        }


def total_loss(
    state: NetworkState,
    data: MultiViewDataset,
    lap: GraphLaplacian,
    alpha: float,
    beta: float,
) -> tuple[float, LossParts]:
    """Σ_k(reconstruction_k + α·self_expression_k) + β·Tr(CᵀLC)."""
    if alpha < 0 or beta < 0:
        raise NetworkError(f"trade-off weights must be >= 0, got alpha={alpha}, beta={beta}")
    cache = forward(state, data)
    parts = LossParts(
        reconstruction=float(np.sum(reconstruction_loss(cache, data))),
        self_expression=float(np.sum(self_expression_loss(cache, state.coeffs))),
        graph=graph_regularizer(state.coeffs, lap),
    )
    return parts.total(alpha, beta), parts
