"""Analytic gradients, a finite-difference oracle, Adam, and the train loop.

Backpropagation is written out explicitly.  Two error signals flow through
each view's network: the reconstruction residual enters at the output
layer and traverses every layer, while the self-expression residual is
seeded at the latent layer M/2 by d(½||Z(I-C)||²)/dZ = Z(I-C)(I-C)ᵀ and
traverses only the encoder.  The shared coefficient matrix collects
α·Σ_k(Z_kᵀZ_kC - Z_kᵀZ_k) from all views plus β·(Lᵀ+L)C from the graph
regularizer.  Every formula here is checked against central finite
differences in the test suite; the oracle, not the derivation, is the
arbiter.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from mvsc.dataset import MultiViewDataset, normalize_dataset
from mvsc.graph import GraphDiagnostics, GraphLaplacian, graph_regularizer, laplacian, multiview_graph
from mvsc.network import (
    ForwardCache,
    LayerParams,
    LossParts,
    NetworkError,
    NetworkState,
    activation_deriv,
    forward,
    init_network,
    plan_widths,
    reconstruction_loss,
    self_expression_loss,
)

FUSION_MODES = ("both", "first")


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


class ConfigError(ValueError):
    """Invalid training configuration."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    Defaults follow the toolkit's standard operating point: trade-off
    weights 0.1 and 100, 20 mutual nearest neighbors, six-layer
    autoencoders, Adam at learning rate 1e-3.
    """

    alpha: float = 0.1
    beta: float = 100.0
    n_neighbors: int = 20
    fusion: str = "both"
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    pretrain_epochs: int = 500
    epochs: int = 1000
    seed: int = 0
    encoder_widths: tuple[int, ...] | None = None
    normalize: str = "min-max-per-feature"

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(f"alpha and beta must be >= 0, got {self.alpha}, {self.beta}")
        if self.n_neighbors < 1:
            raise ConfigError(f"n_neighbors must be >= 1, got {self.n_neighbors}")
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be > 0, got {self.learning_rate}")
        for name in ("adam_beta1", "adam_beta2"):
            rate = getattr(self, name)
            if not (0.0 < rate < 1.0):
                raise ConfigError(f"{name} must lie in (0, 1), got {rate}")
        if self.adam_epsilon <= 0:
            raise ConfigError(f"adam_epsilon must be > 0, got {self.adam_epsilon}")
        if self.pretrain_epochs < 0 or self.epochs < 0:
            raise ConfigError("epoch counts must be >= 0")
        if self.encoder_widths is not None:
            object.__setattr__(
                self, "encoder_widths", tuple(int(w) for w in self.encoder_widths)
            )

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "n_neighbors": self.n_neighbors,
            "fusion": self.fusion,
            "learning_rate": self.learning_rate,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_epsilon": self.adam_epsilon,
            "pretrain_epochs": self.pretrain_epochs,
            "epochs": self.epochs,
            "seed": self.seed,
            "encoder_widths": None if self.encoder_widths is None else list(self.encoder_widths),
            "normalize": self.normalize,
        }


@dataclass(frozen=True)
class Gradients:
    """Loss gradients mirroring NetworkState's shapes exactly."""

    layers: tuple[tuple[LayerParams, ...], ...]
    coeffs: np.ndarray


def _check_cache(state: NetworkState, cache: ForwardCache) -> None:
    if cache.n_views != state.n_views:
        raise NetworkError(
            f"cache has {cache.n_views} views, state has {state.n_views}"
        )
    for k, (view, acts) in enumerate(zip(state.layers, cache.acts), start=1):
        if len(acts) != len(view) + 1:
            raise NetworkError(f"view {k}: cache depth {len(acts) - 1} != {len(view)} layers")
        for m, lp in enumerate(view, start=1):
            if acts[m].shape[0] != lp.weight.shape[0]:
                raise NetworkError(f"view {k}, layer {m}: cache/state width mismatch")


def backward(
    state: NetworkState,
    data: MultiViewDataset,
    lap: GraphLaplacian,
    alpha: float,
    beta: float,
    cache: ForwardCache,
) -> Gradients:
    """Gradients of the full objective for every weight, bias, and coefficient."""
    _check_cache(state, cache)
    C = state.coeffs
    coeff_grad = np.zeros_like(C)
    all_views = []
    for k, (view, X) in enumerate(zip(state.layers, data.views)):
        acts = cache.acts[k]
        M = len(view)
        half = M // 2
        Z = acts[half]
        if alpha != 0.0:
            E = Z - Z @ C  # latent self-expression residual
            gram = Z.T @ Z
            coeff_grad += alpha * (gram @ C - gram)

        grads: list[LayerParams | None] = [None] * M
        delta = acts[M] - X  # linear output layer
        lam = None
        for m in range(M, 0, -1):
            if m < M:
                delta = (view[m].weight.T @ delta) * activation_deriv(acts[m])
            if alpha != 0.0:
                if m == half:
                    # d(½||Z(I-C)||²)/dZ = Z(I-C)(I-C)ᵀ = E - ECᵀ, gated by tanh'
                    lam = (E - E @ C.T) * activation_deriv(acts[m])
                elif lam is not None:
                    lam = (view[m].weight.T @ lam) * activation_deriv(acts[m])
            signal = delta if lam is None else delta + alpha * lam
            grads[m - 1] = LayerParams(
                weight=signal @ acts[m - 1].T,
                bias=signal.sum(axis=1),
            )
        all_views.append(tuple(grads))
    if beta != 0.0:
        coeff_grad += beta * ((lap.laplacian.T + lap.laplacian) @ C)
    return Gradients(layers=tuple(all_views), coeffs=coeff_grad)


def _state_arrays(state: NetworkState) -> list[np.ndarray]:
    """All parameter arrays in a fixed order: per view, per layer W then b, then C."""
    arrays: list[np.ndarray] = []
    for view in state.layers:
        for lp in view:
            arrays.append(lp.weight)
            arrays.append(lp.bias)
    arrays.append(state.coeffs)
    return arrays


def _grad_arrays(grads: Gradients) -> list[np.ndarray]:
    arrays: list[np.ndarray] = []
    for view in grads.layers:
        for lp in view:
            arrays.append(lp.weight)
            arrays.append(lp.bias)
    arrays.append(grads.coeffs)
    return arrays


def _state_from_arrays(template: NetworkState, arrays: list[np.ndarray]) -> NetworkState:
    it = iter(arrays)
    views = []
    for view in template.layers:
        layers = []
        for _ in view:
            layers.append(LayerParams(weight=next(it), bias=next(it)))
        views.append(tuple(layers))
    return NetworkState(layers=tuple(views), coeffs=next(it))


def _grads_from_arrays(template: NetworkState, arrays: list[np.ndarray]) -> Gradients:
    built = _state_from_arrays(template, arrays)
    return Gradients(layers=built.layers, coeffs=built.coeffs)


def finite_difference_grad(
    state: NetworkState,
    data: MultiViewDataset,
    lap: GraphLaplacian,
    alpha: float,
    beta: float,
    step: float = 1e-6,
) -> Gradients:
    """Central-difference gradient of the full objective, one entry at a time.

    Independent of the backward pass; costs two loss evaluations per scalar
    parameter, so keep instances tiny.
    """
    if step <= 0:
        raise ConfigError(f"finite-difference step must be > 0, got {step}")
    from mvsc.network import total_loss

    work = copy.deepcopy(state)
    arrays = _state_arrays(work)
    grads = [np.zeros_like(a) for a in arrays]
    for arr, grad in zip(arrays, grads):
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            hi, _ = total_loss(work, data, lap, alpha, beta)
            flat[i] = saved - step
            lo, _ = total_loss(work, data, lap, alpha, beta)
            flat[i] = saved
            gflat[i] = (hi - lo) / (2.0 * step)
    return _grads_from_arrays(state, grads)


@dataclass(frozen=True)
class AdamState:
    """First/second moment accumulators plus the step counter."""

    first: tuple[np.ndarray, ...]
    second: tuple[np.ndarray, ...]
    step_count: int = 0

    @staticmethod
    def zeros_like(params: list[np.ndarray]) -> "AdamState":
        return AdamState(
            first=tuple(np.zeros_like(p) for p in params),
            second=tuple(np.zeros_like(p) for p in params),
            step_count=0,
        )


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    adam: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns fresh arrays and state."""
    if len(params) != len(grads) or len(params) != len(adam.first):
        raise ConfigError("params, grads, and Adam state must have matching structure")
    t = adam.step_count + 1
    corr1 = 1.0 - beta1**t
    corr2 = 1.0 - beta2**t
    new_params, new_first, new_second = [], [], []
    for p, g, m, v in zip(params, grads, adam.first, adam.second):
        m_next = beta1 * m + (1.0 - beta1) * g
        v_next = beta2 * v + (1.0 - beta2) * (g * g)
        step = lr * (m_next / corr1) / (np.sqrt(v_next / corr2) + epsilon)
        new_params.append(p - step)
        new_first.append(m_next)
        new_second.append(v_next)
    return new_params, AdamState(tuple(new_first), tuple(new_second), t)


def _zero_laplacian(n: int) -> GraphLaplacian:
    return GraphLaplacian(laplacian=np.zeros((n, n)))


def pretrain(
    state: NetworkState,
    data: MultiViewDataset,
    epochs: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> NetworkState:
    """Adam on the reconstruction term alone; coefficients stay frozen."""
    if epochs < 0:
        raise ConfigError(f"epochs must be >= 0, got {epochs}")
    if epochs == 0:
        return state
    zero_lap = _zero_laplacian(state.n_samples)
    params = _state_arrays(state)[:-1]  # all but the coefficient matrix
    coeffs = state.coeffs
    adam = AdamState.zeros_like(params)
    for epoch in range(epochs):
        try:
            current = _state_from_arrays(state, params + [coeffs])
            cache = forward(current, data)
        except NetworkError as exc:
            raise DivergenceError(f"pretraining diverged at epoch {epoch}: {exc}") from exc
        loss = float(np.sum(reconstruction_loss(cache, data)))
        if not np.isfinite(loss):
            raise DivergenceError(f"pretraining diverged at epoch {epoch}: loss={loss}")
        grads = backward(current, data, zero_lap, 0.0, 0.0, cache)
        params, adam = adam_step(
            params, _grad_arrays(grads)[:-1], adam, lr, beta1, beta2, epsilon
        )
    return _state_from_arrays(state, params + [coeffs])


@dataclass
class LossHistory:
    """Total loss and unweighted subtotals, one entry per joint epoch."""

    total: list[float] = field(default_factory=list)
    reconstruction: list[float] = field(default_factory=list)
    self_expression: list[float] = field(default_factory=list)
    graph: list[float] = field(default_factory=list)

    def append(self, total: float, parts: LossParts) -> None:
        self.total.append(total)
        self.reconstruction.append(parts.reconstruction)
        self.self_expression.append(parts.self_expression)
        self.graph.append(parts.graph)

    def __len__(self) -> int:
        return len(self.total)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "reconstruction": self.reconstruction,
            "self_expression": self.self_expression,
            "graph": self.graph,
        }


@dataclass(frozen=True)
class TrainResult:
    state: NetworkState
    history: LossHistory
    graph_diagnostics: GraphDiagnostics


def train(config: TrainConfig, data: MultiViewDataset) -> TrainResult:
    """Full pipeline: normalize, build and fuse graphs, pretrain, joint Adam.

    The fused graph and its Laplacian are computed once from the normalized
    views and never rebuilt.  Joint training runs one Adam instance over all
    network parameters and the shared coefficient matrix, full batch (the
    self-expression term couples every sample).  Deterministic in
    ``config.seed``.
    """
    data = normalize_dataset(data, config.normalize)
    fused, diagnostics = multiview_graph(
        data.views, config.n_neighbors, include_second=(config.fusion == "both")
    )
    lap = laplacian(fused)
    widths = [plan_widths(d_k, config.encoder_widths) for d_k in data.view_dims()]
    state = init_network(widths, data.n_samples, seed=config.seed)
    if config.pretrain_epochs > 0:
        state = pretrain(
            state,
            data,
            config.pretrain_epochs,
            config.learning_rate,
            config.adam_beta1,
            config.adam_beta2,
            config.adam_epsilon,
        )
    history = LossHistory()
    params = _state_arrays(state)
    adam = AdamState.zeros_like(params)
    for epoch in range(config.epochs):
        try:
            current = _state_from_arrays(state, params)
            cache = forward(current, data)
        except NetworkError as exc:
            raise DivergenceError(f"training diverged at epoch {epoch}: {exc}") from exc
        parts = LossParts(
            reconstruction=float(np.sum(reconstruction_loss(cache, data))),
            self_expression=float(np.sum(self_expression_loss(cache, current.coeffs))),
            graph=graph_regularizer(current.coeffs, lap),
        )
        total = parts.total(config.alpha, config.beta)
        if not np.isfinite(total):
            raise DivergenceError(f"training diverged at epoch {epoch}: loss={total}")
        history.append(total, parts)
        grads = backward(current, data, lap, config.alpha, config.beta, cache)
        params, adam = adam_step(
            params,
            _grad_arrays(grads),
            adam,
            config.learning_rate,
            config.adam_beta1,
            config.adam_beta2,
            config.adam_epsilon,
        )
    final = _state_from_arrays(state, params)
    return TrainResult(state=final, history=history, graph_diagnostics=diagnostics)
