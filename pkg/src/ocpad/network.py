"""Minimal multi-channel feed-forward network with analytic gradients.

One small trunk per input channel, a fusion stack over the concatenated
trunk outputs, an affine embedding layer, and a single sigmoid output
unit. Everything is plain numpy; gradients are exact and checkable
against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError, TrainingError

# Sigmoid outputs are clamped into [PROB_CLIP, 1 - PROB_CLIP] so the
# cross-entropy loss stays finite.
PROB_CLIP = 1e-7

_ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class NetworkConfig:
    """Shape and initialization contract for the network.

    ``channels`` names the input channels in a fixed order; every channel
    carries ``input_dim_per_channel`` values. ``embedding_dim`` is the
    width of the penultimate affine layer whose output is used as the
    sample embedding; the head maps it to a single sigmoid unit.
    """

    channels: tuple[str, ...]
    input_dim_per_channel: int
    trunk_hidden_dims: tuple[int, ...] = (8,)
    fusion_hidden_dims: tuple[int, ...] = (16,)
    embedding_dim: int = 10
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "trunk_hidden_dims", tuple(self.trunk_hidden_dims))
        object.__setattr__(self, "fusion_hidden_dims", tuple(self.fusion_hidden_dims))

    def validate(self) -> None:
        if not self.channels:
            raise ConfigurationError("at least one channel is required")
        if len(set(self.channels)) != len(self.channels):
            raise ConfigurationError("channel names must be unique")
        if self.input_dim_per_channel < 1:
            raise ConfigurationError(
                f"input_dim_per_channel must be >= 1, got {self.input_dim_per_channel}"
            )
        for dims, what in ((self.trunk_hidden_dims, "trunk_hidden_dims"),
                           (self.fusion_hidden_dims, "fusion_hidden_dims")):
            if any(d < 1 for d in dims):
                raise ConfigurationError(f"{what} must all be >= 1, got {dims}")
        if self.embedding_dim < 1:
            raise ConfigurationError(f"embedding_dim must be >= 1, got {self.embedding_dim}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigurationError(
                f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}"
            )

    @property
    def trunk_output_dim(self) -> int:
        return self.trunk_hidden_dims[-1] if self.trunk_hidden_dims else self.input_dim_per_channel

    @property
    def fused_dim(self) -> int:
        return self.trunk_output_dim * len(self.channels)

    @property
    def fusion_output_dim(self) -> int:
        return self.fusion_hidden_dims[-1] if self.fusion_hidden_dims else self.fused_dim

    def layer_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """All parameter names with their shapes, in declaration order."""
        shapes: list[tuple[str, tuple[int, ...]]] = []
        for ch in self.channels:
            dims = (self.input_dim_per_channel, *self.trunk_hidden_dims)
            for i in range(len(self.trunk_hidden_dims)):
                shapes.append((f"trunk.{ch}.{i}.W", (dims[i + 1], dims[i])))
                shapes.append((f"trunk.{ch}.{i}.b", (dims[i + 1],)))
        dims = (self.fused_dim, *self.fusion_hidden_dims)
        for i in range(len(self.fusion_hidden_dims)):
            shapes.append((f"fusion.{i}.W", (dims[i + 1], dims[i])))
            shapes.append((f"fusion.{i}.b", (dims[i + 1],)))
        shapes.append(("embed.W", (self.embedding_dim, self.fusion_output_dim)))
        shapes.append(("embed.b", (self.embedding_dim,)))
        shapes.append(("out.W", (1, self.embedding_dim)))
        shapes.append(("out.b", (1,)))
        return shapes


@dataclass
class NetworkParams:
    """All weights and biases, keyed by name in declaration order."""

    config: NetworkConfig
    tensors: dict[str, np.ndarray]

    def names(self) -> list[str]:
        return [name for name, _ in self.config.layer_shapes()]

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def n_coordinates(self) -> int:
        return sum(int(t.size) for t in self.tensors.values())


@dataclass
class BatchForward:
    """Cached activations for a batch, consumed by :func:`backward`."""

    trunk_acts: dict[str, list[np.ndarray]]
    trunk_pre: dict[str, list[np.ndarray]]
    fusion_acts: list[np.ndarray]
    fusion_pre: list[np.ndarray]
    embeddings: np.ndarray        # (B, embedding_dim)
    sigmoid_raw: np.ndarray       # (B,) before clamping
    probabilities: np.ndarray     # (B,) clamped into (0, 1)

    @property
    def batch_size(self) -> int:
        return self.embeddings.shape[0]


@dataclass
class ForwardResult:
    """Per-sample forward output plus its backward cache."""

    embedding: np.ndarray
    probability: float
    cache: BatchForward = field(repr=False)


def init_network(config: NetworkConfig) -> NetworkParams:
    """Create parameters: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.

    Deterministic for a given ``config.seed``.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in config.layer_shapes():
        if name.endswith(".W"):
            bound = 1.0 / np.sqrt(shape[1])
            tensors[name] = rng.uniform(-bound, bound, size=shape)
        else:
            tensors[name] = np.zeros(shape)
    return NetworkParams(config, tensors)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_deriv(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(z.dtype)
    return 1.0 - a * a


def _as_batch(config: NetworkConfig, sample: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Validate a channel->values mapping and lift it to (B, d) arrays."""
    out: dict[str, np.ndarray] = {}
    batch = None
    for ch in config.channels:
        if ch not in sample:
            raise InputError(f"missing channel {ch!r}")
        x = np.asarray(sample[ch], dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != config.input_dim_per_channel:
            raise InputError(
                f"channel {ch!r} expects {config.input_dim_per_channel} values per sample, "
                f"got shape {x.shape}"
            )
        if batch is None:
            batch = x.shape[0]
        elif x.shape[0] != batch:
            raise InputError("channels disagree on batch size")
        if not np.all(np.isfinite(x)):
            raise InputError(f"non-finite values in channel {ch!r}")
        out[ch] = x
    return out


def forward_batch(params: NetworkParams, inputs: dict[str, np.ndarray]) -> BatchForward:
    """Run the network over a batch given as channel -> (B, d) arrays."""
    cfg = params.config
    xs = _as_batch(cfg, inputs)
    t = params.tensors
    act = cfg.activation

    trunk_acts: dict[str, list[np.ndarray]] = {}
    trunk_pre: dict[str, list[np.ndarray]] = {}
    for ch in cfg.channels:
        h = xs[ch]
        acts, pres = [h], []
        for i in range(len(cfg.trunk_hidden_dims)):
            z = h @ t[f"trunk.{ch}.{i}.W"].T + t[f"trunk.{ch}.{i}.b"]
            h = _activate(z, act)
            pres.append(z)
            acts.append(h)
        trunk_acts[ch] = acts
        trunk_pre[ch] = pres

    fused = np.concatenate([trunk_acts[ch][-1] for ch in cfg.channels], axis=1)
    fusion_acts, fusion_pre = [fused], []
    h = fused
    for i in range(len(cfg.fusion_hidden_dims)):
        z = h @ t[f"fusion.{i}.W"].T + t[f"fusion.{i}.b"]
        h = _activate(z, act)
        fusion_pre.append(z)
        fusion_acts.append(h)

    emb = h @ t["embed.W"].T + t["embed.b"]
    z_out = (emb @ t["out.W"].T + t["out.b"])[:, 0]
    s = 1.0 / (1.0 + np.exp(-z_out))
    p = np.clip(s, PROB_CLIP, 1.0 - PROB_CLIP)
    return BatchForward(trunk_acts, trunk_pre, fusion_acts, fusion_pre, emb, s, p)


def forward(params: NetworkParams, sample: dict[str, np.ndarray]) -> ForwardResult:
    """Forward a single sample (channel -> vector mapping).

    Pure function of (params, sample); repeated calls are bitwise identical.
    """
    cache = forward_batch(params, sample)
    if cache.batch_size != 1:
        raise InputError("forward() takes a single sample; use forward_batch for batches")
    return ForwardResult(cache.embeddings[0], float(cache.probabilities[0]), cache)


def _stack_results(results: list[ForwardResult]) -> BatchForward:
    caches = [r.cache for r in results]
    first = caches[0]
    return BatchForward(
        trunk_acts={ch: [np.concatenate([c.trunk_acts[ch][i] for c in caches])
                         for i in range(len(first.trunk_acts[ch]))]
                    for ch in first.trunk_acts},
        trunk_pre={ch: [np.concatenate([c.trunk_pre[ch][i] for c in caches])
                        for i in range(len(first.trunk_pre[ch]))]
                   for ch in first.trunk_pre},
        fusion_acts=[np.concatenate([c.fusion_acts[i] for c in caches])
                     for i in range(len(first.fusion_acts))],
        fusion_pre=[np.concatenate([c.fusion_pre[i] for c in caches])
                    for i in range(len(first.fusion_pre))],
        embeddings=np.concatenate([c.embeddings for c in caches]),
        sigmoid_raw=np.concatenate([c.sigmoid_raw for c in caches]),
        probabilities=np.concatenate([c.probabilities for c in caches]),
    )


def backward(
    params: NetworkParams,
    batch: BatchForward | list[ForwardResult],
    dloss_dp: np.ndarray,
    dloss_dembedding: np.ndarray,
) -> dict[str, np.ndarray]:
    """Gradients of the summed batch loss w.r.t. every parameter.

    ``dloss_dp`` has one entry per sample and ``dloss_dembedding`` one row
    per sample; the reduction over the batch is a plain sum in sample
    order, so scale the upstream gradients for mean losses.
    """
    if isinstance(batch, list):
        if not batch:
            raise InputError("backward() requires a non-empty batch")
        batch = _stack_results(batch)
    cfg = params.config
    t = params.tensors
    act = cfg.activation
    B = batch.batch_size
    if B == 0:
        raise InputError("backward() requires a non-empty batch")

    dp = np.asarray(dloss_dp, dtype=float).reshape(B)
    demb_up = np.asarray(dloss_dembedding, dtype=float).reshape(B, cfg.embedding_dim)
    if not (np.all(np.isfinite(dp)) and np.all(np.isfinite(demb_up))):
        raise InputError("non-finite upstream gradients")

    grads: dict[str, np.ndarray] = {}

    # Head: p = clip(sigmoid(z)); the clamp has zero derivative where active.
    s = batch.sigmoid_raw
    unclipped = (s == batch.probabilities)
    dz_out = dp * s * (1.0 - s) * unclipped

    emb = batch.embeddings
    grads["out.W"] = (dz_out @ emb)[None, :]
    grads["out.b"] = np.array([dz_out.sum()])
    demb = demb_up + dz_out[:, None] * t["out.W"]

    # Embedding layer is affine on the fusion output.
    fusion_out = batch.fusion_acts[-1]
    grads["embed.W"] = demb.T @ fusion_out
    grads["embed.b"] = demb.sum(axis=0)
    dh = demb @ t["embed.W"]

    for i in reversed(range(len(cfg.fusion_hidden_dims))):
        dz = dh * _activate_deriv(batch.fusion_pre[i], batch.fusion_acts[i + 1], act)
        grads[f"fusion.{i}.W"] = dz.T @ batch.fusion_acts[i]
        grads[f"fusion.{i}.b"] = dz.sum(axis=0)
        dh = dz @ t[f"fusion.{i}.W"]

    width = cfg.trunk_output_dim
    for k, ch in enumerate(cfg.channels):
        dch = dh[:, k * width:(k + 1) * width]
        for i in reversed(range(len(cfg.trunk_hidden_dims))):
            dz = dch * _activate_deriv(batch.trunk_pre[ch][i], batch.trunk_acts[ch][i + 1], act)
            grads[f"trunk.{ch}.{i}.W"] = dz.T @ batch.trunk_acts[ch][i]
            grads[f"trunk.{ch}.{i}.b"] = dz.sum(axis=0)
            dch = dz @ t[f"trunk.{ch}.{i}.W"]

    return grads


@dataclass
class AdamState:
    """First/second moment estimates plus the shared step counter."""

    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


def init_adam_state(params: NetworkParams) -> AdamState:
    return AdamState(
        step=0,
        m={k: np.zeros_like(v) for k, v in params.tensors.items()},
        v={k: np.zeros_like(v) for k, v in params.tensors.items()},
    )


def adam_step(
    params: NetworkParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[NetworkParams, AdamState]:
    """One Adam update with decoupled multiplicative weight decay.

    The decay factor (1 - lr * weight_decay) is applied to each parameter
    before the bias-corrected Adam step. Returns fresh params and state.
    """
    if lr < 0:
        raise ConfigurationError(f"learning rate must be >= 0, got {lr}")
    step = state.step + 1
    new_tensors: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    for name, theta in params.tensors.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        m = beta1 * state.m[name] + (1.0 - beta1) * g
        v = beta2 * state.v[name] + (1.0 - beta2) * g * g
        theta = theta * (1.0 - lr * weight_decay)
        theta = theta - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_tensors[name] = theta
        new_m[name] = m
        new_v[name] = v
    return NetworkParams(params.config, new_tensors), AdamState(step, new_m, new_v)


def gradient_check(
    params: NetworkParams,
    loss_fn,
    h: float,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(params)`` must return ``(loss, grads)`` with grads keyed like
    the parameter tensors. All coordinates are checked unless there are
    more than ``max_coords``, in which case a random subsample of at least
    200 coordinates is used. Relative error per coordinate is
    ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if h <= 0:
        raise InputError(f"step size h must be > 0, got {h}")
    _, grads = loss_fn(params)

    coords = [(name, idx) for name in params.names()
              for idx in range(params.tensors[name].size)]
    if max_coords is not None and len(coords) > max_coords:
        n_take = max(200, max_coords)
        rng = np.random.default_rng(seed)
        take = rng.choice(len(coords), size=min(n_take, len(coords)), replace=False)
        coords = [coords[i] for i in sorted(take)]

    worst = 0.0
    work = params.copy()
    for name, idx in coords:
        flat = work.tensors[name].reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + h
        lo_hi, _ = loss_fn(work)
        flat[idx] = orig - h
        lo_lo, _ = loss_fn(work)
        flat[idx] = orig
        numeric = (lo_hi - lo_lo) / (2.0 * h)
        analytic = grads[name].reshape(-1)[idx]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
