"""End-to-end training and evaluation pipeline.

Trains the multi-channel network with the combined objective while
maintaining the running bonafide center, selects the epoch with minimum
dev loss, extracts embeddings, fits the one-class mixture on train-fold
bonafide embeddings, scores dev/eval folds and reports ISO-style rates.
Also owns the binary checkpoint/model file formats and the CSV/JSON
artifact writers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import losses as L
from .data import BONAFIDE, ProtocolSplit, Sample, mad_normalize
from .errors import CheckpointError, ConfigurationError, InputError, TrainingError
from .gmm import EmConfig, GmmParams, fit_em, log_likelihood_many
from .losses import BonafideCenter, LossConfig
from .metrics import MetricsReport, ScoredSet, build_report
from .network import (
    AdamState,
    NetworkConfig,
    NetworkParams,
    adam_step,
    backward,
    forward_batch,
    init_adam_state,
    init_network,
)

CHECKPOINT_MAGIC = b"OCCL"
GMM_MAGIC = b"OCGM"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters and the network/loss sub-configs.

    ``channel_subset`` restricts the run to a subset of the configured
    channels (ablation path); excluded channels are never read.
    ``mad_k`` enables robust per-sample channel normalization when set.
    """

    network: NetworkConfig
    loss: LossConfig = LossConfig()
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-4
    weight_decay: float = 1e-5
    seed: int = 0
    channel_subset: tuple[str, ...] | None = None
    model_selection: str = "min_dev_loss"
    mad_k: float | None = None

    def __post_init__(self):
        if self.channel_subset is not None:
            object.__setattr__(self, "channel_subset", tuple(self.channel_subset))

    def validate(self) -> None:
        self.network.validate()
        self.loss.validate()
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigurationError(f"lr must be > 0, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be >= 0")
        if self.model_selection != "min_dev_loss":
            raise ConfigurationError(
                f"unknown model_selection {self.model_selection!r}")
        if self.channel_subset is not None:
            unknown = set(self.channel_subset) - set(self.network.channels)
            if unknown or not self.channel_subset:
                raise ConfigurationError(
                    f"channel_subset must be a non-empty subset of "
                    f"{self.network.channels}, got {self.channel_subset}")
        if self.mad_k is not None and self.mad_k <= 0:
            raise ConfigurationError("mad_k must be > 0 when set")

    def effective_channels(self) -> tuple[str, ...]:
        if self.channel_subset is None:
            return self.network.channels
        return tuple(ch for ch in self.network.channels if ch in self.channel_subset)


@dataclass
class Checkpoint:
    """Trained network snapshot at the selected epoch."""

    version: int
    params: NetworkParams
    center: BonafideCenter
    train_config: TrainConfig
    history: list[dict]
    selected_epoch: int

    @property
    def network_config(self) -> NetworkConfig:
        return self.params.config


def _index_samples(samples: list[Sample]) -> dict[int, Sample]:
    return {s.id: s for s in samples}


def _fold(samples_by_id: dict[int, Sample], ids) -> list[Sample]:
    try:
        return [samples_by_id[i] for i in ids]
    except KeyError as exc:
        raise InputError(f"split references unknown sample id {exc.args[0]}")


def _features(
    fold: list[Sample], channels: tuple[str, ...], dim: int, mad_k: float | None
) -> dict[str, np.ndarray]:
    """Stack per-channel matrices, touching only the listed channels."""
    out: dict[str, np.ndarray] = {}
    for ch in channels:
        rows = []
        for s in fold:
            if ch not in s.channels:
                raise InputError(f"sample {s.id} is missing channel {ch!r}")
            v = np.asarray(s.channels[ch], dtype=float)
            if v.shape != (dim,):
                raise InputError(
                    f"sample {s.id} channel {ch!r} has shape {v.shape}, expected ({dim},)")
            rows.append(mad_normalize(v, mad_k) if mad_k is not None else v)
        out[ch] = np.array(rows)
    return out


def _labels(fold: list[Sample]) -> np.ndarray:
    return np.array([1 if s.label == BONAFIDE else 0 for s in fold], dtype=int)


def _mean_combined_loss(
    params: NetworkParams, X: dict[str, np.ndarray], y: np.ndarray,
    center: BonafideCenter, loss_cfg: LossConfig,
) -> float:
    fwd = forward_batch(params, X)
    bce, _ = L.bce_loss_batch(fwd.probabilities, y)
    occl, _ = L.occl_loss_batch(fwd.embeddings, center.center, y, loss_cfg.margin)
    w = loss_cfg.occl_weight
    return float(np.mean((1.0 - w) * bce + w * occl))


def _mean_center_distance(
    params: NetworkParams, X: dict[str, np.ndarray], y: np.ndarray,
    center: np.ndarray,
) -> float:
    emb = forward_batch(params, X).embeddings[y == 1]
    return float(np.mean(np.linalg.norm(emb - center[None, :], axis=1)))


def train(split: ProtocolSplit, samples: list[Sample], cfg: TrainConfig) -> Checkpoint:
    """Run the full training loop and return the min-dev-loss checkpoint.

    Each mini-batch: forward, per-sample BCE and one-class contrastive
    losses blended by ``occl_weight``, backward, Adam step, then the
    bonafide-center update from the batch mean. Epoch shuffling uses an
    RNG seeded with ``seed ^ epoch``, so runs are exactly reproducible.
    The history records one entry per epoch (plus the pre-training state
    at epoch 0) with train/dev loss and the mean bonafide distance to the
    center.
    """
    cfg.validate()
    by_id = _index_samples(samples)
    train_fold = _fold(by_id, split.train_ids)
    dev_fold = _fold(by_id, split.dev_ids)
    if not train_fold or not dev_fold:
        raise TrainingError("train and dev folds must be non-empty")

    y_train = _labels(train_fold)
    y_dev = _labels(dev_fold)
    if y_train.all() or not y_train.any():
        raise TrainingError("train fold must contain both bonafide and attack samples")

    channels = cfg.effective_channels()
    net_cfg = replace(cfg.network, channels=channels)
    dim = net_cfg.input_dim_per_channel
    X_train = _features(train_fold, channels, dim, cfg.mad_k)
    X_dev = _features(dev_fold, channels, dim, cfg.mad_k)

    params = init_network(net_cfg)
    state: AdamState = init_adam_state(params)
    alpha = cfg.loss.center_update_rate
    center = BonafideCenter.empty(net_cfg.embedding_dim, alpha)

    n = len(train_fold)
    w = cfg.loss.occl_weight
    history: list[dict] = []
    best_epoch = -1
    best_dev = np.inf
    best_params = params
    best_center = center

    def record(epoch: int, current_center: BonafideCenter) -> float:
        train_loss = _mean_combined_loss(params, X_train, y_train, current_center, cfg.loss)
        dev_loss = _mean_combined_loss(params, X_dev, y_dev, current_center, cfg.loss)
        dc = _mean_center_distance(params, X_train, y_train, current_center.center)
        history.append({
            "epoch": epoch,
            "train_loss": float(train_loss),
            "dev_loss": float(dev_loss),
            "bonafide_dc_mean": float(dc),
        })
        return dev_loss

    # Epoch 0: untrained network, provisional center at the mean train
    # bonafide embedding. Participates in model selection like any epoch.
    emb0 = forward_batch(params, X_train).embeddings
    center0 = BonafideCenter(emb0[y_train == 1].mean(axis=0), alpha, initialized=True)
    dev0 = record(0, center0)
    best_epoch, best_dev, best_params, best_center = 0, dev0, params, center0

    batch_index = 0
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng(cfg.seed ^ epoch).permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch_index += 1
            idx = order[start:start + cfg.batch_size]
            Xb = {ch: X_train[ch][idx] for ch in channels}
            yb = y_train[idx]
            fwd = forward_batch(params, Xb)
            bce_vec, dbce = L.bce_loss_batch(fwd.probabilities, yb)

            freshly_initialized = False
            if not center.initialized and yb.any():
                center = BonafideCenter(
                    fwd.embeddings[yb == 1].mean(axis=0), alpha, initialized=True)
                freshly_initialized = True
            if center.initialized:
                occl_vec, gocc = L.occl_loss_batch(
                    fwd.embeddings, center.center, yb, cfg.loss.margin)
            else:
                occl_vec = np.zeros(len(yb))
                gocc = np.zeros_like(fwd.embeddings)

            batch_loss = float(np.mean((1.0 - w) * bce_vec + w * occl_vec))
            if not np.isfinite(batch_loss):
                raise TrainingError(f"non-finite loss in batch {batch_index}")

            B = len(yb)
            grads = backward(params, fwd, (1.0 - w) * dbce / B, w * gocc / B)
            params, state = adam_step(params, grads, state, cfg.lr, cfg.weight_decay)

            if center.initialized and not freshly_initialized:
                bona = fwd.embeddings[yb == 1]
                if len(bona):
                    center = L.update_center(center, bona, alpha)

        dev_loss = record(epoch, center)
        if dev_loss < best_dev:
            best_epoch, best_dev = epoch, dev_loss
            best_params, best_center = params, center

    return Checkpoint(
        version=FORMAT_VERSION,
        params=best_params.copy(),
        center=best_center,
        train_config=cfg,
        history=history,
        selected_epoch=best_epoch,
    )


def _forward_samples(
    ckpt: Checkpoint, fold: list[Sample]
) -> tuple[np.ndarray, np.ndarray]:
    """(embeddings, probabilities) for a list of samples, in input order."""
    cfg = ckpt.network_config
    if not fold:
        return np.zeros((0, cfg.embedding_dim)), np.zeros(0)
    X = _features(fold, cfg.channels, cfg.input_dim_per_channel,
                  ckpt.train_config.mad_k)
    fwd = forward_batch(ckpt.params, X)
    return fwd.embeddings, fwd.probabilities


def extract_embeddings(
    ckpt: Checkpoint, samples: list[Sample]
) -> list[tuple[int, np.ndarray]]:
    """Embed every sample with the frozen network; pure inference."""
    if not samples:
        return []
    emb, _ = _forward_samples(ckpt, samples)
    return [(s.id, emb[i]) for i, s in enumerate(samples)]


def fit_one_class(
    ckpt: Checkpoint, split: ProtocolSplit, samples: list[Sample], em_cfg: EmConfig
) -> GmmParams:
    """Fit the mixture on train-fold bonafide embeddings only."""
    by_id = _index_samples(samples)
    bona = [s for s in _fold(by_id, split.train_ids) if s.label == BONAFIDE]
    emb, _ = _forward_samples(ckpt, bona)
    gmm, _ = fit_em(emb, em_cfg)
    return gmm


def evaluate(
    ckpt: Checkpoint,
    gmm: GmmParams | None,
    split: ProtocolSplit,
    samples: list[Sample],
    target_bpcer: float = 0.01,
) -> MetricsReport:
    """Score dev/eval folds and report rates at the dev-anchored threshold.

    With a mixture, the score is the embedding log-likelihood; with
    ``gmm=None`` the raw network probability is used instead (the
    binary-classifier baseline).
    """
    by_id = _index_samples(samples)
    dev_fold = _fold(by_id, split.dev_ids)
    eval_fold = _fold(by_id, split.eval_ids)

    def scores(fold: list[Sample]) -> np.ndarray:
        emb, prob = _forward_samples(ckpt, fold)
        return log_likelihood_many(gmm, emb) if gmm is not None else prob

    dev = ScoredSet(scores(dev_fold), _labels(dev_fold))
    evl = ScoredSet(scores(eval_fold), _labels(eval_fold))
    return build_report(dev, evl, target_bpcer)


# ---------------------------------------------------------------------------
# Config (de)serialization for JSON experiment files.
# ---------------------------------------------------------------------------

def network_config_to_dict(cfg: NetworkConfig) -> dict:
    return {
        "channels": list(cfg.channels),
        "input_dim_per_channel": cfg.input_dim_per_channel,
        "trunk_hidden_dims": list(cfg.trunk_hidden_dims),
        "fusion_hidden_dims": list(cfg.fusion_hidden_dims),
        "embedding_dim": cfg.embedding_dim,
        "activation": cfg.activation,
        "seed": cfg.seed,
    }


def network_config_from_dict(doc: dict) -> NetworkConfig:
    try:
        cfg = NetworkConfig(
            channels=tuple(doc["channels"]),
            input_dim_per_channel=int(doc["input_dim_per_channel"]),
            trunk_hidden_dims=tuple(doc.get("trunk_hidden_dims", (8,))),
            fusion_hidden_dims=tuple(doc.get("fusion_hidden_dims", (16,))),
            embedding_dim=int(doc.get("embedding_dim", 10)),
            activation=str(doc.get("activation", "relu")),
            seed=int(doc.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad network config: {exc}") from exc
    cfg.validate()
    return cfg


def train_config_to_dict(cfg: TrainConfig) -> dict:
    return {
        "network": network_config_to_dict(cfg.network),
        "loss": {
            "occl_weight": cfg.loss.occl_weight,
            "margin": cfg.loss.margin,
            "center_update_rate": cfg.loss.center_update_rate,
        },
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "lr": cfg.lr,
        "weight_decay": cfg.weight_decay,
        "seed": cfg.seed,
        "channel_subset": list(cfg.channel_subset) if cfg.channel_subset else None,
        "model_selection": cfg.model_selection,
        "mad_k": cfg.mad_k,
    }


def train_config_from_dict(doc: dict) -> TrainConfig:
    try:
        loss_doc = doc.get("loss", {})
        cfg = TrainConfig(
            network=network_config_from_dict(doc["network"]),
            loss=LossConfig(
                occl_weight=float(loss_doc.get("occl_weight", 0.5)),
                margin=float(loss_doc.get("margin", 3.0)),
                center_update_rate=float(loss_doc.get("center_update_rate", 0.5)),
            ),
            epochs=int(doc.get("epochs", 50)),
            batch_size=int(doc.get("batch_size", 32)),
            lr=float(doc.get("lr", 1e-4)),
            weight_decay=float(doc.get("weight_decay", 1e-5)),
            seed=int(doc.get("seed", 0)),
            channel_subset=(tuple(doc["channel_subset"])
                            if doc.get("channel_subset") else None),
            model_selection=str(doc.get("model_selection", "min_dev_loss")),
            mad_k=(float(doc["mad_k"]) if doc.get("mad_k") is not None else None),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad train config: {exc}") from exc
    cfg.validate()
    return cfg


def em_config_to_dict(cfg: EmConfig) -> dict:
    return {
        "n_components": cfg.n_components,
        "max_iters": cfg.max_iters,
        "rel_tol": cfg.rel_tol,
        "cov_reg": cfg.cov_reg,
        "seed": cfg.seed,
        "init": cfg.init,
    }


def em_config_from_dict(doc: dict) -> EmConfig:
    try:
        cfg = EmConfig(
            n_components=int(doc.get("n_components", 5)),
            max_iters=int(doc.get("max_iters", 200)),
            rel_tol=float(doc.get("rel_tol", 1e-6)),
            cov_reg=float(doc.get("cov_reg", 1e-6)),
            seed=int(doc.get("seed", 0)),
            init=str(doc.get("init", "kmeans")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad EM config: {exc}") from exc
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Binary persistence. Both files share the same framing: a 4-byte magic,
# a little-endian u32 format version, one length-prefixed JSON document,
# then length-prefixed float64 tensors in declaration order.
# ---------------------------------------------------------------------------

def _write_block(fh, payload: bytes) -> None:
    fh.write(struct.pack("<Q", len(payload)))
    fh.write(payload)


class _Reader:
    def __init__(self, blob: bytes, what: str):
        self.blob = blob
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"truncated {self.what} file")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def block(self, max_len: int = 1 << 31) -> bytes:
        (n,) = struct.unpack("<Q", self.take(8))
        if n > max_len or self.pos + n > len(self.blob):
            raise CheckpointError(f"corrupted length field in {self.what} file")
        return self.take(n)

    def done(self) -> None:
        if self.pos != len(self.blob):
            raise CheckpointError(f"trailing bytes in {self.what} file")


def _check_header(reader: _Reader, magic: bytes) -> None:
    if reader.take(4) != magic:
        raise CheckpointError(f"bad magic, not a {reader.what} file")
    (version,) = struct.unpack("<I", reader.take(4))
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported {reader.what} format version {version} "
            f"(this build reads version {FORMAT_VERSION})")


def _tensor_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _tensor_from(raw: bytes, shape: tuple[int, ...], what: str) -> np.ndarray:
    expected = int(np.prod(shape)) * 8
    if len(raw) != expected:
        raise CheckpointError(
            f"tensor size mismatch in {what} file: got {len(raw)} bytes, "
            f"expected {expected}")
    return np.frombuffer(raw, dtype="<f8").astype(float).reshape(shape)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    doc = {
        "train_config": train_config_to_dict(ckpt.train_config),
        "network_config": network_config_to_dict(ckpt.network_config),
        "center": {"alpha": ckpt.center.alpha, "initialized": ckpt.center.initialized},
        "history": ckpt.history,
        "selected_epoch": ckpt.selected_epoch,
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", ckpt.version))
        _write_block(fh, json.dumps(doc, sort_keys=True).encode("utf-8"))
        for name, _ in ckpt.network_config.layer_shapes():
            _write_block(fh, _tensor_bytes(ckpt.params.tensors[name]))
        _write_block(fh, _tensor_bytes(ckpt.center.center))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), "checkpoint")
    _check_header(reader, CHECKPOINT_MAGIC)
    try:
        doc = json.loads(reader.block().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint metadata: {exc}")
    train_cfg = train_config_from_dict(doc["train_config"])
    net_cfg = network_config_from_dict(doc["network_config"])
    tensors = {
        name: _tensor_from(reader.block(), shape, "checkpoint")
        for name, shape in net_cfg.layer_shapes()
    }
    center_vec = _tensor_from(reader.block(), (net_cfg.embedding_dim,), "checkpoint")
    reader.done()
    return Checkpoint(
        version=FORMAT_VERSION,
        params=NetworkParams(net_cfg, tensors),
        center=BonafideCenter(center_vec, float(doc["center"]["alpha"]),
                              bool(doc["center"]["initialized"])),
        train_config=train_cfg,
        history=doc["history"],
        selected_epoch=int(doc["selected_epoch"]),
    )


def save_gmm(gmm: GmmParams, path) -> None:
    doc = {"n_components": gmm.n_components, "dim": gmm.dim}
    with open(path, "wb") as fh:
        fh.write(GMM_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        _write_block(fh, json.dumps(doc, sort_keys=True).encode("utf-8"))
        _write_block(fh, _tensor_bytes(gmm.weights))
        _write_block(fh, _tensor_bytes(gmm.means))
        _write_block(fh, _tensor_bytes(gmm.covariances))


def load_gmm(path) -> GmmParams:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), "GMM")
    _check_header(reader, GMM_MAGIC)
    try:
        doc = json.loads(reader.block().decode("utf-8"))
        K, d = int(doc["n_components"]), int(doc["dim"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise CheckpointError(f"unreadable GMM metadata: {exc}")
    weights = _tensor_from(reader.block(), (K,), "GMM")
    means = _tensor_from(reader.block(), (K, d), "GMM")
    covs = _tensor_from(reader.block(), (K, d, d), "GMM")
    reader.done()
    gmm = GmmParams(weights, means, covs)
    gmm.validate()
    return gmm


# ---------------------------------------------------------------------------
# CSV / JSON artifacts.
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_embeddings_csv(rows: list[tuple[int, np.ndarray]], path) -> None:
    """``id,e1,...,eN`` with 17 significant digits (lossless round trip)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if rows:
            dim = len(rows[0][1])
            fh.write("id," + ",".join(f"e{i + 1}" for i in range(dim)) + "\n")
            for sid, emb in rows:
                fh.write(str(sid) + "," + ",".join(_fmt(v) for v in emb) + "\n")


def read_embeddings_csv(path) -> list[tuple[int, np.ndarray]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln]
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        out.append((int(parts[0]), np.array([float(v) for v in parts[1:]])))
    return out


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def report_table(report: MetricsReport, title: str = "") -> str:
    """Aligned text table with percentages at one decimal place."""

    def pct(x: float) -> str:
        return f"{100.0 * x:.1f}"

    rows = [
        ("", "APCER (%)", "BPCER (%)", "ACER (%)"),
        ("dev", pct(report.dev_apcer), pct(report.dev_bpcer), pct(report.dev_acer)),
        ("eval", pct(report.eval_apcer), pct(report.eval_bpcer), pct(report.eval_acer)),
    ]
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = [title] if title else []
    for r in rows:
        lines.append("  ".join(v.rjust(w) for v, w in zip(r, widths)))
    lines.append(f"eval EER (%): {pct(report.eer)}   threshold: {report.threshold:.6g}")
    return "\n".join(lines) + "\n"
