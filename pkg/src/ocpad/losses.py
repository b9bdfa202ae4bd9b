"""Training objectives for one-class representation learning.

Binary cross-entropy on the sigmoid output, an auxiliary one-class
contrastive term that pulls bonafide embeddings toward a running class
center and pushes attack embeddings beyond a margin, their convex
combination, and a plain center loss kept as a baseline objective.
Labels follow y=1 for bonafide, y=0 for attack throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, InputError


@dataclass(frozen=True)
class LossConfig:
    """Weights of the combined objective.

    occl_weight blends cross-entropy against the one-class contrastive
    term (0 = pure BCE, 1 = pure contrastive). margin is the radius
    beyond which attack embeddings stop contributing. center_update_rate
    is the per-batch pull of the running bonafide center toward the
    batch mean, in [0, 1].
    """

    occl_weight: float = 0.5
    margin: float = 3.0
    center_update_rate: float = 0.5

    def validate(self) -> None:
        if not 0.0 <= self.occl_weight <= 1.0:
            raise ConfigurationError(f"occl_weight must be in [0,1], got {self.occl_weight}")
        if self.margin <= 0.0:
            raise ConfigurationError(f"margin must be > 0, got {self.margin}")
        if not 0.0 <= self.center_update_rate <= 1.0:
            raise ConfigurationError(
                f"center_update_rate must be in [0,1], got {self.center_update_rate}"
            )


@dataclass(frozen=True)
class BonafideCenter:
    """Running center of bonafide embeddings (immutable snapshot)."""

    center: np.ndarray
    alpha: float = 0.5
    initialized: bool = False

    @staticmethod
    def empty(dim: int, alpha: float = 0.5) -> "BonafideCenter":
        return BonafideCenter(np.zeros(dim), alpha, initialized=False)


def bce_loss(p: float, y: int) -> tuple[float, float]:
    """Binary cross-entropy and its derivative w.r.t. the probability.

    loss = -(y*ln(p) + (1-y)*ln(1-p)); requires 0 < p < 1.
    """
    if not 0.0 < p < 1.0:
        raise InputError(f"probability must be in (0,1), got {p}")
    if y not in (0, 1):
        raise InputError(f"label must be 0 or 1, got {y}")
    loss = -(y * np.log(p) + (1 - y) * np.log1p(-p))
    grad = -(y / p) + (1 - y) / (1.0 - p)
    return float(loss), float(grad)


def bce_loss_batch(p: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`bce_loss` over aligned probability/label arrays."""
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    if p.shape != y.shape:
        raise InputError("probabilities and labels must be aligned")
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise InputError("probabilities must be in (0,1)")
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    grad = -(y / p) + (1.0 - y) / (1.0 - p)
    return loss, grad


def distance_to_center(x: np.ndarray, center: np.ndarray) -> float:
    """Euclidean distance of an embedding from the bonafide center."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(center, dtype=float)
    if x.shape != c.shape:
        raise InputError(f"dimension mismatch: {x.shape} vs {c.shape}")
    return float(np.linalg.norm(x - c))


def occl_loss(
    x: np.ndarray, center: np.ndarray, y: int, margin: float
) -> tuple[float, np.ndarray]:
    """One-class contrastive loss for a single embedding, with gradient.

    Bonafide (y=1): 0.5 * dc^2, pulling the embedding toward the center.
    Attack (y=0): 0.5 * max(0, margin - dc)^2, pushing it out to the
    margin; attacks at or beyond the margin contribute nothing. dc is the
    Euclidean distance to the center. The gradient at dc == 0 for an
    attack is defined as zero.
    """
    if margin <= 0.0:
        raise ConfigurationError(f"margin must be > 0, got {margin}")
    if y not in (0, 1):
        raise InputError(f"label must be 0 or 1, got {y}")
    x = np.asarray(x, dtype=float)
    c = np.asarray(center, dtype=float)
    diff = x - c
    dc = float(np.linalg.norm(diff))
    if y == 1:
        return 0.5 * dc * dc, diff
    if dc >= margin:
        return 0.0, np.zeros_like(diff)
    if dc == 0.0:
        return 0.5 * margin * margin, np.zeros_like(diff)
    gap = margin - dc
    return 0.5 * gap * gap, -gap * diff / dc


def occl_loss_batch(
    embeddings: np.ndarray, center: np.ndarray, labels: np.ndarray, margin: float
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`occl_loss`: per-sample losses and embedding gradients."""
    if margin <= 0.0:
        raise ConfigurationError(f"margin must be > 0, got {margin}")
    X = np.asarray(embeddings, dtype=float)
    y = np.asarray(labels, dtype=float)
    diff = X - np.asarray(center, dtype=float)[None, :]
    dc = np.linalg.norm(diff, axis=1)
    gap = np.maximum(0.0, margin - dc)
    loss = y * 0.5 * dc * dc + (1.0 - y) * 0.5 * gap * gap
    safe_dc = np.where(dc > 0.0, dc, 1.0)
    push = np.where((dc > 0.0) & (dc < margin), -gap / safe_dc, 0.0)
    grad = (y + (1.0 - y) * push)[:, None] * diff
    return loss, grad


def combined_loss(bce: float, occl: float, occl_weight: float) -> float:
    """(1 - w) * bce + w * occl; the endpoints reproduce each term exactly."""
    if not 0.0 <= occl_weight <= 1.0:
        raise InputError(f"occl_weight must be in [0,1], got {occl_weight}")
    if not (np.isfinite(bce) and np.isfinite(occl)):
        raise InputError("loss terms must be finite")
    if occl_weight == 0.0:
        return float(bce)
    if occl_weight == 1.0:
        return float(occl)
    return (1.0 - occl_weight) * bce + occl_weight * occl


def update_center(
    c: BonafideCenter, bonafide_embeddings: list[np.ndarray] | np.ndarray, alpha: float
) -> BonafideCenter:
    """Move the center toward the mean of the batch bonafide embeddings.

    c_new = (1 - alpha) * c_old + alpha * mean; an uninitialized center is
    set to the mean directly, and an empty batch leaves it untouched.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InputError(f"alpha must be in [0,1], got {alpha}")
    X = np.asarray(bonafide_embeddings, dtype=float)
    if X.size == 0:
        return c
    if X.ndim == 1:
        X = X[None, :]
    mean = X.mean(axis=0)
    if not c.initialized:
        return BonafideCenter(mean, alpha, initialized=True)
    if mean.shape != c.center.shape:
        raise InputError(f"dimension mismatch: {mean.shape} vs {c.center.shape}")
    return replace(c, center=(1.0 - alpha) * c.center + alpha * mean, initialized=True)


def center_loss(
    embeddings: np.ndarray, labels: np.ndarray, class_centers: dict[int, np.ndarray]
) -> float:
    """Classic center loss: 0.5 * sum_i ||x_i - c_{y_i}||^2 (baseline objective)."""
    X = np.asarray(embeddings, dtype=float)
    y = np.asarray(labels)
    if len(X) != len(y):
        raise InputError("embeddings and labels must be aligned")
    total = 0.0
    for xi, yi in zip(X, y):
        key = int(yi)
        if key not in class_centers:
            raise InputError(f"no center for label {key}")
        d = xi - np.asarray(class_centers[key], dtype=float)
        total += 0.5 * float(d @ d)
    return total
