"""ISO/IEC 30107-3 style evaluation: APCER, BPCER, ACER, EER, DET points.

Scores are oriented so that higher means more bonafide-like, and the
decision rule is ``score >= threshold -> bonafide``. All sweeps run over
a finite candidate set that covers every distinct classifier behaviour:
midpoints of adjacent sorted unique scores plus one sentinel below the
minimum and one above the maximum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricError

BONAFIDE = 1
ATTACK = 0


@dataclass(frozen=True)
class ScoredSet:
    """Aligned scores and {0,1} labels (1 = bonafide)."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        y = np.asarray(self.labels, dtype=int)
        if s.ndim != 1 or s.shape != y.shape:
            raise MetricError("scores and labels must be aligned 1-d arrays")
        if s.size == 0:
            raise MetricError("scored set is empty")
        if not np.all(np.isfinite(s)):
            raise MetricError("scores must be finite")
        if not np.all((y == 0) | (y == 1)):
            raise MetricError("labels must be 0 (attack) or 1 (bonafide)")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y)

    @property
    def bonafide_scores(self) -> np.ndarray:
        return self.scores[self.labels == BONAFIDE]

    @property
    def attack_scores(self) -> np.ndarray:
        return self.scores[self.labels == ATTACK]


@dataclass(frozen=True)
class MetricsReport:
    """Rates at the dev-selected threshold plus eval EER and DET data.

    ``det_points`` rows are (threshold, apcer, bpcer) for the eval set.
    Every acer is exactly (apcer + bpcer) / 2.
    """

    threshold: float
    dev_apcer: float
    dev_bpcer: float
    dev_acer: float
    eval_apcer: float
    eval_bpcer: float
    eval_acer: float
    eer: float
    eer_threshold: float
    det_points: list[tuple[float, float, float]]

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "dev": {"apcer": self.dev_apcer, "bpcer": self.dev_bpcer, "acer": self.dev_acer},
            "eval": {"apcer": self.eval_apcer, "bpcer": self.eval_bpcer,
                     "acer": self.eval_acer},
            "eer": self.eer,
            "eer_threshold": self.eer_threshold,
            "det_points": [list(p) for p in self.det_points],
        }


def _require_both_classes(s: ScoredSet) -> None:
    if s.bonafide_scores.size == 0:
        raise MetricError("no bonafide samples in scored set")
    if s.attack_scores.size == 0:
        raise MetricError("no attack samples in scored set")


def compute_rates(s: ScoredSet, tau: float) -> tuple[float, float, float]:
    """(apcer, bpcer, acer) at threshold tau under score >= tau -> bonafide."""
    _require_both_classes(s)
    attacks = s.attack_scores
    bona = s.bonafide_scores
    apcer = np.count_nonzero(attacks >= tau) / attacks.size
    bpcer = np.count_nonzero(bona < tau) / bona.size
    return apcer, bpcer, (apcer + bpcer) / 2.0


def candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    """Midpoints of adjacent sorted unique scores plus outer sentinels."""
    u = np.unique(np.asarray(scores, dtype=float))
    mids = (u[:-1] + u[1:]) / 2.0
    return np.concatenate(([u[0] - 1.0], mids, [u[-1] + 1.0]))


def select_threshold(dev: ScoredSet, target_bpcer: float) -> float:
    """Largest candidate threshold keeping dev BPCER at or under the target.

    The below-minimum sentinel (BPCER 0) always qualifies, so a threshold
    always exists. With N bonafide samples, at most floor(target * N) of
    them score below the returned threshold.
    """
    if not 0.0 < target_bpcer < 1.0:
        raise MetricError(f"target_bpcer must be in (0,1), got {target_bpcer}")
    bona = dev.bonafide_scores
    if bona.size == 0:
        raise MetricError("no bonafide samples in dev set")
    cands = candidate_thresholds(dev.scores)
    bona_sorted = np.sort(bona)
    bpcer = np.searchsorted(bona_sorted, cands, side="left") / bona.size
    feasible = np.nonzero(bpcer <= target_bpcer)[0]
    return float(cands[feasible[-1]])


def eer(s: ScoredSet) -> tuple[float, float]:
    """Equal error rate and the threshold achieving it.

    Sweeps all candidate thresholds, picks the one minimizing
    |apcer - bpcer| (ties: smaller apcer + bpcer, then lower threshold)
    and reports (apcer + bpcer) / 2 there.
    """
    _require_both_classes(s)
    attacks_sorted = np.sort(s.attack_scores)
    bona_sorted = np.sort(s.bonafide_scores)
    cands = candidate_thresholds(s.scores)
    n_below = np.searchsorted(attacks_sorted, cands, side="left")
    apcer = (attacks_sorted.size - n_below) / attacks_sorted.size
    bpcer = np.searchsorted(bona_sorted, cands, side="left") / bona_sorted.size
    diffs = np.abs(apcer - bpcer)
    sums = apcer + bpcer
    best = np.lexsort((sums, diffs))[0]
    return (apcer[best] + bpcer[best]) / 2.0, float(cands[best])


def det_points(s: ScoredSet) -> list[tuple[float, float, float]]:
    """(threshold, apcer, bpcer) at every unique score plus an above-max point.

    Sorted by threshold; apcer is non-increasing and bpcer non-decreasing
    along the list.
    """
    _require_both_classes(s)
    u = np.unique(s.scores)
    thresholds = np.concatenate((u, [u[-1] + 1.0]))
    attacks_sorted = np.sort(s.attack_scores)
    bona_sorted = np.sort(s.bonafide_scores)
    n_below = np.searchsorted(attacks_sorted, thresholds, side="left")
    apcer = (attacks_sorted.size - n_below) / attacks_sorted.size
    bpcer = np.searchsorted(bona_sorted, thresholds, side="left") / bona_sorted.size
    return [(float(t), float(a), float(b)) for t, a, b in zip(thresholds, apcer, bpcer)]


def write_det_csv(points: list[tuple[float, float, float]], path) -> None:
    """Export DET points with the ``threshold,apcer,bpcer`` header."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("threshold,apcer,bpcer\n")
        for t, a, b in points:
            fh.write(f"{t:.17g},{a:.17g},{b:.17g}\n")


def build_report(
    dev: ScoredSet, evl: ScoredSet, target_bpcer: float = 0.01
) -> MetricsReport:
    """Dev-anchored threshold, rates on both sets, eval EER and DET points."""
    tau = select_threshold(dev, target_bpcer)
    dev_a, dev_b, dev_c = compute_rates(dev, tau)
    ev_a, ev_b, ev_c = compute_rates(evl, tau)
    eer_value, eer_tau = eer(evl)
    return MetricsReport(
        threshold=tau,
        dev_apcer=dev_a, dev_bpcer=dev_b, dev_acer=dev_c,
        eval_apcer=ev_a, eval_bpcer=ev_b, eval_acer=ev_c,
        eer=eer_value, eer_threshold=eer_tau,
        det_points=det_points(evl),
    )
