"""Hard decisions, FA/MD statistics, threshold calibration, ROC, and cluster majority fusion."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import extract_features
from .dmlp import MlpModel, predict
from .numerics import SeededRng

__all__ = [
    "UndefinedCurveError",
    "DetectionReport",
    "RocCurve",
    "ClusterConfig",
    "threshold_grid",
    "hard_decision",
    "rates",
    "error_probability",
    "calibrate_threshold",
    "roc",
    "roc_from_decisions",
    "pairwise_auc",
    "select_cluster",
    "majority_fuse",
    "cluster_detect",
    "cluster_probs",
    "fused_roc",
]


class UndefinedCurveError(ValueError):
    pass


def threshold_grid(step: float = 0.01) -> np.ndarray:
    """{0, step, 2 step, ..., 1}."""
    if not 0.0 < step <= 0.5:
        raise ValueError("grid step must lie in (0, 0.5]")
    n = int(round(1.0 / step))
    grid = np.round(np.arange(n + 1) * step, 12)
    if grid[-1] < 1.0:
        grid = np.append(grid, 1.0)
    return np.minimum(grid, 1.0)


def hard_decision(probs, tau: float) -> np.ndarray:
    """1 where the score reaches the threshold (inclusive), else 0."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    return (np.asarray(probs) >= tau).astype(np.uint8)


@dataclass(frozen=True)
class DetectionReport:
    tp: int
    fp: int
    tn: int
    fn: int
    epsilon: float | None = None

    @property
    def p_fa(self) -> float:
        """FP / (FP + TN); NaN when no inactive entries were observed."""
        neg = self.fp + self.tn
        return self.fp / neg if neg else math.nan

    @property
    def p_md(self) -> float:
        pos = self.fn + self.tp
        return self.fn / pos if pos else math.nan

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / (self.tp + self.fp + self.tn + self.fn)

    @property
    def undefined(self) -> tuple[str, ...]:
        """Names of the rates that have no support in the ground truth."""
        out = []
        if self.fp + self.tn == 0:
            out.append("p_fa")
        if self.fn + self.tp == 0:
            out.append("p_md")
        return tuple(out)

    @property
    def p_error(self) -> float:
        eps = self.epsilon
        if eps is None:
            total = self.tp + self.fp + self.tn + self.fn
            eps = (self.tp + self.fn) / total
        return error_probability(self.p_fa, self.p_md, eps)


def rates(decisions, truth, epsilon: float | None = None) -> DetectionReport:
    d = np.asarray(decisions).astype(bool)
    a = np.asarray(truth).astype(bool)
    if d.shape != a.shape:
        raise ValueError(f"shape mismatch: decisions {d.shape} vs truth {a.shape}")
    return DetectionReport(
        tp=int(np.sum(d & a)), fp=int(np.sum(d & ~a)),
        tn=int(np.sum(~d & ~a)), fn=int(np.sum(~d & a)), epsilon=epsilon,
    )


def error_probability(p_fa: float, p_md: float, epsilon: float) -> float:
    return (1.0 - epsilon) * p_fa + epsilon * p_md


def _counts_over_grid(scores, truth, grid):
    """Positive-decision counts per threshold, split by ground truth."""
    s = np.asarray(scores, dtype=float).ravel()
    a = np.asarray(truth).astype(bool).ravel()
    pos = np.sort(s[a])
    neg = np.sort(s[~a])
    # number of scores >= tau
    tp = pos.size - np.searchsorted(pos, grid, side="left")
    fp = neg.size - np.searchsorted(neg, grid, side="left")
    return tp, fp, pos.size, neg.size


def calibrate_threshold(scores, truth, epsilon: float, step: float = 0.01):
    """Grid search for the threshold minimising P_E; ties go to the smallest tau.

    Returns ``(tau_star, table)`` where ``table`` has columns tau, p_fa, p_md, p_e.
    """
    grid = threshold_grid(step)
    tp, fp, n_pos, n_neg = _counts_over_grid(scores, truth, grid)
    if n_pos + n_neg == 0:
        raise ValueError("calibration set is empty")
    p_fa = fp / n_neg if n_neg else np.full(grid.shape, np.nan)
    p_md = (n_pos - tp) / n_pos if n_pos else np.full(grid.shape, np.nan)
    p_e = (1.0 - epsilon) * np.nan_to_num(p_fa) + epsilon * np.nan_to_num(p_md)
    table = np.column_stack([grid, p_fa, p_md, p_e])
    return float(grid[int(np.argmin(p_e))]), table


@dataclass(frozen=True)
class RocCurve:
    tau: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    def to_csv(self) -> str:
        lines = ["# units: tau=probability, fpr=probability, tpr=probability", "tau,fpr,tpr"]
        lines += [f"{t!r},{f!r},{p!r}" for t, f, p in zip(self.tau, self.fpr, self.tpr)]
        return "\n".join(lines) + "\n"


def _trapezoid_auc(fpr, tpr):
    order = np.lexsort((tpr, fpr))
    x, y = fpr[order], tpr[order]
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def roc(scores, truth, grid=None) -> RocCurve:
    """ROC over a threshold grid; with ``grid=None`` every distinct score is a threshold (exact curve)."""
    s = np.asarray(scores, dtype=float).ravel()
    a = np.asarray(truth).astype(bool).ravel()
    if a.all() or not a.any():
        raise UndefinedCurveError("ROC needs both active and inactive ground-truth entries")
    if grid is None:
        grid = np.concatenate([[0.0], np.unique(s), [np.nextafter(max(1.0, s.max()), np.inf)]])
    grid = np.asarray(grid, dtype=float)
    tp, fp, n_pos, n_neg = _counts_over_grid(s, a, grid)
    tpr = tp / n_pos
    fpr = fp / n_neg
    # close the curve at both corners
    fpr_c = np.concatenate([[1.0], fpr, [0.0]])
    tpr_c = np.concatenate([[1.0], tpr, [0.0]])
    return RocCurve(tau=grid, fpr=fpr, tpr=tpr, auc=_trapezoid_auc(fpr_c, tpr_c))


def roc_from_decisions(tau, decisions_per_tau, truth) -> RocCurve:
    """ROC from precomputed decisions, shape (len(tau), ...) matching ``truth``."""
    a = np.asarray(truth).astype(bool)
    if a.all() or not a.any():
        raise UndefinedCurveError("ROC needs both active and inactive ground-truth entries")
    d = np.asarray(decisions_per_tau).astype(bool)
    axes = tuple(range(1, d.ndim))
    tpr = np.sum(d & a, axis=axes) / a.sum()
    fpr = np.sum(d & ~a, axis=axes) / (~a).sum()
    fpr_c = np.concatenate([[1.0], fpr, [0.0]])
    tpr_c = np.concatenate([[1.0], tpr, [0.0]])
    return RocCurve(tau=np.asarray(tau, dtype=float), fpr=fpr, tpr=tpr, auc=_trapezoid_auc(fpr_c, tpr_c))


def pairwise_auc(scores, truth) -> float:
    """Fraction of (active, inactive) pairs ordered correctly, ties counted half."""
    s = np.asarray(scores, dtype=float).ravel()
    a = np.asarray(truth).astype(bool).ravel()
    pos, neg = s[a], s[~a]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedCurveError("AUC needs both classes")
    diff = pos[:, None] - neg[None, :]
    return float((np.sum(diff > 0) + 0.5 * np.sum(diff == 0)) / diff.size)


@dataclass(frozen=True)
class ClusterConfig:
    ap_ids: tuple[int, ...]

    def __post_init__(self):
        if len(self.ap_ids) < 1 or len(set(self.ap_ids)) != len(self.ap_ids):
            raise ValueError("cluster needs at least one AP and distinct ids")

    @property
    def size(self) -> int:
        return len(self.ap_ids)


def select_cluster(M: int, T: int, rng: SeededRng) -> ClusterConfig:
    """T distinct APs drawn uniformly without replacement."""
    if not 1 <= T <= M:
        raise ValueError(f"cluster size T={T} must lie in [1, M={M}]")
    return ClusterConfig(tuple(int(i) for i in rng.choice(M, T, replace=False)))


def majority_fuse(votes) -> np.ndarray:
    """Fuse T x K hard decisions: active when at least ceil(T/2) APs vote active.

    That is T/2 votes for even T and the strict majority (T+1)/2 for odd T.
    Extra leading axes are allowed; the AP axis is the second to last.
    """
    v = np.asarray(votes)
    if v.ndim < 2:
        raise ValueError("votes must be T x K")
    T = v.shape[-2]
    return (v.astype(np.int64).sum(axis=-2) >= (T + 1) // 2).astype(np.uint8)


def cluster_probs(model: MlpModel, Y: np.ndarray, cluster: ClusterConfig) -> np.ndarray:
    """T x K detector outputs, one row per cluster AP (``Y`` is M x L x N)."""
    feats = extract_features(Y[list(cluster.ap_ids)])
    return predict(model, feats)


def cluster_detect(model: MlpModel, Y: np.ndarray, cluster: ClusterConfig, tau: float = 0.5) -> np.ndarray:
    """Per-AP detection and hard decision, then majority fusion at the CPU."""
    return majority_fuse(hard_decision(cluster_probs(model, Y, cluster), tau))


def fused_roc(probs: np.ndarray, truth: np.ndarray, grid=None) -> RocCurve:
    """ROC of majority-fused decisions swept over a common per-AP threshold.

    ``probs`` is (slots, T, K); ``truth`` is (slots, K). With ``grid=None``
    every distinct fused score is a threshold.
    """
    p = np.asarray(probs)
    T = p.shape[-2]
    need = (T + 1) // 2
    # the fused decision at tau is (ceil(T/2)-th largest per-AP score >= tau)
    kth = -np.sort(-p, axis=-2)[..., need - 1, :]
    return roc(kth, truth, grid)
