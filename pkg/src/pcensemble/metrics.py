"""Quantitative instruments: accuracy, corruption error, importance, diversity, uniformity.

Corruption error compares a model's per-family error sums against a reference
model's (here: the full-cloud baseline, which scores exactly 1 against
itself); the mean over the seven families is the headline robustness number.
Pointwise importance counts, per point, how many pooled feature columns that
point wins. The diversity measure is the mean normalized squared off-diagonal
mass of the per-sample Pearson correlation matrices of ensemble predictions
(1 = fully correlated members, 0 = uncorrelated). Uniformity measures what
fraction of a cloud a corruption left unmatched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import BadKError, EmptyEvalError, LengthMismatchError, ZeroReferenceError


def overall_accuracy(predictions: Sequence[np.ndarray], labels: Sequence[int]) -> float:
    """Fraction of samples whose argmax prediction equals the label."""
    preds = np.asarray(predictions, dtype=np.float64)
    labs = np.asarray(labels)
    if preds.ndim != 2:
        raise LengthMismatchError(f"predictions must be (S, C), got shape {preds.shape}")
    if preds.shape[0] != labs.shape[0]:
        raise LengthMismatchError(
            f"{preds.shape[0]} predictions vs {labs.shape[0]} labels"
        )
    if preds.shape[0] == 0:
        raise EmptyEvalError("cannot compute accuracy of an empty evaluation")
    return float(np.mean(np.argmax(preds, axis=1) == labs))


def accuracy_of_classes(classes: Sequence[int], labels: Sequence[int]) -> float:
    """Accuracy when predictions are already collapsed to class indices."""
    cls = np.asarray(classes)
    labs = np.asarray(labels)
    if cls.shape != labs.shape:
        raise LengthMismatchError(f"{cls.shape} classes vs {labs.shape} labels")
    if cls.size == 0:
        raise EmptyEvalError("cannot compute accuracy of an empty evaluation")
    return float(np.mean(cls == labs))


def corruption_error(
    model_errors: Mapping[str, Sequence[float]],
    reference_errors: Mapping[str, Sequence[float]],
) -> tuple[dict[str, float], float]:
    """Per-family error-sum ratios against the reference, and their mean.

    Each family maps to its five per-severity error rates. A family's score
    is the ratio of error sums over the severity ladder; the reference model
    therefore scores exactly 1.0 everywhere against itself.
    """
    if set(model_errors) != set(reference_errors):
        raise LengthMismatchError(
            f"family sets differ: {sorted(model_errors)} vs {sorted(reference_errors)}"
        )
    ce: dict[str, float] = {}
    for family in model_errors:
        model = np.asarray(model_errors[family], dtype=np.float64)
        ref = np.asarray(reference_errors[family], dtype=np.float64)
        if model.shape != ref.shape:
            raise LengthMismatchError(
                f"{family}: {model.shape} model levels vs {ref.shape} reference levels"
            )
        ref_sum = float(ref.sum())
        if ref_sum <= 0.0:
            raise ZeroReferenceError(f"{family}: reference error sum is zero")
        ce[family] = float(model.sum()) / ref_sum
    mce = float(np.mean(list(ce.values())))
    return ce, mce


def pointwise_importance(features: np.ndarray) -> np.ndarray:
    """Per-point count of feature columns whose maximum that point attains.

    Argmax ties go to the lowest row index, so the counts always sum to the
    number of feature columns.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
        raise ValueError(f"features must be (N, F) with N, F >= 1, got {feats.shape}")
    winners = np.argmax(feats, axis=0)
    return np.bincount(winners, minlength=feats.shape[0]).astype(np.int64)


def correlation_matrices(matrices: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Per-sample Pearson correlation of prediction rows (across classes).

    Rows with zero variance (constant predictions) carry no directional
    agreement: their off-diagonal correlations are defined as 0, diagonal 1.
    """
    out = []
    for matrix in matrices:
        p = np.asarray(matrix, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 2:
            raise BadKError(f"need a (K, C) matrix with K >= 2, got shape {p.shape}")
        centered = p - p.mean(axis=1, keepdims=True)
        norms = np.sqrt(np.einsum("ij,ij->i", centered, centered))
        safe = np.where(norms > 0.0, norms, 1.0)
        corr = (centered @ centered.T) / np.outer(safe, safe)
        corr[norms == 0.0, :] = 0.0
        corr[:, norms == 0.0] = 0.0
        corr = np.clip(corr, -1.0, 1.0)
        np.fill_diagonal(corr, 1.0)
        out.append(corr)
    return out


def diversity_c(matrices: Sequence[np.ndarray]) -> float:
    """Mean normalized squared off-diagonal correlation mass, in [0, 1].

    1 means every member moves together (an ensemble adds nothing); values
    toward 0 mean decorrelated members. Anti-correlated members also push the
    measure up, since correlations enter squared.
    """
    if len(matrices) == 0:
        raise EmptyEvalError("need at least one prediction matrix")
    total = 0.0
    for corr in correlation_matrices(matrices):
        k = corr.shape[0]
        off = corr - np.eye(k)
        total += float(np.sum(off * off)) / (k * k - k)
    return total / len(matrices)


def mean_correlation_matrix(matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Element-wise mean of the per-sample correlation matrices."""
    if len(matrices) == 0:
        raise EmptyEvalError("need at least one prediction matrix")
    corrs = correlation_matrices(matrices)
    return np.mean(np.stack(corrs), axis=0)


def uniformity(clean, corrupted, epsilon: float = 0.0) -> float:
    """How uniformly a corruption displaced the cloud, in [0, 1].

    Counts clean points that still have a corrupted point within distance
    epsilon (greedy nearest-first matching, each corrupted point used at most
    once); the score is one minus the matched fraction of the larger cloud.
    0 means the cloud is unchanged, 1 means nothing survived within epsilon
    (as with any global transform under exact matching). epsilon=0 demands
    exact coordinate equality.
    """
    a = np.asarray(clean, dtype=np.float64)
    b = np.asarray(corrupted, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] < 1 or b.shape[0] < 1:
        raise ValueError("both clouds must be nonempty (N, 3) arrays")
    n, m = a.shape[0], b.shape[0]
    if epsilon == 0.0:
        matched = _exact_match_count(a, b)
    else:
        matched = _greedy_match_count(a, b, epsilon)
    return 1.0 - matched / max(n, m)


def _exact_match_count(a: np.ndarray, b: np.ndarray) -> int:
    pool: dict[bytes, int] = {}
    for row in b:
        key = row.tobytes()
        pool[key] = pool.get(key, 0) + 1
    matched = 0
    for row in a:
        key = row.tobytes()
        count = pool.get(key, 0)
        if count:
            pool[key] = count - 1
            matched += 1
    return matched


def _greedy_match_count(a: np.ndarray, b: np.ndarray, epsilon: float) -> int:
    diff = a[:, None, :] - b[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    ii, jj = np.nonzero(d2 <= epsilon * epsilon)
    if ii.size == 0:
        return 0
    order = np.lexsort((jj, ii, d2[ii, jj]))
    a_free = np.ones(a.shape[0], dtype=bool)
    b_free = np.ones(b.shape[0], dtype=bool)
    matched = 0
    for idx in order:
        i, j = ii[idx], jj[idx]
        if a_free[i] and b_free[j]:
            a_free[i] = False
            b_free[j] = False
            matched += 1
    return matched


def prediction_entropy(probs: np.ndarray) -> float:
    """Shannon entropy (nats) of a prediction vector; 0 log 0 counts as 0."""
    p = np.asarray(probs, dtype=np.float64)
    nonzero = p > 0.0
    return float(-np.sum(p[nonzero] * np.log(p[nonzero])))


@dataclass
class EvalReport:
    """Evaluation summary for one model against the corruption grid."""

    model_id: str
    overall_accuracy: float
    error_rates: dict[str, list[float]]  # family -> five per-severity error rates
    ce: dict[str, float] | None = None
    mce: float | None = None
    diversity: float | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "overall_accuracy": self.overall_accuracy,
            "error_rates": self.error_rates,
            "ce": self.ce,
            "mce": self.mce,
            "diversity": self.diversity,
            "metadata": self.metadata,
        }
