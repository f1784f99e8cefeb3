"""Specialist ensemble: training, inference and prediction aggregation.

Three classifiers of the same architecture are trained, one per sub-sampling
mechanism, each only ever seeing its own kind of partial cloud but always
judged against the full cloud's label. At inference a cloud is expanded into
3*k_tilde members (patches, curves, randoms), each routed to its specialist;
the resulting prediction matrix is collapsed by column mean (default) or by
majority vote.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .classifier import (
    PointSetModel,
    TrainConfig,
    cosine_lr,
    load_checkpoint,
    loss_and_gradients,
    make_update_fn,
    new_model,
    predict_batch,
    save_checkpoint,
)
from .data import augment, write_text_atomic
from .errors import NonFiniteLossError
from .geometry import as_cloud, fps, pairwise_knn_table
from .metrics import prediction_entropy
from .sampling import (
    SampleKind,
    SamplingParams,
    SubSample,
    extract_curve,
    extract_patch,
    extract_random,
    make_ensemble_inputs,
)
from .seeding import choose_without_replacement, subseed, substream

KIND_ORDER = (SampleKind.PATCH, SampleKind.CURVE, SampleKind.RANDOM)


@dataclass
class SpecialistEnsemble:
    patch_model: PointSetModel
    curve_model: PointSetModel
    random_model: PointSetModel
    params: SamplingParams

    def __post_init__(self):
        counts = {m.n_classes for m in self.models()}
        if len(counts) != 1:
            raise ValueError(f"specialists disagree on class count: {sorted(counts)}")

    def models(self) -> tuple[PointSetModel, PointSetModel, PointSetModel]:
        return (self.patch_model, self.curve_model, self.random_model)

    def model_for(self, kind: SampleKind) -> PointSetModel:
        return self.models()[KIND_ORDER.index(kind)]

    @property
    def n_classes(self) -> int:
        return self.patch_model.n_classes


def train_specialists(
    dataset: Sequence[tuple[np.ndarray, int]],
    params: SamplingParams,
    config: TrainConfig,
    anchor_mode: str = "random",
    encoder_widths: Sequence[int] = (64, 128),
    head_widths: Sequence[int] = (64,),
    n_classes: int | None = None,
    loss_log: dict[str, list[float]] | None = None,
) -> SpecialistEnsemble:
    """Train the three specialists simultaneously over the same sample visits.

    Each epoch walks the shuffled training set; every visit augments the full
    cloud (when enabled), picks k_tilde anchors, and hands one patch, one
    curve and one random subset per anchor to the matching specialist, all
    labeled with the parent cloud's class. Anchors are chosen uniformly at
    random by default; ``anchor_mode="fps"`` switches to farthest-point
    anchors seeded by a random start.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if anchor_mode not in ("random", "fps"):
        raise ValueError(f"anchor_mode must be 'random' or 'fps', got {anchor_mode!r}")
    if n_classes is None:
        n_classes = max(label for _, label in dataset) + 1

    models = {
        kind: new_model(
            n_classes,
            encoder_widths,
            head_widths,
            seed=subseed(config.seed, "specialist-init", kind.value),
        )
        for kind in KIND_ORDER
    }
    updates = {kind: make_update_fn(models[kind], config) for kind in KIND_ORDER}

    rng = substream(config.seed, "specialists")
    n = len(dataset)
    buffers: dict[SampleKind, list[tuple[np.ndarray, int]]] = {k: [] for k in KIND_ORDER}

    def step(kind: SampleKind, lr: float, where: str) -> float:
        batch = buffers[kind]
        loss, grads = loss_and_gradients(models[kind], batch)
        if not np.isfinite(loss):
            raise NonFiniteLossError(f"{kind.value} specialist: non-finite loss at {where}")
        updates[kind](grads, lr)
        buffers[kind] = []
        return loss

    for epoch in range(config.epochs):
        lr = cosine_lr(config.learning_rate, epoch, config.epochs)
        epoch_losses = {kind: 0.0 for kind in KIND_ORDER}
        steps = 0
        for visit, i in enumerate(rng.permutation(n)):
            pts, label = dataset[i]
            if config.augment:
                pts = augment(pts, rng)
            pts = as_cloud(pts)
            n_pts = pts.shape[0]
            if anchor_mode == "random":
                anchors = choose_without_replacement(rng, n_pts, params.k_tilde)
            else:
                anchors = fps(pts, params.k_tilde, int(rng.integers(n_pts)))
            table = pairwise_knn_table(pts, params.m_neighbors)
            for a in anchors:
                buffers[SampleKind.PATCH].append((extract_patch(pts, int(a), params).points, label))
                buffers[SampleKind.CURVE].append(
                    (extract_curve(pts, int(a), params, rng, table).points, label)
                )
                buffers[SampleKind.RANDOM].append((extract_random(pts, params, rng).points, label))
            if len(buffers[SampleKind.PATCH]) >= config.batch_size:
                for kind in KIND_ORDER:
                    epoch_losses[kind] += step(kind, lr, f"epoch {epoch}, visit {visit}")
                steps += 1
        if buffers[SampleKind.PATCH]:
            for kind in KIND_ORDER:
                epoch_losses[kind] += step(kind, lr, f"epoch {epoch}, tail")
            steps += 1
        if loss_log is not None:
            for kind in KIND_ORDER:
                loss_log.setdefault(kind.value, []).append(epoch_losses[kind] / steps)

    return SpecialistEnsemble(
        models[SampleKind.PATCH],
        models[SampleKind.CURVE],
        models[SampleKind.RANDOM],
        params,
    )


def member_matrix(ensemble: SpecialistEnsemble, members: Sequence[SubSample]) -> np.ndarray:
    """(K, C) prediction matrix for already-extracted members, one row each."""
    rows = []
    for kind in KIND_ORDER:
        group = [m for m in members if m.kind is kind]
        if group:
            stack = np.stack([m.points for m in group])
            rows.append(predict_batch(ensemble.model_for(kind), stack))
    return np.concatenate(rows, axis=0)


def predict(
    ensemble: SpecialistEnsemble, points, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, int]:
    """Ensemble inference on one cloud.

    Returns the (3*k_tilde, C) prediction matrix in [patches, curves,
    randoms] row order, the column-mean prediction vector, and the winning
    class (lowest index on ties).
    """
    members = make_ensemble_inputs(points, ensemble.params, rng)
    matrix = member_matrix(ensemble, members)
    mean = aggregate_mean(matrix)
    return matrix, mean, int(np.argmax(mean))


def aggregate_mean(matrix: np.ndarray) -> np.ndarray:
    """Column-wise arithmetic mean of the prediction matrix."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 1:
        raise ValueError(f"prediction matrix must be (K, C) with K >= 1, got {matrix.shape}")
    return matrix.mean(axis=0)


def aggregate_majority(matrix: np.ndarray) -> int:
    """Plurality vote over per-row argmax classes.

    Vote ties are broken by the higher mean probability over the tied
    classes, then by the lowest class index.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 1:
        raise ValueError(f"prediction matrix must be (K, C) with K >= 1, got {matrix.shape}")
    votes = np.bincount(np.argmax(matrix, axis=1), minlength=matrix.shape[1])
    tied = np.flatnonzero(votes == votes.max())
    if tied.size == 1:
        return int(tied[0])
    mean = matrix.mean(axis=0)
    best = tied[mean[tied] == mean[tied].max()]
    return int(best[0])


def curve_exposure_profile(
    ensemble: SpecialistEnsemble, points, n_original: int, rng: np.random.Generator
) -> list[tuple[float, float]]:
    """(corrupted fraction, prediction entropy) per curve member of one cloud.

    ``n_original`` is the size of the clean prefix; walk positions with source
    index at or beyond it sit on appended (corrupted) points. Duplicated walk
    positions count every time they occur.
    """
    members = make_ensemble_inputs(points, ensemble.params, rng)
    curves = [m for m in members if m.kind is SampleKind.CURVE]
    probs = predict_batch(ensemble.curve_model, np.stack([m.points for m in curves]))
    return [
        (float(np.mean(m.source_indices >= n_original)), prediction_entropy(p))
        for m, p in zip(curves, probs)
    ]


_CHECKPOINT_FILES = {
    SampleKind.PATCH: "patch.ckpt",
    SampleKind.CURVE: "curve.ckpt",
    SampleKind.RANDOM: "random.ckpt",
}


def save_ensemble(ensemble: SpecialistEnsemble, directory, extra: dict | None = None) -> None:
    """Write the three specialist checkpoints plus a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for kind in KIND_ORDER:
        save_checkpoint(ensemble.model_for(kind), directory / _CHECKPOINT_FILES[kind])
    manifest = {
        "sampling": asdict(ensemble.params),
        "n_classes": ensemble.n_classes,
        "checkpoints": {k.value: name for k, name in _CHECKPOINT_FILES.items()},
    }
    if extra:
        manifest.update(extra)
    write_text_atomic(directory / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))


def load_ensemble(directory) -> SpecialistEnsemble:
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        manifest = json.load(fh)
    params = SamplingParams(**manifest["sampling"])
    models = {
        kind: load_checkpoint(directory / manifest["checkpoints"][kind.value])
        for kind in KIND_ORDER
    }
    return SpecialistEnsemble(
        models[SampleKind.PATCH], models[SampleKind.CURVE], models[SampleKind.RANDOM], params
    )
