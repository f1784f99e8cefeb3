"""End-to-end stages behind the CLI subcommands.

Each stage reads earlier stages' outputs from the run directory, writes its
own artifacts atomically, and derives all randomness from named sub-streams
of the root seed, so rerunning any stage with the same resolved config
reproduces its outputs byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import classifier, corruptions, ensemble, metrics
from .config import RunConfig
from .data import (
    LabeledCloud,
    generate_dataset,
    load_dataset,
    save_dataset,
    write_text_atomic,
)
from .errors import BadConfigError, FormatError
from .seeding import subseed, substream

_SCHEDULE_NOTES = {
    "scale": "per-axis factors uniform in [1/r, r], r = 1 + 0.2*s",
    "jitter": "gaussian sigma = 0.01*s per coordinate",
    "rotate": "angle s*pi/12 about a random axis",
    "drop_global": "remove floor(N*0.15*s) uniform points",
    "drop_local": "s clusters of floor(N*0.15) nearest surviving neighbors",
    "add_global": "append floor(N*0.05*s) uniform in-sphere points",
    "add_local": "s gaussian blobs (sigma 0.05) of floor(N*0.05) points",
}


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_resolved_config(cfg: RunConfig, stage: str) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_text_atomic(out / f"{stage}.resolved.cfg", cfg.resolved_text())


def _as_pairs(samples: list[LabeledCloud]) -> list[tuple[np.ndarray, int]]:
    return [(s.points, s.label) for s in samples]


def _n_classes(samples: list[LabeledCloud]) -> int:
    return max(s.label for s in samples) + 1


def run_gen_data(cfg: RunConfig) -> Path:
    """Generate and save the synthetic train/test splits."""
    write_resolved_config(cfg, "gen-data")
    train, test = generate_dataset(cfg.dataset_config())
    root = Path(cfg.out) / "dataset"
    save_dataset(train, root / "train")
    save_dataset(test, root / "test")
    return root


def run_train(cfg: RunConfig) -> Path:
    """Train the full-cloud baseline and the three specialists."""
    write_resolved_config(cfg, "train")
    train_set = load_dataset(Path(cfg.out) / "dataset" / "train")
    pairs = _as_pairs(train_set)
    n_classes = _n_classes(train_set)
    models_dir = Path(cfg.out) / "models"

    baseline = classifier.new_model(
        n_classes, cfg.encoder_widths, cfg.head_widths, seed=subseed(cfg.seed, "baseline")
    )
    classifier.train(baseline, pairs, cfg.train_config(seed=subseed(cfg.seed, "baseline")))
    classifier.save_checkpoint(baseline, models_dir / "baseline.ckpt")

    params = cfg.sampling_params()
    specialists = ensemble.train_specialists(
        pairs,
        params,
        cfg.train_config(seed=subseed(cfg.seed, "specialists")),
        anchor_mode=cfg.anchor_mode,
        encoder_widths=cfg.encoder_widths,
        head_widths=cfg.head_widths,
        n_classes=n_classes,
    )
    ensemble.save_ensemble(
        specialists,
        models_dir,
        extra={
            "baseline_checkpoint": "baseline.ckpt",
            "seed": cfg.seed,
            "anchor_mode": cfg.anchor_mode,
            "encoder_widths": list(cfg.encoder_widths),
            "head_widths": list(cfg.head_widths),
            "train": {
                "epochs": cfg.epochs,
                "batch_size": cfg.batch_size,
                "learning_rate": cfg.learning_rate,
                "momentum": cfg.momentum,
                "augment": cfg.augment,
            },
        },
    )
    return models_dir


def _selected_specs(cfg: RunConfig) -> list[corruptions.CorruptionSpec]:
    specs = corruptions.all_specs()
    if cfg.family != "all":
        if cfg.family not in corruptions.FAMILIES:
            raise BadConfigError(f"unknown corruption family {cfg.family!r}")
        specs = [s for s in specs if s.family == cfg.family]
    if cfg.severity != 0:
        specs = [s for s in specs if s.severity == cfg.severity]
    return specs


def run_corrupt(cfg: RunConfig) -> Path:
    """Write corrupted copies of the test set, one directory per spec."""
    write_resolved_config(cfg, "corrupt")
    test_set = load_dataset(Path(cfg.out) / "dataset" / "test")
    selected = {s.name for s in _selected_specs(cfg)}
    corrupted = corruptions.corrupted_test_set(test_set, cfg.seed)
    root = Path(cfg.out) / "corrupted"
    written = []
    for spec, samples in corrupted.items():
        if spec.name not in selected:
            continue
        save_dataset(samples, root / spec.name)
        written.append(spec.name)
    manifest = {
        "seed": cfg.seed,
        "schedules": _SCHEDULE_NOTES,
        "sets": sorted(written),
        "source": "dataset/test",
    }
    write_text_atomic(root / "manifest.json", _dump_json(manifest))
    return root


def _load_models(cfg: RunConfig):
    models_dir = Path(cfg.out) / "models"
    manifest_path = models_dir / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"{manifest_path}: missing; run the train stage first")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    baseline = classifier.load_checkpoint(models_dir / manifest["baseline_checkpoint"])
    specialists = ensemble.load_ensemble(models_dir)
    # k_tilde is an inference-time knob: more or fewer members per mechanism
    # reuses the same specialists.
    specialists.params = replace(specialists.params, k_tilde=cfg.k_tilde)
    return baseline, specialists, manifest


def _check_class_count(n_model: int, n_data: int) -> None:
    if n_model != n_data:
        raise BadConfigError(
            f"checkpoint expects {n_model} classes but dataset has {n_data}"
        )


def _baseline_probs(model, samples: list[LabeledCloud]) -> np.ndarray:
    stack = np.stack([s.points for s in samples])
    return classifier.predict_batch(model, stack)


def _ensemble_matrices(specialists, samples, seed: int, set_name: str) -> list[np.ndarray]:
    matrices = []
    for sample in samples:
        rng = substream(seed, "infer", set_name, sample.sample_id)
        matrix, _, _ = ensemble.predict(specialists, sample.points, rng)
        matrices.append(matrix)
    return matrices


def _error_rate_probs(probs: np.ndarray, labels: list[int]) -> float:
    return 1.0 - metrics.overall_accuracy(probs, labels)


def run_eval(cfg: RunConfig) -> Path:
    """Score baseline and ensemble on the clean and corrupted test sets."""
    write_resolved_config(cfg, "eval")
    out = Path(cfg.out)
    test_set = load_dataset(out / "dataset" / "test")
    labels = [s.label for s in test_set]
    baseline, specialists, manifest = _load_models(cfg)
    _check_class_count(baseline.n_classes, _n_classes(test_set))

    k = 3 * specialists.params.k_tilde
    kt = specialists.params.k_tilde

    def mean_probs(matrices):
        return np.stack([ensemble.aggregate_mean(m) for m in matrices])

    def majority_classes(matrices):
        return [ensemble.aggregate_majority(m) for m in matrices]

    # Clean set.
    clean_base = _baseline_probs(baseline, test_set)
    clean_matrices = _ensemble_matrices(specialists, test_set, cfg.seed, "clean")
    mechanism_slices = {
        "patch": slice(0, kt),
        "curve": slice(kt, 2 * kt),
        "random": slice(2 * kt, 3 * kt),
    }
    clean_accuracy = {
        "baseline": metrics.overall_accuracy(clean_base, labels),
        "ensemble_mean": metrics.overall_accuracy(mean_probs(clean_matrices), labels),
        "ensemble_majority": metrics.accuracy_of_classes(
            majority_classes(clean_matrices), labels
        ),
    }
    for name, rows in mechanism_slices.items():
        probs = np.stack([ensemble.aggregate_mean(m[rows]) for m in clean_matrices])
        clean_accuracy[name] = metrics.overall_accuracy(probs, labels)

    # Corrupted sets.
    errors = {
        "baseline": {f: [0.0] * 5 for f in corruptions.FAMILIES},
        "ensemble_mean": {f: [0.0] * 5 for f in corruptions.FAMILIES},
        "ensemble_majority": {f: [0.0] * 5 for f in corruptions.FAMILIES},
    }
    mean_u = {f: [0.0] * 5 for f in corruptions.FAMILIES}
    corrupted_root = out / "corrupted"
    for spec in corruptions.all_specs():
        set_dir = corrupted_root / spec.name
        if not set_dir.exists():
            raise FormatError(f"{set_dir}: missing corrupted set; run the corrupt stage first")
        corrupted = load_dataset(set_dir)
        level = spec.severity - 1
        base_probs = _baseline_probs(baseline, corrupted)
        matrices = _ensemble_matrices(specialists, corrupted, cfg.seed, spec.name)
        errors["baseline"][spec.family][level] = _error_rate_probs(base_probs, labels)
        errors["ensemble_mean"][spec.family][level] = _error_rate_probs(
            mean_probs(matrices), labels
        )
        errors["ensemble_majority"][spec.family][level] = 1.0 - metrics.accuracy_of_classes(
            majority_classes(matrices), labels
        )
        mean_u[spec.family][level] = float(
            np.mean(
                [
                    metrics.uniformity(clean.points, corr.points, 0.0)
                    for clean, corr in zip(test_set, corrupted)
                ]
            )
        )

    ce_base, mce_base = metrics.corruption_error(errors["baseline"], errors["baseline"])
    ce_mean, mce_mean = metrics.corruption_error(errors["ensemble_mean"], errors["baseline"])
    ce_maj, mce_maj = metrics.corruption_error(errors["ensemble_majority"], errors["baseline"])

    report = {
        "seed": cfg.seed,
        "ensemble_size": k,
        "clean_accuracy": clean_accuracy,
        "error_rates": errors,
        "ce": {"baseline": ce_base, "ensemble_mean": ce_mean, "ensemble_majority": ce_maj},
        "mce": {"baseline": mce_base, "ensemble_mean": mce_mean, "ensemble_majority": mce_maj},
        "mean_uniformity": mean_u,
        "metadata": {
            "models": sorted(manifest.get("checkpoints", {}).values())
            + [manifest.get("baseline_checkpoint", "baseline.ckpt")],
            "train_seed": manifest.get("seed"),
            "aggregate": cfg.aggregate,
            "test_size": len(test_set),
        },
    }
    eval_dir = out / "eval"
    write_text_atomic(eval_dir / "report.json", _dump_json(report))

    lines = ["family,severity,baseline_error,ensemble_mean_error,ensemble_majority_error,mean_uniformity"]
    for family in corruptions.FAMILIES:
        for s in corruptions.SEVERITIES:
            lines.append(
                f"{family},{s},{errors['baseline'][family][s - 1]!r},"
                f"{errors['ensemble_mean'][family][s - 1]!r},"
                f"{errors['ensemble_majority'][family][s - 1]!r},"
                f"{mean_u[family][s - 1]!r}"
            )
    write_text_atomic(eval_dir / "report.csv", "\n".join(lines) + "\n")
    return eval_dir


def run_diversity(cfg: RunConfig) -> Path:
    """Compare sampling-ensemble diversity against a reseeded-baseline ensemble."""
    write_resolved_config(cfg, "diversity")
    out = Path(cfg.out)
    train_set = load_dataset(out / "dataset" / "train")
    test_set = load_dataset(out / "dataset" / "test")
    pairs = _as_pairs(train_set)
    n_classes = _n_classes(train_set)
    baseline, specialists, _ = _load_models(cfg)
    _check_class_count(baseline.n_classes, _n_classes(test_set))

    k = 3 * specialists.params.k_tilde

    # Sampling ensemble: the trained specialists on sub-sampled inputs.
    sampling_matrices = _ensemble_matrices(specialists, test_set, cfg.seed, "diversity")

    # Reseeded ensemble: K independently trained baselines on the full cloud.
    members = []
    for i in range(k):
        seed_i = subseed(cfg.seed, "diversity-member", i)
        model = classifier.new_model(
            n_classes, cfg.encoder_widths, cfg.head_widths, seed=seed_i
        )
        classifier.train(model, pairs, cfg.train_config(seed=seed_i))
        members.append(model)
    stack = np.stack([s.points for s in test_set])
    member_probs = [classifier.predict_batch(m, stack) for m in members]
    reseeded_matrices = [
        np.stack([probs[i] for probs in member_probs]) for i in range(len(test_set))
    ]

    c_sampling = metrics.diversity_c(sampling_matrices)
    c_reseeded = metrics.diversity_c(reseeded_matrices)
    corr_sampling = metrics.mean_correlation_matrix(sampling_matrices)
    corr_reseeded = metrics.mean_correlation_matrix(reseeded_matrices)

    div_dir = out / "diversity"
    payload = {
        "seed": cfg.seed,
        "members": k,
        "test_size": len(test_set),
        "sampling_c": c_sampling,
        "reseeded_c": c_reseeded,
    }
    write_text_atomic(div_dir / "diversity.json", _dump_json(payload))
    for name, corr in (("sampling", corr_sampling), ("reseeded", corr_reseeded)):
        rows = [",".join(repr(v) for v in row) for row in corr]
        write_text_atomic(div_dir / f"correlation_{name}.csv", "\n".join(rows) + "\n")
    return div_dir


def run_importance(cfg: RunConfig) -> Path:
    """Per-point importance of the baseline model over the test set, as CSV."""
    write_resolved_config(cfg, "importance")
    out = Path(cfg.out)
    test_set = load_dataset(out / "dataset" / "test")
    baseline, _, _ = _load_models(cfg)
    _check_class_count(baseline.n_classes, _n_classes(test_set))
    lines = ["sample_id,point_index,x,y,z,importance"]
    for sample in test_set:
        feats = classifier.pointwise_features(baseline, sample.points)
        imp = metrics.pointwise_importance(feats)
        for i, (point, value) in enumerate(zip(sample.points, imp)):
            lines.append(
                f"{sample.sample_id},{i},{point[0]!r},{point[1]!r},{point[2]!r},{value}"
            )
    imp_dir = out / "importance"
    write_text_atomic(imp_dir / "importance.csv", "\n".join(lines) + "\n")
    return imp_dir


def run_report(cfg: RunConfig) -> Path:
    """Merge the eval (and optional diversity) outputs into one summary."""
    write_resolved_config(cfg, "report")
    out = Path(cfg.out)
    eval_path = out / "eval" / "report.json"
    if not eval_path.exists():
        raise FormatError(f"{eval_path}: missing; run the eval stage first")
    with open(eval_path) as fh:
        eval_report = json.load(fh)
    diversity_path = out / "diversity" / "diversity.json"
    diversity = None
    if diversity_path.exists():
        with open(diversity_path) as fh:
            diversity = json.load(fh)
    headline = "ensemble_mean" if cfg.aggregate == "mean" else "ensemble_majority"
    summary = {
        "seed": cfg.seed,
        "headline": {
            "aggregate": cfg.aggregate,
            "ensemble_mce": eval_report["mce"][headline],
            "baseline_mce": eval_report["mce"]["baseline"],
        },
        "eval": eval_report,
        "diversity": diversity,
        "sources": ["eval/report.json"] + (["diversity/diversity.json"] if diversity else []),
    }
    write_text_atomic(out / "report.json", _dump_json(summary))
    return out / "report.json"
