"""Flat key=value run configuration shared by all CLI subcommands.

A config file holds one ``key=value`` per line (``#`` comments and blank
lines allowed). Unknown keys are hard errors. Command-line flags override file
values, and every subcommand writes the fully resolved configuration next to
its outputs so a run can be reproduced from one file.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .classifier import TrainConfig
from .data import DatasetConfig
from .errors import BadConfigError
from .sampling import SamplingParams


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise BadConfigError(f"expected a boolean, got {text!r}")


def _parse_widths(text: str) -> tuple[int, ...]:
    try:
        widths = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise BadConfigError(f"expected comma-separated widths, got {text!r}") from exc
    if not widths or any(w < 1 for w in widths):
        raise BadConfigError(f"widths must be positive integers, got {text!r}")
    return widths


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "out"
    # dataset
    points_per_cloud: int = 256
    train_size: int = 800
    test_size: int = 200
    # sampling (0 = scale automatically from points_per_cloud)
    n_patch: int = 0
    n_curve: int = 0
    n_random: int = 0
    m_neighbors: int = 40
    k_tilde: int = 4
    # training
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 5e-4
    optimizer: str = "adam"
    momentum: float = 0.0
    augment: bool = True
    anchor_mode: str = "random"
    encoder_widths: tuple[int, ...] = (64, 128)
    head_widths: tuple[int, ...] = (64,)
    # evaluation
    aggregate: str = "mean"
    family: str = "all"
    severity: int = 0  # 0 = all severities

    def __post_init__(self):
        if self.aggregate not in ("mean", "majority"):
            raise BadConfigError(f"aggregate must be mean or majority, got {self.aggregate!r}")
        if self.anchor_mode not in ("random", "fps"):
            raise BadConfigError(f"anchor_mode must be random or fps, got {self.anchor_mode!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise BadConfigError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if not 0 <= self.severity <= 5:
            raise BadConfigError(f"severity must be 0 (all) or 1..5, got {self.severity}")

    def dataset_config(self) -> DatasetConfig:
        return DatasetConfig(
            points_per_cloud=self.points_per_cloud,
            train_size=self.train_size,
            test_size=self.test_size,
            seed=self.seed,
        )

    def sampling_params(self) -> SamplingParams:
        auto = SamplingParams.scaled_to(
            self.points_per_cloud, m_neighbors=self.m_neighbors, k_tilde=self.k_tilde
        )
        return SamplingParams(
            n_patch=self.n_patch or auto.n_patch,
            n_curve=self.n_curve or auto.n_curve,
            n_random=self.n_random or auto.n_random,
            m_neighbors=self.m_neighbors,
            k_tilde=self.k_tilde,
        )

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            momentum=self.momentum,
            seed=self.seed if seed is None else seed,
            augment=self.augment,
        )

    def resolved_text(self) -> str:
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"


_PARSERS = {
    int: int,
    float: float,
    str: str,
}


def _coerce(name: str, value: str, target_type) -> object:
    try:
        if target_type is bool:
            return _parse_bool(value)
        if target_type is tuple:
            return _parse_widths(value)
        return _PARSERS[target_type](value)
    except BadConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise BadConfigError(f"bad value for {name}: {value!r}") from exc


def _field_types() -> dict[str, type]:
    types = {}
    for f in fields(RunConfig):
        default = f.default
        types[f.name] = tuple if isinstance(default, tuple) else type(default)
    return types


def parse_config_file(path) -> dict[str, str]:
    """Raw key=value pairs from a config file; unknown keys are rejected later."""
    pairs: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def build_config(file_path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Resolve defaults, then file values, then explicit overrides."""
    types = _field_types()
    resolved: dict[str, object] = {}

    def apply(pairs: dict[str, str], origin: str) -> None:
        for key, value in pairs.items():
            if key not in types:
                raise BadConfigError(f"{origin}: unknown key {key!r}")
            resolved[key] = _coerce(key, value, types[key])

    if file_path is not None:
        apply(parse_config_file(file_path), str(file_path))
    if overrides:
        apply(overrides, "command line")
    return RunConfig(**resolved)  # type: ignore[arg-type]
