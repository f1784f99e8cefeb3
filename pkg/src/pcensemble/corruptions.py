"""Seven corruption families, each rendered at five severity levels.

Schedules (s = severity in 1..5, N = input size; clouds are assumed
normalized to the unit sphere):

  scale        per-axis factors uniform in [1/r, r],  r = 1 + 0.2*s
  jitter       i.i.d. Gaussian noise, sigma = 0.01*s, on every coordinate
  rotate       angle s*pi/12 about a uniformly random axis
  drop_global  remove a uniform random subset of floor(N*0.15*s) points
  drop_local   s cluster removals of floor(N*0.15) nearest surviving
               neighbors each, total capped so >= 32 points survive
  add_global   append floor(N*0.05*s) points uniform inside the unit sphere
  add_local    s Gaussian blobs (sigma 0.05) of floor(N*0.05) points each,
               centered on randomly chosen existing points

Drop families output a subset of the input in original order; add families
keep the original points verbatim as a prefix. Everything is deterministic
given the random stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import TooFewPointsError
from .geometry import as_cloud, random_unit_vector, rotation_matrix, squared_distances
from .seeding import choose_without_replacement, substream

if TYPE_CHECKING:
    from .data import LabeledCloud

FAMILIES = (
    "scale",
    "jitter",
    "rotate",
    "drop_global",
    "drop_local",
    "add_global",
    "add_local",
)
SEVERITIES = (1, 2, 3, 4, 5)
MIN_SURVIVORS = 32

_DROP_FRACTION = 0.15
_ADD_FRACTION = 0.05
_ADD_LOCAL_SIGMA = 0.05


@dataclass(frozen=True)
class CorruptionSpec:
    """One corruption family at one severity level."""

    family: str
    severity: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown corruption family {self.family!r}")
        if self.severity not in SEVERITIES:
            raise ValueError(f"severity must be in 1..5, got {self.severity}")

    @property
    def name(self) -> str:
        return f"{self.family}_{self.severity}"


def all_specs() -> list[CorruptionSpec]:
    """The full 7 x 5 grid, families in canonical order, severities ascending."""
    return [CorruptionSpec(f, s) for f in FAMILIES for s in SEVERITIES]


def _scale(pts, s, rng):
    r = 1.0 + 0.2 * s
    factors = rng.uniform(1.0 / r, r, size=3)
    return pts * factors


def _jitter(pts, s, rng):
    return pts + rng.normal(0.0, 0.01 * s, size=pts.shape)


def _rotate(pts, s, rng):
    axis = random_unit_vector(rng)
    rot = rotation_matrix(axis, s * np.pi / 12.0)
    return pts @ rot.T


def _drop_global(pts, s, rng):
    n = pts.shape[0]
    n_drop = int(n * _DROP_FRACTION * s)
    if n - n_drop < MIN_SURVIVORS:
        raise TooFewPointsError(
            f"drop_global severity {s} would leave {n - n_drop} < {MIN_SURVIVORS} points"
        )
    dropped = choose_without_replacement(rng, n, n_drop)
    keep = np.ones(n, dtype=bool)
    keep[dropped] = False
    return pts[keep]


def _drop_local(pts, s, rng):
    n = pts.shape[0]
    cluster = int(n * _DROP_FRACTION)
    budget = n - MIN_SURVIVORS
    alive = np.ones(n, dtype=bool)
    removed = 0
    for _ in range(s):
        take = min(cluster, budget - removed)
        if take <= 0:
            break
        alive_idx = np.flatnonzero(alive)
        center = alive_idx[int(rng.integers(alive_idx.size))]
        d2 = squared_distances(pts[alive_idx], pts[center])
        d2[alive_idx == center] = np.inf  # the center itself survives
        order = np.argsort(d2, kind="stable")
        alive[alive_idx[order[:take]]] = False
        removed += take
    return pts[alive]


def _add_global(pts, s, rng):
    n = pts.shape[0]
    n_add = int(n * _ADD_FRACTION * s)
    directions = np.stack([random_unit_vector(rng) for _ in range(n_add)])
    radii = rng.random(n_add) ** (1.0 / 3.0)
    return np.concatenate([pts, directions * radii[:, None]])


def _add_local(pts, s, rng):
    n = pts.shape[0]
    blob = int(n * _ADD_FRACTION)
    centers = choose_without_replacement(rng, n, s)
    added = [pts[c] + rng.normal(0.0, _ADD_LOCAL_SIGMA, size=(blob, 3)) for c in centers]
    return np.concatenate([pts] + added)


_APPLY = {
    "scale": _scale,
    "jitter": _jitter,
    "rotate": _rotate,
    "drop_global": _drop_global,
    "drop_local": _drop_local,
    "add_global": _add_global,
    "add_local": _add_local,
}


def apply_corruption(spec: CorruptionSpec, cloud, rng: np.random.Generator) -> np.ndarray:
    """Corrupt one cloud according to the spec's documented schedule."""
    pts = as_cloud(cloud)
    if pts.shape[0] < 64:
        raise ValueError(f"corruption requires N >= 64, got {pts.shape[0]}")
    return _APPLY[spec.family](pts, spec.severity, rng)


def corrupted_test_set(
    dataset: "list[LabeledCloud]", seed: int
) -> "dict[CorruptionSpec, list[LabeledCloud]]":
    """All 35 corrupted variants of a labeled dataset.

    Each sample's corruption draws from its own named sub-stream of the seed,
    so the output is independent of iteration order and bit-identical across
    replays. Labels and sample ids are preserved.
    """
    from .data import LabeledCloud

    if not dataset:
        raise ValueError("dataset is empty")
    out: dict[CorruptionSpec, list[LabeledCloud]] = {}
    for spec in all_specs():
        corrupted = []
        for i, sample in enumerate(dataset):
            rng = substream(seed, "corrupt", spec.family, spec.severity, i)
            pts = apply_corruption(spec, sample.points, rng)
            corrupted.append(LabeledCloud(pts, sample.label, sample.sample_id))
        out[spec] = corrupted
    return out
