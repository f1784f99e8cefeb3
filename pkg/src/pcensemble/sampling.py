"""Partial point-cloud sub-sampling: patches, curves and random subsets.

A patch is an anchor plus its nearest neighbors (compact local view), a curve
is a random walk over the M-nearest-neighbor graph (exploratory local view),
and a random subset is a uniform without-replacement draw (global low-res
view). An ensemble input bundles k_tilde members of each kind.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .geometry import as_cloud, fps, knn, pairwise_knn_table
from .seeding import choose_without_replacement

# Reference member sizes for 1024-point clouds; smaller clouds scale these
# down proportionally (ratios 1/2, 1/2, 1/8 of the cloud).
_BASE_CLOUD = 1024
_BASE_PATCH = 512
_BASE_CURVE = 512
_BASE_RANDOM = 128
_MIN_PATCH = 32
_MIN_CURVE = 32
_MIN_RANDOM = 16


class SampleKind(enum.Enum):
    PATCH = "patch"
    CURVE = "curve"
    RANDOM = "random"


@dataclass(frozen=True)
class SamplingParams:
    """Sub-sample sizes and ensemble shape.

    n_patch/n_curve/n_random are the member sizes, m_neighbors the walk
    branching factor, k_tilde the number of members per mechanism.
    """

    n_patch: int = _BASE_PATCH
    n_curve: int = _BASE_CURVE
    n_random: int = _BASE_RANDOM
    m_neighbors: int = 40
    k_tilde: int = 4

    def __post_init__(self):
        for name in ("n_patch", "n_curve", "n_random", "m_neighbors", "k_tilde"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")

    @classmethod
    def scaled_to(cls, n_points: int, m_neighbors: int = 40, k_tilde: int = 4) -> "SamplingParams":
        """Params for clouds of n_points, preserving the reference size ratios.

        Sizes scale by n_points/1024, rounded to the nearest multiple of 8,
        with floors of 32/32/16; clouds of 1024+ points keep the defaults.
        """
        if n_points >= _BASE_CLOUD:
            return cls(m_neighbors=m_neighbors, k_tilde=k_tilde)

        def scale(base: int, floor: int) -> int:
            return max(floor, int(round(base * n_points / _BASE_CLOUD / 8)) * 8)

        return cls(
            n_patch=scale(_BASE_PATCH, _MIN_PATCH),
            n_curve=scale(_BASE_CURVE, _MIN_CURVE),
            n_random=scale(_BASE_RANDOM, _MIN_RANDOM),
            m_neighbors=m_neighbors,
            k_tilde=k_tilde,
        )


@dataclass
class SubSample:
    """A partial point cloud plus its provenance.

    source_indices index into the parent cloud; for curves they may repeat
    (the walk revisits points) and their first element is the anchor.
    """

    kind: SampleKind
    anchor: int | None
    source_indices: np.ndarray
    points: np.ndarray = field(repr=False)

    @property
    def unique_count(self) -> int:
        return int(np.unique(self.source_indices).size)


def extract_patch(cloud, anchor: int, params: SamplingParams) -> SubSample:
    """Anchor plus its min(n_patch, N) - 1 nearest neighbors."""
    pts = as_cloud(cloud)
    n = pts.shape[0]
    size = min(params.n_patch, n)
    if size == 1:
        indices = np.array([anchor], dtype=np.intp)
    else:
        neighbors = knn(pts, anchor, size - 1)
        indices = np.concatenate(([anchor], neighbors))
    return SubSample(SampleKind.PATCH, anchor, indices, pts[indices])


def extract_curve(
    cloud,
    anchor: int,
    params: SamplingParams,
    rng: np.random.Generator,
    neighbor_table: np.ndarray | None = None,
) -> SubSample:
    """Random walk of n_curve points over the m-nearest-neighbor graph.

    Starts at the anchor; every step moves to a uniformly chosen one of the
    current point's m_neighbors nearest neighbors. Revisits are allowed, so
    the sample may contain fewer than n_curve distinct points. Deterministic
    given the generator state.
    """
    pts = as_cloud(cloud)
    if neighbor_table is None:
        neighbor_table = pairwise_knn_table(pts, params.m_neighbors)
    steps = params.n_curve - 1
    choices = rng.integers(0, params.m_neighbors, size=steps)
    indices = np.empty(params.n_curve, dtype=np.intp)
    indices[0] = anchor
    current = anchor
    table = neighbor_table
    for t in range(steps):
        current = table[current, choices[t]]
        indices[t + 1] = current
    return SubSample(SampleKind.CURVE, anchor, indices, pts[indices])


def extract_random(cloud, params: SamplingParams, rng: np.random.Generator) -> SubSample:
    """min(n_random, N) distinct indices, uniform without replacement."""
    pts = as_cloud(cloud)
    n = pts.shape[0]
    size = min(params.n_random, n)
    indices = choose_without_replacement(rng, n, size).astype(np.intp)
    return SubSample(SampleKind.RANDOM, None, indices, pts[indices])


def make_ensemble_inputs(
    cloud, params: SamplingParams, rng: np.random.Generator
) -> list[SubSample]:
    """The 3*k_tilde ensemble inputs for one cloud: patches, curves, randoms.

    Anchors come from farthest-point sampling seeded by a random start index;
    each anchor grows one patch and one curve, and k_tilde independent random
    subsets are drawn. Output order is [patches..., curves..., randoms...].
    """
    pts = as_cloud(cloud)
    n = pts.shape[0]
    start = int(rng.integers(n))
    anchors = fps(pts, params.k_tilde, start)
    table = pairwise_knn_table(pts, params.m_neighbors)
    patches = [extract_patch(pts, int(a), params) for a in anchors]
    curves = [extract_curve(pts, int(a), params, rng, table) for a in anchors]
    randoms = [extract_random(pts, params, rng) for _ in range(params.k_tilde)]
    return patches + curves + randoms
