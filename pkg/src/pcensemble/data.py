"""Synthetic shape dataset, augmentation, and dataset file I/O.

Eight procedural shape classes stand in for a CAD-scan benchmark at desk
scale. Every sample draws its own shape parameters (so no two cylinders have
the same aspect ratio), gets a small random pose tilt (<= 10 degrees, which
keeps the rotate corruption out-of-distribution), and is normalized to the
unit sphere.

Datasets live in a directory as ``labels.csv`` (sample_id,label) plus one
binary cloud per sample: magic "EPCD", u32 version, u32 point count, then
N x 3 little-endian float32 coordinates.
"""

from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadConfigError, FormatError
from .geometry import as_cloud, normalize_unit_sphere, random_unit_vector, rotation_matrix
from .seeding import substream

DATASET_MAGIC = b"EPCD"
DATASET_VERSION = 1

SHAPE_NAMES = ("sphere", "cube", "cylinder", "cone", "torus", "tetrahedron", "disc", "helix")


@dataclass
class LabeledCloud:
    points: np.ndarray = field(repr=False)
    label: int
    sample_id: str


@dataclass(frozen=True)
class DatasetConfig:
    points_per_cloud: int = 256
    train_size: int = 800
    test_size: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.points_per_cloud < 64:
            raise BadConfigError(f"points_per_cloud must be >= 64, got {self.points_per_cloud}")
        if self.train_size < len(SHAPE_NAMES) or self.test_size < len(SHAPE_NAMES):
            raise BadConfigError("split sizes must cover at least one sample per class")


def _unit_rows(v: np.ndarray) -> np.ndarray:
    return v / np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-12)


def _sphere(rng, n):
    squash = rng.uniform(0.45, 1.0)  # oblate spheres shade toward fat tori/discs
    pts = _unit_rows(rng.normal(size=(n, 3)))
    pts[:, 2] *= squash
    return pts


def _cube(rng, n):
    ext = rng.uniform(0.6, 1.4, size=3)
    areas = np.array([ext[1] * ext[2], ext[0] * ext[2], ext[0] * ext[1]])
    probs = np.repeat(areas, 2)
    probs = probs / probs.sum()
    face = np.searchsorted(np.cumsum(probs), rng.random(n), side="right")
    uv = rng.uniform(-1.0, 1.0, size=(n, 2))
    pts = np.empty((n, 3))
    for f in range(6):
        mask = face == f
        axis = f // 2
        sign = 1.0 if f % 2 == 0 else -1.0
        others = [a for a in range(3) if a != axis]
        pts[mask, axis] = sign * ext[axis]
        pts[mask, others[0]] = uv[mask, 0] * ext[others[0]]
        pts[mask, others[1]] = uv[mask, 1] * ext[others[1]]
    return pts


def _cylinder(rng, n):
    aspect = rng.uniform(0.5, 2.0)  # height / diameter
    r = 0.5
    h = aspect * 2 * r
    lateral = 2 * np.pi * r * h
    caps = 2 * np.pi * r * r
    on_side = rng.random(n) < lateral / (lateral + caps)
    theta = rng.uniform(0.0, 2 * np.pi, size=n)
    z = rng.uniform(-h / 2, h / 2, size=n)
    rho = r * np.sqrt(rng.random(n))
    cap_sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    radius = np.where(on_side, r, rho)
    height = np.where(on_side, z, cap_sign * h / 2)
    return np.column_stack([radius * np.cos(theta), radius * np.sin(theta), height])


def _cone(rng, n):
    # Truncated cone: the top-radius fraction interpolates toward a cylinder.
    aspect = rng.uniform(0.5, 2.0)
    top = rng.uniform(0.0, 0.7)
    r = 0.5
    h = aspect * 2 * r
    slant = np.sqrt((r - top * r) ** 2 + h * h)
    lateral = np.pi * (r + top * r) * slant
    base = np.pi * r * r
    cap = np.pi * (top * r) ** 2
    u = rng.random(n) * (lateral + base + cap)
    theta = rng.uniform(0.0, 2 * np.pi, size=n)
    # lateral: radius shrinks linearly from r at z=0 to top*r at z=h,
    # with area density proportional to the local radius
    lo, hi = top * r, r
    rho_side = np.sqrt(rng.random(n) * (hi * hi - lo * lo) + lo * lo)
    s = (hi - rho_side) / (hi - lo) if hi > lo else rng.random(n)
    rho_base = r * np.sqrt(rng.random(n))
    rho_cap = top * r * np.sqrt(rng.random(n))
    on_side = u < lateral
    on_base = (u >= lateral) & (u < lateral + base)
    radius = np.where(on_side, rho_side, np.where(on_base, rho_base, rho_cap))
    height = np.where(on_side, s * h, np.where(on_base, 0.0, h))
    return np.column_stack([radius * np.cos(theta), radius * np.sin(theta), height])


def _torus(rng, n):
    ratio = rng.uniform(0.2, 0.5)
    big, small = 1.0, ratio
    v = np.empty(0)
    while v.size < n:  # rejection keeps the tube angle area-uniform
        cand = rng.uniform(0.0, 2 * np.pi, size=2 * n)
        accept = rng.random(2 * n) < (big + small * np.cos(cand)) / (big + small)
        v = np.concatenate([v, cand[accept]])
    v = v[:n]
    u = rng.uniform(0.0, 2 * np.pi, size=n)
    ring = big + small * np.cos(v)
    return np.column_stack([ring * np.cos(u), ring * np.sin(u), small * np.sin(v)])


_TETRA_VERTS = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / np.sqrt(3.0)
_TETRA_FACES = ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3))


def _tetrahedron(rng, n):
    verts = _TETRA_VERTS * rng.uniform(0.7, 1.3, size=(4, 1))
    areas = np.array(
        [
            0.5 * np.linalg.norm(np.cross(verts[b] - verts[a], verts[c] - verts[a]))
            for a, b, c in _TETRA_FACES
        ]
    )
    face = np.searchsorted(np.cumsum(areas / areas.sum()), rng.random(n), side="right")
    u = np.sqrt(rng.random(n))
    v = rng.random(n)
    pts = np.empty((n, 3))
    for f, (a, b, c) in enumerate(_TETRA_FACES):
        mask = face == f
        pts[mask] = (
            (1.0 - u[mask, None]) * verts[a]
            + (u * (1.0 - v))[mask, None] * verts[b]
            + (u * v)[mask, None] * verts[c]
        )
    return pts


def _disc(rng, n):
    # Thin slab: two faces plus a rim, shading toward very squat cylinders.
    stretch = rng.uniform(0.8, 1.25)
    thickness = rng.uniform(0.05, 0.6)
    r = 1.0
    face = np.pi * r * r
    rim = 2 * np.pi * r * thickness
    on_face = rng.random(n) < (2 * face) / (2 * face + rim)
    theta = rng.uniform(0.0, 2 * np.pi, size=n)
    rho = np.where(on_face, r * np.sqrt(rng.random(n)), r)
    z_face = np.where(rng.random(n) < 0.5, -0.5, 0.5) * thickness
    z_rim = rng.uniform(-0.5, 0.5, size=n) * thickness
    z = np.where(on_face, z_face, z_rim)
    return np.column_stack([stretch * rho * np.cos(theta), rho * np.sin(theta) / stretch, z])


def _helix(rng, n):
    turns = rng.uniform(1.25, 4.0)  # few-turn, low helices shade toward open rings
    height = rng.uniform(0.3, 1.6)
    t = rng.random(n) * turns * 2 * np.pi
    z = height * (t / (turns * 2 * np.pi) - 0.5)
    return np.column_stack([0.5 * np.cos(t), 0.5 * np.sin(t), z])


_GENERATORS = {
    "sphere": _sphere,
    "cube": _cube,
    "cylinder": _cylinder,
    "cone": _cone,
    "torus": _torus,
    "tetrahedron": _tetrahedron,
    "disc": _disc,
    "helix": _helix,
}


def _make_sample(split: str, class_idx: int, index: int, config: DatasetConfig) -> LabeledCloud:
    name = SHAPE_NAMES[class_idx]
    rng = substream(config.seed, "dataset", split, class_idx, index)
    pts = _GENERATORS[name](rng, config.points_per_cloud)
    # Shared nuisance parameters: a per-axis stretch blurs class proportions,
    # a small tilt keeps the rotate corruption out-of-distribution.
    pts = pts * rng.uniform(0.75, 1.3, size=3)
    tilt = rotation_matrix(random_unit_vector(rng), rng.uniform(0.0, np.deg2rad(10.0)))
    pts = normalize_unit_sphere(pts @ tilt.T)
    return LabeledCloud(pts, class_idx, f"{split}-{name}-{index:04d}")


def _make_split(split: str, size: int, config: DatasetConfig) -> list[LabeledCloud]:
    n_classes = len(SHAPE_NAMES)
    base, extra = divmod(size, n_classes)
    samples = []
    for class_idx in range(n_classes):
        count = base + (1 if class_idx < extra else 0)
        samples.extend(_make_sample(split, class_idx, i, config) for i in range(count))
    return samples


def generate_dataset(config: DatasetConfig) -> tuple[list[LabeledCloud], list[LabeledCloud]]:
    """Class-balanced train/test splits, fully determined by config.seed."""
    return (
        _make_split("train", config.train_size, config),
        _make_split("test", config.test_size, config),
    )


def scale_translate(points, scales, offsets) -> np.ndarray:
    """Apply per-axis scale factors then per-axis offsets."""
    return as_cloud(points) * np.asarray(scales) + np.asarray(offsets)


def augment(points, rng: np.random.Generator) -> np.ndarray:
    """Random anisotropic scaling in [2/3, 3/2] plus translation in [-0.2, 0.2]."""
    scales = rng.uniform(2.0 / 3.0, 3.0 / 2.0, size=3)
    offsets = rng.uniform(-0.2, 0.2, size=3)
    return scale_translate(points, scales, offsets)


def write_bytes_atomic(path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path, text: str) -> None:
    write_bytes_atomic(path, text.encode("utf-8"))


def _encode_cloud(points: np.ndarray) -> bytes:
    pts32 = np.ascontiguousarray(points, dtype="<f4")
    header = DATASET_MAGIC + struct.pack("<II", DATASET_VERSION, pts32.shape[0])
    return header + pts32.tobytes()


def _decode_cloud(blob: bytes, origin: str) -> np.ndarray:
    if len(blob) < 4 or blob[:4] != DATASET_MAGIC:
        raise FormatError(
            f"{origin}: bad magic {blob[:4]!r} at offset 0, expected {DATASET_MAGIC!r}"
        )
    if len(blob) < 12:
        raise FormatError(f"{origin}: truncated header at offset {len(blob)}")
    version, count = struct.unpack("<II", blob[4:12])
    if version != DATASET_VERSION:
        raise FormatError(f"{origin}: unsupported version {version} at offset 4")
    expected = 12 + count * 12
    if len(blob) != expected:
        raise FormatError(
            f"{origin}: expected {expected} bytes for {count} points, "
            f"got {len(blob)} (mismatch at offset {min(len(blob), expected)})"
        )
    pts = np.frombuffer(blob[12:], dtype="<f4").reshape(count, 3)
    return pts.astype(np.float64)


def save_dataset(samples: list[LabeledCloud], directory) -> None:
    """Write labels.csv plus one EPCD file per sample."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for sample in samples:
        write_bytes_atomic(directory / f"{sample.sample_id}.epcd", _encode_cloud(sample.points))
        rows.append((sample.sample_id, sample.label))
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["sample_id", "label"])
    writer.writerows(rows)
    write_text_atomic(directory / "labels.csv", buf.getvalue())


def load_dataset(directory) -> list[LabeledCloud]:
    """Read a dataset directory back, in labels.csv order."""
    directory = Path(directory)
    labels_path = directory / "labels.csv"
    if not labels_path.exists():
        raise FormatError(f"{labels_path}: missing labels.csv")
    samples = []
    with open(labels_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sample_id", "label"]:
            raise FormatError(f"{labels_path}: bad header {header!r}")
        for row in reader:
            if len(row) != 2:
                raise FormatError(f"{labels_path}: bad row {row!r}")
            sample_id, label = row[0], int(row[1])
            cloud_path = directory / f"{sample_id}.epcd"
            if not cloud_path.exists():
                raise FormatError(f"{cloud_path}: missing cloud file")
            with open(cloud_path, "rb") as cf:
                pts = _decode_cloud(cf.read(), str(cloud_path))
            samples.append(LabeledCloud(pts, label, sample_id))
    return samples
