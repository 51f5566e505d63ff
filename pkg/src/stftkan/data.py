"""Point-cloud ingestion and preprocessing.

Raw clouds are read from ``<root>/<class_name>/*.xyz|*.txt|*.ply``, reduced
to a fixed point count by farthest-point sampling, centred and scaled into
the unit ball, and split per class. Preprocessed clouds can be stored in a
compact binary cache (see :func:`write_cache`).
"""

from __future__ import annotations

import io
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, ParseError, TruncatedFileError
from .ndcore import Rng

log = logging.getLogger(__name__)

XYZ_SUFFIXES = (".xyz", ".txt")
PLY_SUFFIXES = (".ply",)
CACHE_MAGIC = b"STPC"
CACHE_VERSION = 1
TRANSLATE_RANGE = 0.2


@dataclass
class PointCloud:
    points: np.ndarray
    label: int = -1
    source_id: str = ""
    class_name: str = ""

    def __post_init__(self):
        self.points = np.asarray(self.points)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise DataError(f"{self.source_id or 'cloud'}: points must be (n, 3), got {self.points.shape}")
        if self.points.shape[0] < 1:
            raise DataError(f"{self.source_id or 'cloud'}: empty cloud")
        if not np.all(np.isfinite(self.points)):
            raise DataError(f"{self.source_id or 'cloud'}: non-finite coordinates")

    def with_points(self, points: np.ndarray) -> "PointCloud":
        return PointCloud(points, self.label, self.source_id, self.class_name)


@dataclass
class Dataset:
    clouds: list
    class_names: list

    @property
    def labels(self) -> np.ndarray:
        return np.array([c.label for c in self.clouds], dtype=np.int64)


@dataclass
class DatasetSplit:
    train: list
    test: list
    class_names: list
    class_weights: np.ndarray = field(default=None)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


# ---------------------------------------------------------------- readers

def read_cloud(path, label: int = -1) -> PointCloud:
    """Parse an ASCII XYZ or PLY file; the class name is the parent directory."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in XYZ_SUFFIXES:
        points = _read_xyz(path)
    elif suffix in PLY_SUFFIXES:
        points = _read_ply(path)
    else:
        raise FormatError(f"{path}: unsupported extension {suffix!r}")
    return PointCloud(points, label, source_id=str(path), class_name=path.parent.name)


def _read_xyz(path: Path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            fields = text.replace(",", " ").split()
            if len(fields) < 3:
                raise ParseError(f"expected at least 3 coordinates, got {len(fields)}", path, lineno)
            try:
                rows.append((float(fields[0]), float(fields[1]), float(fields[2])))
            except ValueError:
                raise ParseError(f"non-numeric coordinate in {text!r}", path, lineno) from None
    if not rows:
        raise ParseError("no points found", path)
    return np.array(rows, dtype=np.float64)


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _read_ply(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise ParseError("missing ply header", path, 1)
    body_start = raw.index(b"\n", end) + 1
    header = raw[:body_start].decode("ascii", errors="replace").splitlines()

    fmt = None
    elements = []  # (name, count, [(prop_name, type or None for list)])
    for lineno, line in enumerate(header, start=1):
        parts = line.split()
        if not parts or parts[0] in ("comment", "obj_info", "ply", "end_header"):
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise ParseError("property before element", path, lineno)
            if parts[1] == "list":
                elements[-1][2].append((parts[-1], None))
            else:
                if parts[1] not in _PLY_TYPES:
                    raise ParseError(f"unknown property type {parts[1]!r}", path, lineno)
                elements[-1][2].append((parts[2], parts[1]))
    names = [e[0] for e in elements]
    if "vertex" not in names:
        raise ParseError("no vertex element", path)
    vertex = elements[names.index("vertex")]
    props = [p[0] for p in vertex[2]]
    if not {"x", "y", "z"} <= set(props):
        raise ParseError("vertex element lacks x/y/z properties", path)
    cols = [props.index(c) for c in ("x", "y", "z")]
    count = vertex[1]

    if fmt == "ascii":
        lines = raw[body_start:].decode("utf-8").splitlines()
        line_no = len(header)
        cursor = 0
        for name, n_items, _ in elements:
            if name == "vertex":
                break
            cursor += n_items
        pts = np.empty((count, 3))
        for i in range(count):
            if cursor + i >= len(lines):
                raise ParseError(f"expected {count} vertices, file ended after {i}", path, line_no + cursor + i + 1)
            fields = lines[cursor + i].split()
            if len(fields) < len(props):
                raise ParseError(f"expected {len(props)} values, got {len(fields)}", path, line_no + cursor + i + 1)
            try:
                pts[i] = [float(fields[c]) for c in cols]
            except ValueError:
                raise ParseError("non-numeric vertex value", path, line_no + cursor + i + 1) from None
        return pts
    if fmt in ("binary_little_endian", "binary_big_endian"):
        if names[0] != "vertex" or any(t is None for _, t in vertex[2]):
            raise FormatError(f"{path}: binary ply must start with a fixed-size vertex element")
        order = "<" if fmt == "binary_little_endian" else ">"
        dtype = np.dtype([(p, order + _PLY_TYPES[t]) for p, t in vertex[2]])
        if len(raw) - body_start < dtype.itemsize * count:
            raise TruncatedFileError(f"{path}: vertex data truncated")
        rec = np.frombuffer(raw, dtype=dtype, count=count, offset=body_start)
        return np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    raise FormatError(f"{path}: unsupported ply format {fmt!r}")


def write_ply(path, points: np.ndarray) -> None:
    points = np.asarray(points)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(points)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\nend_header\n")
        for x, y, z in points:
            fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")


def load_directory(root) -> Dataset:
    """Read every supported file under ``root/<class_name>/``; classes sorted by name."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise DataError(f"{root}: no class directories")
    clouds = []
    names = []
    for label, cdir in enumerate(class_dirs):
        names.append(cdir.name)
        files = sorted(p for p in cdir.iterdir() if p.suffix.lower() in XYZ_SUFFIXES + PLY_SUFFIXES)
        for f in files:
            clouds.append(read_cloud(f, label))
        log.info("class %s: %d files", cdir.name, len(files))
    return Dataset(clouds, names)


# ------------------------------------------------------------ preprocessing

def fps_indices(points: np.ndarray, m: int) -> np.ndarray:
    """Greedy farthest-point sampling.

    Starts from the point nearest the centroid and repeatedly adds the point
    whose distance to the selected set is largest (ties to the lowest index).
    When ``m`` exceeds the point count, the full ordering is cycled.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n == 0:
        raise DataError("cannot sample from an empty cloud")
    if m < 1:
        raise DataError(f"sample count must be >= 1, got {m}")
    take = min(m, n)
    centroid = points.mean(axis=0)
    d0 = ((points - centroid) ** 2).sum(axis=1)
    selected = np.empty(take, dtype=np.int64)
    selected[0] = int(np.argmin(d0))
    min_d = np.full(n, np.inf)
    for i in range(1, take):
        diff = points - points[selected[i - 1]]
        np.minimum(min_d, (diff * diff).sum(axis=1), out=min_d)
        min_d[selected[i - 1]] = -1.0
        selected[i] = int(np.argmax(min_d))
    if take < m:
        selected = selected[np.arange(m) % take]
    return selected


def fps(cloud: PointCloud, m: int = 1024) -> PointCloud:
    return cloud.with_points(cloud.points[fps_indices(cloud.points, m)])


def normalize_points(points: np.ndarray) -> np.ndarray:
    centered = points - points.mean(axis=0)
    scale = np.sqrt((centered ** 2).sum(axis=1)).max()
    if scale == 0:
        return np.zeros_like(centered)
    return centered / scale


def normalize_unit_sphere(cloud: PointCloud) -> PointCloud:
    return cloud.with_points(normalize_points(np.asarray(cloud.points, dtype=np.float64)))


def preprocess_cloud(cloud: PointCloud, points: int = 1024) -> PointCloud:
    """FPS to ``points`` then unit-ball normalisation, stored as float32."""
    sampled = fps(cloud, points)
    return sampled.with_points(normalize_points(sampled.points.astype(np.float64)).astype(np.float32))


def preprocess(dataset: Dataset, points: int = 1024) -> Dataset:
    return Dataset([preprocess_cloud(c, points) for c in dataset.clouds], list(dataset.class_names))


# ------------------------------------------------------------ split/weights

def train_count(count: int, ratio: float = 0.8) -> int:
    """Training share of a class: round-half-up of ``ratio * count``, leaving both sides non-empty."""
    return min(count - 1, max(1, math.floor(ratio * count + 0.5)))


def class_weights(train_counts) -> np.ndarray:
    """Weights > 1 for classes below the mean count, capped at 10; 1 otherwise."""
    counts = np.asarray(train_counts, dtype=np.float64)
    if np.any(counts < 1):
        raise DataError("every class needs at least one training sample")
    mean = counts.mean()
    return np.where(counts < mean, np.minimum(mean / counts, 10.0), 1.0)


def stratified_split(clouds, class_names, ratio: float = 0.8, seed: int = 0) -> DatasetSplit:
    labels = np.array([c.label for c in clouds], dtype=np.int64)
    rng = Rng(seed)
    train, test = [], []
    train_counts = []
    for label in range(len(class_names)):
        members = np.flatnonzero(labels == label)
        if len(members) < 2:
            raise DataError(f"class {class_names[label]!r} has {len(members)} samples, need >= 2")
        members = members[rng.permutation(len(members))]
        n_train = train_count(len(members), ratio)
        train.extend(clouds[i] for i in members[:n_train])
        test.extend(clouds[i] for i in members[n_train:])
        train_counts.append(n_train)
    return DatasetSplit(train, test, list(class_names), class_weights(train_counts))


def augment_translate(cloud: PointCloud | np.ndarray, rng: Rng, magnitude: float = TRANSLATE_RANGE):
    """Shift every point by one offset drawn uniformly from [-magnitude, magnitude]^3."""
    points = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud)
    if magnitude == 0:
        shifted = points.copy()
    else:
        shifted = points + rng.uniform(-magnitude, magnitude, (3,)).astype(points.dtype)
    return cloud.with_points(shifted) if isinstance(cloud, PointCloud) else shifted


# ------------------------------------------------------------------- cache

def write_cache(dataset: Dataset, path) -> None:
    """Binary cache, little-endian.

    ``b"STPC"``, version u32, class count u32, per class (u32 byte length,
    UTF-8 name), sample count u32, then per sample a u8 label followed by
    ``points * 3`` float32 coordinates. Every cloud must have the same size.
    """
    clouds = dataset.clouds
    n_points = clouds[0].points.shape[0] if clouds else 0
    buf = io.BytesIO()
    buf.write(CACHE_MAGIC)
    buf.write(struct.pack("<II", CACHE_VERSION, len(dataset.class_names)))
    for name in dataset.class_names:
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<I", len(encoded)))
        buf.write(encoded)
    buf.write(struct.pack("<I", len(clouds)))
    for c in clouds:
        if c.points.shape != (n_points, 3):
            raise DataError(f"{c.source_id}: cache needs {n_points} points per cloud, got {c.points.shape[0]}")
        if not 0 <= c.label < 256:
            raise DataError(f"{c.source_id}: label {c.label} does not fit in u8")
        buf.write(struct.pack("<B", c.label))
        buf.write(np.ascontiguousarray(c.points, dtype="<f4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_cache(path, points: int | None = None) -> Dataset:
    """Inverse of :func:`write_cache`.

    The layout has no per-sample size field, so ``points`` is taken from the
    argument or, when omitted, from the file size.
    """
    raw = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise TruncatedFileError(f"{path}: truncated cache at byte {pos}")
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    if take(4) != CACHE_MAGIC:
        raise FormatError(f"{path}: bad magic, not a point-cloud cache")
    version, n_classes = struct.unpack("<II", take(8))
    if version != CACHE_VERSION:
        raise FormatError(f"{path}: unsupported cache version {version}")
    names = []
    for _ in range(n_classes):
        (length,) = struct.unpack("<I", take(4))
        names.append(take(length).decode("utf-8"))
    (n_samples,) = struct.unpack("<I", take(4))
    body = len(raw) - pos
    if points is None:
        if n_samples == 0:
            points = 0
        elif body % n_samples or (body // n_samples - 1) % 12 or body // n_samples < 13:
            raise TruncatedFileError(f"{path}: {body} data bytes do not split into {n_samples} samples")
        else:
            points = (body // n_samples - 1) // 12
    clouds = []
    for i in range(n_samples):
        (label,) = struct.unpack("<B", take(1))
        pts = np.frombuffer(take(12 * points), dtype="<f4").reshape(points, 3).astype(np.float32)
        clouds.append(PointCloud(pts, label, source_id=f"{Path(path).name}#{i}",
                                 class_name=names[label] if label < len(names) else ""))
    if pos != len(raw):
        raise FormatError(f"{path}: {len(raw) - pos} trailing bytes")
    return Dataset(clouds, names)


# --------------------------------------------------------------- synthetic

def synthetic_shapes(per_class: int = 30, points: int = 256, seed: int = 0) -> Dataset:
    """Sphere surface, cube surface and flat disc clouds, already normalised."""
    rng = Rng(seed)
    clouds = []
    for label, kind in enumerate(("sphere", "cube", "disc")):
        for i in range(per_class):
            if kind == "sphere":
                v = rng.normal(1.0, (points, 3)).astype(np.float64)
                p = v / np.linalg.norm(v, axis=1, keepdims=True)
            elif kind == "cube":
                p = rng.uniform(-1.0, 1.0, (points, 3)).astype(np.float64)
                face_axis = rng.integers(0, 2, points)
                face_sign = np.where(rng.integers(0, 1, points) == 0, -1.0, 1.0)
                p[np.arange(points), face_axis] = face_sign
            else:
                r = np.sqrt(rng.uniform(0.0, 1.0, points).astype(np.float64))
                t = rng.uniform(0.0, 2 * np.pi, points).astype(np.float64)
                p = np.stack([r * np.cos(t), r * np.sin(t), np.zeros(points)], axis=1)
            clouds.append(PointCloud(normalize_points(p).astype(np.float32), label,
                                     source_id=f"{kind}-{i}", class_name=kind))
    return Dataset(clouds, ["sphere", "cube", "disc"])
