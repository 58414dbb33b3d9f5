"""Desk-scale datasets: Gaussian blobs and MNIST-style IDX files."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import CountMismatch, FormatError, InvalidClassCount

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
TRAIN_FRACTION = 0.8


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    split: str = "train"

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ValueError(f"features must be N x d with N labels, got {x.shape} and {y.shape}")
        if np.isnan(x).any():
            raise ValueError("features contain NaN")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        if self.split not in ("train", "eval"):
            raise ValueError(f"split must be 'train' or 'eval', got {self.split!r}")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def d_in(self):
        return self.features.shape[1]


def blob_centers(n_classes, d_in):
    """Unit-norm cluster centers; fixed for a given (n_classes, d_in)."""
    rng = np.random.default_rng([n_classes, d_in, 0xB10B])
    c = rng.standard_normal((n_classes, d_in))
    return c / np.linalg.norm(c, axis=1, keepdims=True)


def make_blobs(n_classes, d_in, per_class, spread, seed):
    """Isotropic Gaussian clusters around `blob_centers`, split 80/20 per class.

    Returns ``(train, eval)``. Sampling and the split depend only on `seed`.
    """
    if n_classes < 3:
        raise InvalidClassCount(f"need at least 3 classes, got {n_classes}")
    if spread <= 0:
        raise ValueError("spread must be positive")
    if per_class < 2:
        raise ValueError("need at least 2 samples per class")
    rng = np.random.default_rng(seed)
    centers = blob_centers(n_classes, d_in)
    n_train = int(round(TRAIN_FRACTION * per_class))
    n_train = min(max(n_train, 1), per_class - 1)
    parts = {"train": ([], []), "eval": ([], [])}
    for k in range(n_classes):
        pts = centers[k] + spread * rng.standard_normal((per_class, d_in))
        parts["train"][0].append(pts[:n_train])
        parts["eval"][0].append(pts[n_train:])
        parts["train"][1].append(np.full(n_train, k))
        parts["eval"][1].append(np.full(per_class - n_train, k))
    out = []
    for split in ("train", "eval"):
        x = np.concatenate(parts[split][0])
        y = np.concatenate(parts[split][1])
        order = rng.permutation(len(y))
        out.append(Dataset(x[order], y[order], n_classes, split))
    return tuple(out)


def _read_header(buf, path, magic, ndim):
    need = 4 * (1 + ndim)
    if len(buf) < need:
        raise FormatError(f"{path}: truncated header ({len(buf)} bytes)")
    found = struct.unpack(">I", buf[:4])[0]
    if found != magic:
        raise FormatError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    return struct.unpack(f">{ndim}I", buf[4:need]), need


def load_idx(images_path, labels_path, n_classes=None, split="train"):
    """Read an IDX image/label file pair into a Dataset with pixels in [0, 1]."""
    img = Path(images_path).read_bytes()
    lab = Path(labels_path).read_bytes()
    (count, rows, cols), off = _read_header(img, images_path, IDX_IMAGES_MAGIC, 3)
    (n_labels,), loff = _read_header(lab, labels_path, IDX_LABELS_MAGIC, 1)
    if count != n_labels:
        raise CountMismatch(f"{count} images but {n_labels} labels")
    size = count * rows * cols
    if len(img) - off < size:
        raise FormatError(f"{images_path}: expected {size} pixel bytes, found {len(img) - off}")
    if len(lab) - loff < count:
        raise FormatError(f"{labels_path}: expected {count} label bytes, found {len(lab) - loff}")
    pixels = np.frombuffer(img, dtype=np.uint8, count=size, offset=off)
    labels = np.frombuffer(lab, dtype=np.uint8, count=count, offset=loff).astype(np.int64)
    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if count else 0
    return Dataset(features, labels, n_classes, split)


def write_idx(images_path, labels_path, images, labels):
    """Write uint8 images (N x rows x cols) and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">4I", IDX_IMAGES_MAGIC, count, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">2I", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def split_dataset(ds, seed, train_fraction=TRAIN_FRACTION):
    """Deterministic disjoint train/eval split of one Dataset."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ds))
    cut = int(round(train_fraction * len(ds)))
    tr, ev = order[:cut], order[cut:]
    return (
        Dataset(ds.features[tr], ds.labels[tr], ds.n_classes, "train"),
        Dataset(ds.features[ev], ds.labels[ev], ds.n_classes, "eval"),
    )
