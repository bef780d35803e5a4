"""Dataset ingestion: IDX files (MNIST / Fashion-MNIST distribution format)
and a procedural stand-in used to exercise the pipeline where the real
datasets are not installed.

IDX is big-endian: image files carry magic 0x00000803 and dimensions
(N, rows, cols); label files carry magic 0x00000801 and (N,). Gzipped
files are detected and decompressed transparently.
"""

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class DataError(Exception):
    """Base class for dataset ingestion failures."""


class BadMagicError(DataError):
    pass


class TruncatedFileError(DataError):
    pass


class DimensionMismatchError(DataError):
    pass


@dataclass
class Dataset:
    """Intensity images in [0, 1] (one flattened row per sample), integer
    class labels, and a split tag."""

    images: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DimensionMismatchError(
                f"{self.images.shape[0]} images vs "
                f"{self.labels.shape[0]} labels")

    def __len__(self):
        return self.images.shape[0]

    def subset(self, n, offset=0):
        return Dataset(self.images[offset:offset + n],
                       self.labels[offset:offset + n], self.split)


def _read_file(path):
    with open(path, "rb") as f:
        head = f.read(2)
        f.seek(0)
        if head == b"\x1f\x8b":
            with gzip.open(f) as g:
                return g.read()
        return f.read()


def load_idx(path):
    """Decode one IDX file into a numpy array (uint8).

    Image files give (N, rows, cols); label files give (N,). Raises
    BadMagicError or TruncatedFileError with the offending detail.
    """
    raw = _read_file(path)
    if len(raw) < 8:
        raise TruncatedFileError(f"{path}: only {len(raw)} bytes")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic == IMAGE_MAGIC:
        if len(raw) < 16:
            raise TruncatedFileError(f"{path}: header incomplete")
        n, rows, cols = struct.unpack(">III", raw[4:16])
        need = 16 + n * rows * cols
        if len(raw) < need:
            raise TruncatedFileError(
                f"{path}: expected {need} bytes, got {len(raw)}")
        data = np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols,
                             offset=16)
        return data.reshape(n, rows, cols)
    if magic == LABEL_MAGIC:
        (n,) = struct.unpack(">I", raw[4:8])
        if len(raw) < 8 + n:
            raise TruncatedFileError(
                f"{path}: expected {8 + n} bytes, got {len(raw)}")
        return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8)
    raise BadMagicError(f"{path}: magic 0x{magic:08x} is neither image "
                        f"(0x{IMAGE_MAGIC:08x}) nor label "
                        f"(0x{LABEL_MAGIC:08x})")


def _find(directory, stem):
    for suffix in ("", ".gz"):
        p = Path(directory) / (stem + suffix)
        if p.exists():
            return p
    raise DataError(f"{stem}[.gz] not found under {directory}")


def load_dataset(data_dir, split="train"):
    """Load a standard IDX directory (MNIST or Fashion-MNIST layout).

    ``split`` is "train" or "test" (the test files use the t10k stem).
    Pixel bytes are scaled by 1/255 and images flattened row-major.
    """
    stem = "train" if split == "train" else "t10k"
    images = load_idx(_find(data_dir, f"{stem}-images-idx3-ubyte"))
    labels = load_idx(_find(data_dir, f"{stem}-labels-idx1-ubyte"))
    if images.shape[0] != labels.shape[0]:
        raise DimensionMismatchError(
            f"{images.shape[0]} images vs {labels.shape[0]} labels "
            f"in {data_dir}")
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(images=flat, labels=labels.astype(np.int64), split=split)


def _blur(img, passes=2):
    # separable 3x3 box blur, reflect-free (zeros beyond the border)
    for _ in range(passes):
        acc = img.copy()
        acc[1:] += img[:-1]
        acc[:-1] += img[1:]
        img = acc / 3.0
        acc = img.copy()
        acc[:, 1:] += img[:, :-1]
        acc[:, :-1] += img[:, 1:]
        img = acc / 3.0
    return img


def make_synthetic_digits(n, seed=0, n_classes=10, side=28, split="train",
                          proto_seed=1234):
    """Procedural 10-class image set for pipeline tests.

    Each class is a fixed random arrangement of thick strokes, blurred to
    MNIST-like smoothness; samples are shifted by up to 2 px and intensity
    jittered. ``seed`` draws the samples while ``proto_seed`` fixes the
    class prototypes, so train/test splits with different sample seeds
    share the same classes. This is a machinery-testing stand-in, not a
    substitute for the real datasets.
    """
    rng = np.random.default_rng(seed)
    protos = []
    for c in range(n_classes):
        crng = np.random.default_rng(proto_seed * 1000 + c)
        img = np.zeros((side, side))
        for _ in range(4):
            r0, c0 = crng.integers(4, side - 4, 2)
            dr, dc = crng.integers(-3, 4, 2)
            for t in range(6):
                r = np.clip(r0 + t * dr // 2, 1, side - 2)
                cc = np.clip(c0 + t * dc // 2, 1, side - 2)
                img[r - 1:r + 2, cc - 1:cc + 2] = 1.0
        protos.append(_blur(img))
    protos = np.stack(protos)
    # equalize per-class intensity mass so rate-coded drive carries shape,
    # not brightness (matches the roughly constant stroke mass of digits)
    protos /= protos.sum(axis=(1, 2), keepdims=True)
    protos *= 0.13 * side * side
    protos = np.clip(protos, 0.0, 1.0)

    labels = rng.integers(0, n_classes, n)
    images = np.zeros((n, side, side))
    for i, lab in enumerate(labels):
        img = protos[lab]
        sr, sc = rng.integers(-3, 4, 2)
        img = np.roll(np.roll(img, sr, axis=0), sc, axis=1)
        # occlude a random patch so samples are degraded prototype views
        pr, pc = rng.integers(0, side - 8, 2)
        img = img.copy()
        img[pr:pr + 8, pc:pc + 8] *= rng.uniform(0.0, 0.5)
        img = img * rng.uniform(0.7, 1.0)
        img = img + rng.normal(0.0, 0.08, img.shape)
        images[i] = np.clip(img, 0.0, 1.0)
    return Dataset(images=images.reshape(n, -1),
                   labels=labels.astype(np.int64), split=split)
