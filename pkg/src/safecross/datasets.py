"""Dataset loaders (MNIST IDX, CIFAR-10 binary batches), synthetic blobs and splitting.

Real data files are looked up under ``$SAFECROSS_DATA_DIR`` (default
``./data``) unless explicit paths are given.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Tuple, Union

import numpy as np

from .mlp import Dataset

DATA_DIR_ENV = "SAFECROSS_DATA_DIR"
IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073

PathLike = Union[str, os.PathLike]


class IdxFormatError(ValueError):
    pass


class BadMagicError(IdxFormatError):
    pass


class TruncatedFileError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


@dataclass
class SplitDataset:
    train: Dataset
    validation: Dataset
    split_seed: int


def data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def _read_bytes(path: PathLike) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(blob: bytes, magic: int, path) -> np.ndarray:
    if len(blob) < 4:
        raise TruncatedFileError(f"{path}: expected at least 4 header bytes, got {len(blob)}")
    (found,) = struct.unpack(">I", blob[:4])
    if found != magic:
        raise BadMagicError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise TruncatedFileError(f"{path}: expected {header} header bytes, got {len(blob)}")
    dims = struct.unpack(f">{ndim}I", blob[4:header])
    expected = header + int(np.prod(dims))
    if len(blob) != expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, got {len(blob)}")
    return np.frombuffer(blob, dtype=np.uint8, offset=header).reshape(dims)


def load_mnist_idx(images_path: PathLike, labels_path: PathLike) -> Dataset:
    """Parse an IDX image/label file pair (optionally gzipped); pixels scaled to [0, 1]."""
    images = _parse_idx(_read_bytes(images_path), IMAGES_MAGIC, images_path)
    labels = _parse_idx(_read_bytes(labels_path), LABELS_MAGIC, labels_path)
    if len(images) != len(labels):
        raise CountMismatchError(f"{len(images)} images but {len(labels)} labels")
    return Dataset(images.reshape(len(images), -1) / 255.0, labels.astype(np.int64))


def save_mnist_idx(data: Dataset, images_path: PathLike, labels_path: PathLike, shape: Tuple[int, int] = (28, 28)) -> None:
    """Write ``data`` back to IDX; inputs are rescaled by 255 and rounded to bytes."""
    n = len(data)
    if data.inputs.shape[1] != shape[0] * shape[1]:
        raise ValueError(f"inputs have {data.inputs.shape[1]} columns, not {shape[0]}x{shape[1]}")
    pixels = np.clip(np.rint(data.inputs * 255.0), 0, 255).astype(np.uint8)
    Path(images_path).write_bytes(struct.pack(">IIII", IMAGES_MAGIC, n, *shape) + pixels.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", LABELS_MAGIC, n) + data.labels.astype(np.uint8).tobytes())


def find_mnist(directory: Optional[PathLike] = None, prefer: str = "train") -> Tuple[Path, Path]:
    """Locate a standard MNIST image/label file pair, gzipped or not."""
    directory = Path(directory) if directory is not None else data_dir()
    prefixes = ["train", "t10k"] if prefer == "train" else ["t10k", "train"]
    for prefix in prefixes:
        for suffix in ("", ".gz"):
            images = directory / f"{prefix}-images-idx3-ubyte{suffix}"
            labels = directory / f"{prefix}-labels-idx1-ubyte{suffix}"
            if images.exists() and labels.exists():
                return images, labels
    raise FileNotFoundError(
        f"no MNIST IDX files (train-/t10k-images-idx3-ubyte[.gz]) in {directory}; set ${DATA_DIR_ENV}"
    )


def load_cifar10_batches(paths: Iterable[PathLike]) -> Dataset:
    """Concatenate CIFAR-10 binary batches (label byte + 3072 pixel bytes per record)."""
    inputs, labels = [], []
    for path in paths:
        blob = _read_bytes(path)
        if len(blob) % CIFAR_RECORD_BYTES:
            raise TruncatedFileError(f"{path}: {len(blob)} bytes is not a multiple of {CIFAR_RECORD_BYTES}")
        records = np.frombuffer(blob, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels.append(records[:, 0].astype(np.int64))
        inputs.append(records[:, 1:] / 255.0)
    return Dataset(np.concatenate(inputs), np.concatenate(labels))


def load_digits() -> Dataset:
    """scikit-learn's bundled 8x8 handwritten digits, pixels scaled to [0, 1]."""
    from sklearn.datasets import load_digits as _load

    bunch = _load()
    return Dataset(bunch.data / 16.0, bunch.target)


def generate_blobs(classes: int, per_class: int, dim: int, spread: float, seed: int) -> Dataset:
    """Gaussian clusters around well separated class means, rows shuffled."""
    if classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, 1.0, size=(classes, dim))
    means *= 3.0 / np.linalg.norm(means, axis=1, keepdims=True)
    labels = np.repeat(np.arange(classes), per_class)
    inputs = means[labels] + spread * rng.normal(size=(len(labels), dim))
    order = rng.permutation(len(labels))
    return Dataset(inputs[order], labels[order])


def split(data: Dataset, seed: int) -> SplitDataset:
    """Seeded 80/20 train/validation split."""
    n = len(data)
    if n < 5:
        raise ValueError(f"need at least 5 examples to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = (4 * n + 2) // 5
    return SplitDataset(data.subset(order[:n_train]), data.subset(order[n_train:]), seed)
