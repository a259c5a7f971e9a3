"""IDX (MNIST) reading/writing and direct-injection input encoding."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .compiler import HORIZON_CAP
from .errors import InputError, ParseError
from .network import StimulusPlan

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

MNIST_NAMES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


@dataclass(frozen=True, eq=False)
class IdxDataset:
    images: np.ndarray  # (count, rows, cols) uint8
    labels: np.ndarray  # (count,) uint8

    def __len__(self):
        return len(self.labels)

    def head(self, n: int) -> "IdxDataset":
        return IdxDataset(self.images[:n], self.labels[:n])


def _open(path: Path):
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path, expected_magic: int | None = None) -> np.ndarray:
    """Read an unsigned-byte IDX file into an array of its declared shape."""
    path = Path(path)
    with _open(path) as fh:
        data = fh.read()
    if len(data) < 4:
        raise ParseError("truncated header", path=path, offset=len(data))
    (magic,) = struct.unpack(">I", data[:4])
    if expected_magic is not None and magic != expected_magic:
        raise ParseError(f"bad magic 0x{magic:08X}, expected 0x{expected_magic:08X}", path=path, offset=0)
    if magic >> 8 != 0x08:
        raise ParseError(f"unsupported IDX element type in magic 0x{magic:08X}", path=path, offset=0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise ParseError("truncated dimension header", path=path, offset=len(data))
    dims = struct.unpack(f">{ndim}I", data[4:header])
    need = int(np.prod(dims)) if dims else 0
    if len(data) - header < need:
        raise ParseError(f"payload holds {len(data) - header} bytes, dimensions need {need}",
                         path=path, offset=len(data))
    return np.frombuffer(data, dtype=np.uint8, count=need, offset=header).reshape(dims).copy()


def write_idx(path, array) -> None:
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">I", 0x0800 | arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(header + arr.tobytes())


def load_idx(image_path, label_path) -> IdxDataset:
    images = read_idx(image_path, IMAGES_MAGIC)
    labels = read_idx(label_path, LABELS_MAGIC)
    if len(images) != len(labels):
        raise ParseError(f"{len(images)} images but {len(labels)} labels", path=label_path, offset=4)
    if labels.size and labels.max() > 9:
        raise ParseError("label outside 0..9", path=label_path, offset=8 + int(np.argmax(labels > 9)))
    return IdxDataset(images, labels)


def find_mnist(directory, split: str) -> IdxDataset:
    """Load ``train`` or ``test`` from a directory of standard MNIST file names (optionally .gz)."""
    d = Path(directory)
    paths = []
    for kind in ("images", "labels"):
        base = d / MNIST_NAMES[f"{split}_{kind}"]
        gz = base.with_name(base.name + ".gz")
        paths.append(base if base.exists() or not gz.exists() else gz)
    return load_idx(*paths)


def encode_injection(image, T: int, gain: float) -> StimulusPlan:
    """Constant direct injection ``round(pixel / 255 * gain)`` at every timestep."""
    if not gain > 0:
        raise InputError("gain must be positive")
    if not 1 <= T <= HORIZON_CAP:
        raise InputError(f"T must lie in [1, {HORIZON_CAP}]")
    per_step = np.floor(np.asarray(image, dtype=np.float64).reshape(-1) / 255.0 * gain + 0.5).astype(np.int64)
    return StimulusPlan(np.repeat(per_step[None, :], T, axis=0))


def encode_batch(images, T: int, gain: float) -> np.ndarray:
    """``(B, T, n_pixels)`` integer injections for a batch of images."""
    if not gain > 0:
        raise InputError("gain must be positive")
    flat = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    per_step = np.floor(flat / 255.0 * gain + 0.5).astype(np.int64)
    return np.repeat(per_step[:, None, :], T, axis=1)


def export_bundled_mnist(out_dir, n_train=1000, n_test=1000, seed=0) -> Path:
    """Write a disjoint train/test MNIST slice as IDX files.

    Source is the 5,000-image MNIST sample shipped inside ``mlxtend``; it is
    sorted by label, so a seeded permutation mixes classes before slicing.
    """
    import importlib.util

    spec = importlib.util.find_spec("mlxtend")
    if spec is None:
        raise FileNotFoundError("mlxtend is not installed; pass real MNIST IDX files instead")
    csv = Path(spec.origin).parent / "data" / "data" / "mnist_5k.csv.gz"
    table = np.loadtxt(gzip.open(csv), delimiter=",", dtype=np.int64)
    if n_train + n_test > len(table):
        raise InputError(f"only {len(table)} bundled images")
    order = np.random.default_rng(seed).permutation(len(table))
    images = table[order, :-1].reshape(-1, 28, 28)
    labels = table[order, -1]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / MNIST_NAMES["train_images"], images[:n_train])
    write_idx(out / MNIST_NAMES["train_labels"], labels[:n_train])
    write_idx(out / MNIST_NAMES["test_images"], images[n_train:n_train + n_test])
    write_idx(out / MNIST_NAMES["test_labels"], labels[n_train:n_train + n_test])
    return out
