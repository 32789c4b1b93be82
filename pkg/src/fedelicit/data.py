"""Client datasets: synthetic non-IID partitions and MNIST IDX ingestion.

Partition rule: each sample of client ``i`` belongs to the client's dominant
class ``i mod K`` with probability ``q`` and otherwise to a class drawn
uniformly from all ``K``. The test set is drawn from the uniform mixture with
correct labels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentSpec
from .model import Dataset

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass
class FederatedData:
    clients: list[Dataset]
    test: Dataset
    w_true: np.ndarray | None = None


class IDXError(ValueError):
    """Malformed IDX file; ``offset`` is the byte position of the problem."""

    def __init__(self, path, offset: int, message: str):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{path}: byte {offset}: {message}")


def partition_classes(n: int, client: int, q: float, K: int, rng: np.random.Generator) -> np.ndarray:
    """Class of every sample of one client under the dominant-class rule."""
    if not 0.0 <= q <= 1.0:
        raise ConfigError(f"q must lie in [0, 1], got {q}")
    if K < 1:
        raise ConfigError("need at least one class")
    n_dom = rng.binomial(n, q)
    cls = np.concatenate([np.full(n_dom, client % K), rng.integers(0, K, n - n_dom)])
    return rng.permutation(cls)


def generate_synthetic(spec: ExperimentSpec, rng: np.random.Generator) -> FederatedData:
    """Gaussian class clusters in ``feature_dim`` dimensions.

    Features are ``(class_sep * m_k + z) / sqrt(d)`` with ``m_k, z`` standard
    normal. Logistic labels are the cluster index. Ridge labels are
    ``x @ w_true + noise * eps`` clipped to ``[-y_clip, y_clip]``, so
    ``y_max = y_clip**2``.
    """
    K, d, n = spec.num_classes, spec.feature_dim, spec.samples_per_client
    means = rng.standard_normal((K, d))
    w_true = rng.standard_normal(d) if spec.model == "ridge" else None

    def draw(cls):
        X = (spec.class_sep * means[cls] + rng.standard_normal((len(cls), d))) / np.sqrt(d)
        if w_true is None:
            return Dataset(X, cls, num_classes=K)
        y = np.clip(X @ w_true + spec.noise * rng.standard_normal(len(cls)), -spec.y_clip, spec.y_clip)
        return Dataset(X, y, y_max=spec.y_clip**2)

    clients = [draw(partition_classes(n, i, spec.q, K, rng)) for i in range(spec.n_clients)]
    test = draw(rng.integers(0, K, spec.n_test))
    return FederatedData(clients, test, w_true)


def _header(buf: bytes, path, magic: int, n_dims: int) -> tuple[int, ...]:
    need = 4 * (1 + n_dims)
    if len(buf) < need:
        raise IDXError(path, len(buf), f"truncated header: need {need} bytes, file has {len(buf)}")
    found, *dims = struct.unpack(f">{1 + n_dims}I", buf[:need])
    if found != magic:
        raise IDXError(path, 0, f"bad magic number 0x{found:08x}, expected 0x{magic:08x}")
    return tuple(dims)


def read_idx_images(path) -> np.ndarray:
    """``(n, rows, cols)`` uint8 array from an IDX image file."""
    buf = Path(path).read_bytes()
    n, rows, cols = _header(buf, path, IMAGE_MAGIC, 3)
    end = 16 + n * rows * cols
    if len(buf) < end:
        raise IDXError(path, len(buf), f"truncated pixel data: expected {end} bytes")
    return np.frombuffer(buf, dtype=np.uint8, count=n * rows * cols, offset=16).reshape(n, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    (n,) = _header(buf, path, LABEL_MAGIC, 1)
    if len(buf) < 8 + n:
        raise IDXError(path, len(buf), f"truncated label data: expected {8 + n} bytes")
    labels = np.frombuffer(buf, dtype=np.uint8, count=n, offset=8)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise IDXError(path, 8 + int(bad[0]), f"label {labels[bad[0]]} outside 0..9")
    return labels


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array as IDX (images if 3-D, labels if 1-D)."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    magic = {3: IMAGE_MAGIC, 1: LABEL_MAGIC}.get(array.ndim)
    if magic is None:
        raise ValueError("IDX writer supports 1-D labels or 3-D images")
    with open(path, "wb") as fh:
        fh.write(struct.pack(f">{1 + array.ndim}I", magic, *array.shape))
        fh.write(array.tobytes())


def load_mnist(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Features scaled to ``[0, 1]`` and flattened, plus integer labels."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise IDXError(labels_path, 4, f"count mismatch: {len(images)} images vs {len(labels)} labels")
    return images.reshape(len(images), -1).astype(np.float64) / 255.0, labels.astype(np.int64)


def load_mnist_subset(images_path, labels_path, per_client: int, spec: ExperimentSpec,
                      rng: np.random.Generator) -> FederatedData:
    """Partition MNIST samples across clients by the dominant-class rule.

    Sampling is without replacement; the test set is drawn uniformly from
    the samples no client received.
    """
    X, y = load_mnist(images_path, labels_path)
    K = 10
    pools = [list(rng.permutation(np.flatnonzero(y == k))) for k in range(K)]
    clients = []
    for i in range(spec.n_clients):
        idx = []
        for k in partition_classes(per_client, i, spec.q, K, rng):
            if not pools[k]:
                raise ConfigError(f"not enough samples of class {k} for the requested partition")
            idx.append(pools[k].pop())
        clients.append(Dataset(X[idx], y[idx], num_classes=K))
    rest = np.array(sorted(j for pool in pools for j in pool), dtype=np.int64)
    if len(rest) < spec.n_test:
        raise ConfigError(f"only {len(rest)} samples left for a test set of {spec.n_test}")
    test_idx = rng.choice(rest, spec.n_test, replace=False)
    return FederatedData(clients, Dataset(X[test_idx], y[test_idx], num_classes=K))


def build_data(spec: ExperimentSpec, rng: np.random.Generator) -> FederatedData:
    if spec.data == "mnist_subset":
        return load_mnist_subset(spec.mnist_images, spec.mnist_labels, spec.samples_per_client, spec, rng)
    return generate_synthetic(spec, rng)
