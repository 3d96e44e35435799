"""Datasets on the unit sphere with bounded targets.

Inputs are stored column-wise, X with shape (m_x, n); targets Y with shape
(m_y, n).  Classification datasets also carry integer labels (0-based).
"""

import csv
import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lintrain._rng import rng_for

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
NORM_TOL = 1e-12


def min_pairwise_sq_distance(X):
    """Exhaustive scan for min_{i<j} ||x_i - x_j||^2 over the columns of X."""
    rows = np.ascontiguousarray(np.asarray(X, dtype=float).T)
    best = np.inf
    for i in range(rows.shape[0] - 1):
        diff = rows[i + 1:] - rows[i]
        best = min(best, float(np.min(np.sum(diff * diff, axis=1))))
    return best


def one_hot(labels, m_y):
    labels = np.asarray(labels)
    Y = np.zeros((m_y, labels.size))
    Y[labels, np.arange(labels.size)] = 1.0
    return Y


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    labels: np.ndarray = None
    provenance: str = "synthetic"
    gamma: float = field(default=None)
    corruption_mask: np.ndarray = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
            raise ValueError(f"X {X.shape} and Y {Y.shape} must be (m, n) with equal n")
        norms = np.linalg.norm(X, axis=0)
        if np.any(np.abs(norms - 1.0) > NORM_TOL):
            worst = int(np.argmax(np.abs(norms - 1.0)))
            raise ValueError(f"input {worst} has norm {norms[worst]!r}, expected 1")
        if np.any(np.abs(Y) > 1.0):
            raise ValueError("targets must lie in [-1, 1]")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        if self.labels is not None:
            object.__setattr__(self, "labels", np.asarray(self.labels, dtype=int))
        if self.gamma is None:
            object.__setattr__(self, "gamma", min_pairwise_sq_distance(X) if self.n > 1 else np.inf)

    @property
    def n(self):
        return self.X.shape[1]

    @property
    def m_x(self):
        return self.X.shape[0]

    @property
    def m_y(self):
        return self.Y.shape[0]

    @property
    def separated(self):
        return self.gamma > 0

    @classmethod
    def from_labels(cls, X, labels, m_y, provenance="synthetic", **kw):
        labels = np.asarray(labels, dtype=int)
        if labels.size and (labels.min() < 0 or labels.max() >= m_y):
            raise ValueError(f"labels must lie in 0..{m_y - 1}")
        return cls(X, one_hot(labels, m_y), labels, provenance, **kw)

    def subset(self, idx):
        idx = np.asarray(idx)
        mask = None if self.corruption_mask is None else self.corruption_mask[idx]
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.X[:, idx], self.Y[:, idx], labels, self.provenance,
                       corruption_mask=mask)

    def to_csv(self, path):
        """One header line, then one row per sample: x..., y..., label."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = [f"x{i}" for i in range(self.m_x)] + [f"y{k}" for k in range(self.m_y)]
            if self.labels is not None:
                header.append("label")
            w.writerow(header)
            for i in range(self.n):
                row = [f"{v:.17g}" for v in self.X[:, i]] + [f"{v:.17g}" for v in self.Y[:, i]]
                if self.labels is not None:
                    row.append(str(self.labels[i]))
                w.writerow(row)

    @classmethod
    def from_csv(cls, path, provenance="synthetic"):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        xi = [j for j, h in enumerate(header) if h.startswith("x")]
        yi = [j for j, h in enumerate(header) if h.startswith("y")]
        data = np.array([[float(r[j]) for j in xi + yi] for r in body])
        X, Y = data[:, :len(xi)].T, data[:, len(xi):].T
        labels = None
        if "label" in header:
            labels = np.array([int(r[header.index("label")]) for r in body])
        return cls(X.copy(), Y.copy(), labels, provenance)


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def _read_idx(path, magic, ndim):
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise ValueError(f"{path}: truncated header")
    (got,) = struct.unpack_from(">I", raw, 0)
    if got != magic:
        raise ValueError(f"{path}: bad magic number 0x{got:08x}, expected 0x{magic:08x}")
    if len(raw) < 4 + 4 * ndim:
        raise ValueError(f"{path}: truncated header")
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    count = int(np.prod(dims))
    start = 4 + 4 * ndim
    if len(raw) - start < count:
        raise ValueError(f"{path}: truncated file, expected {count} bytes of data, "
                         f"found {len(raw) - start}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=start).reshape(dims)


def write_idx(path, array):
    """Write a uint8 array in IDX format (3-D images or 1-D labels)."""
    array = np.asarray(array, dtype=np.uint8)
    magic = IDX_IMAGES_MAGIC if array.ndim == 3 else IDX_LABELS_MAGIC
    if array.ndim not in (1, 3):
        raise ValueError("IDX writer supports 1-D labels or 3-D images")
    header = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(header + array.tobytes())


def load_idx(images_path, labels_path, limit=None, m_y=10):
    """MNIST-style IDX pair -> unit-norm inputs and one-hot targets."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    available = images.shape[0]
    if limit is not None:
        if limit > available:
            raise ValueError(f"requested {limit} samples but only {available} are available")
        images, labels = images[:limit], labels[:limit]
    if labels.size and labels.max() >= m_y:
        bad = int(np.argmax(labels >= m_y))
        raise ValueError(f"label {labels[bad]} at index {bad} outside 0..{m_y - 1}")
    X = images.reshape(images.shape[0], -1).T.astype(float)
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0):
        raise ValueError(f"image {int(np.argmax(norms == 0))} is all zeros; "
                         "it cannot be projected to the unit sphere")
    return Dataset.from_labels(X / norms, labels.astype(int), m_y, provenance="idx-file")


def _sphere(rng, m_x, n):
    X = rng.standard_normal((m_x, n))
    return X / np.linalg.norm(X, axis=0)


def synthesize(n, m_x, m_y, kind="separable", seed=0, teacher_seed=None, stream=0,
               max_retries=100):
    """Gaussian inputs projected to the sphere with class labels.

    ``random`` draws labels uniformly.  ``separable`` labels each input by
    argmax_k <v_k, x> for a fixed random matrix V drawn from ``teacher_seed``
    (defaults to ``seed``), so train and test sets built with the same
    teacher share one labeling rule.  Different ``stream`` values give
    disjoint input draws for the same seed.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if kind not in ("separable", "random"):
        raise ValueError(f"unknown kind {kind!r}")
    rng = rng_for(seed, "synthesize-inputs", stream)
    for _ in range(max_retries):
        X = _sphere(rng, m_x, n)
        gamma = min_pairwise_sq_distance(X)
        if gamma > 0:
            break
    else:
        raise RuntimeError(f"could not draw {n} distinct inputs in {max_retries} attempts")
    if kind == "random":
        labels = rng_for(seed, "synthesize-labels", stream).integers(0, m_y, n)
    else:
        teacher = rng_for(seed if teacher_seed is None else teacher_seed, "teacher")
        V = teacher.standard_normal((m_y, m_x))
        labels = np.argmax(V @ X, axis=0)
    return Dataset.from_labels(X, labels, m_y, provenance="synthetic", gamma=gamma)


def corrupt_labels(ds, p, seed, stream=0):
    """Replace each label by a uniform class with probability ``p``."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if ds.labels is None:
        raise ValueError("label corruption needs a classification dataset")
    rng = rng_for(seed, "corrupt", stream)
    mask = rng.random(ds.n) < p
    fresh = rng.integers(0, ds.m_y, ds.n)
    labels = np.where(mask, fresh, ds.labels)
    return Dataset.from_labels(ds.X, labels, ds.m_y, provenance="corrupted",
                               gamma=ds.gamma, corruption_mask=mask)
