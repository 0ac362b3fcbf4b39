"""Dataset ingestion and the synthetic problems used as test oracles.

Parsers for the LIBSVM text format (regression sets) and the big-endian
IDX binary format (image/label sets), a train/test splitter, the convex
surrogate problem whose l1-regularized minimizer is known in closed form,
and deterministic generators for a Mackey-Glass lag-regression task and a
Gaussian-clusters classification task.  The library only ever consumes
local files; anything network-related lives in helper scripts.
"""

from __future__ import annotations

import gzip
import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .nn import Parameters
from .numerics import SeededRng, as_vector
from .optim import prox_l1


class DataFormatError(ValueError):
    """Input file violates its declared format."""


class EmptyDatasetError(DataFormatError):
    """The source contained no samples."""


@dataclass
class Dataset:
    """Feature matrix plus targets.

    Regression targets are an (N, q) float array; classification targets a
    1-d int array of 0-based class indices with `classes` set.
    """

    features: np.ndarray
    targets: np.ndarray
    classes: Optional[int] = None
    feature_names: Optional[list[str]] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(f"features must be a non-empty 2-d array, got shape {self.features.shape}")
        if self.is_classification:
            self.targets = np.asarray(self.targets, dtype=np.int64)
            if self.targets.ndim != 1:
                raise ValueError("class labels must be 1-d")
            if self.targets.size and (self.targets.min() < 0 or self.targets.max() >= self.classes):
                raise ValueError(f"class labels must lie in 0..{self.classes - 1}")
        else:
            self.targets = np.asarray(self.targets, dtype=np.float64)
            if self.targets.ndim == 1:
                self.targets = self.targets[:, None]
        if self.targets.shape[0] != self.features.shape[0]:
            raise ValueError(f"{self.features.shape[0]} samples but {self.targets.shape[0]} targets")

    @property
    def is_classification(self) -> bool:
        return self.classes is not None

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.targets[idx], self.classes, self.feature_names)


def _iter_lines(source):
    if isinstance(source, (str, Path)):
        with open(source, "r") as fh:
            yield from fh
    elif hasattr(source, "read"):
        yield from source
    else:
        yield from source


def parse_libsvm(source, n_features: Optional[int] = None, classification: bool = False,
                 classes: Optional[int] = None) -> Dataset:
    """Read `<label> <idx>:<val> ...` lines (1-based ascending indices).

    `#` starts a comment.  Missing indices are zero-filled; the feature
    count is the largest index seen unless given.  With classification=True
    the labels are rounded to 0-based class indices.
    """
    rows: list[dict[int, float]] = []
    labels: list[float] = []
    max_index = 0
    for lineno, raw in enumerate(_iter_lines(source), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            label = float(parts[0])
        except ValueError:
            raise DataFormatError(f"line {lineno}: bad label {parts[0]!r}")
        entries: dict[int, float] = {}
        previous = 0
        for token in parts[1:]:
            try:
                idx_text, val_text = token.split(":", 1)
                idx = int(idx_text)
                val = float(val_text)
            except ValueError:
                raise DataFormatError(f"line {lineno}: bad feature token {token!r}")
            if idx < 1:
                raise DataFormatError(f"line {lineno}: feature index {idx} is not 1-based")
            if idx <= previous:
                raise DataFormatError(f"line {lineno}: feature indices must be ascending, "
                                      f"got {idx} after {previous}")
            previous = idx
            entries[idx] = val
        max_index = max(max_index, previous)
        rows.append(entries)
        labels.append(label)
    if not rows:
        raise EmptyDatasetError("no samples in LIBSVM source")
    p = n_features if n_features is not None else max_index
    if max_index > p:
        raise DataFormatError(f"feature index {max_index} exceeds declared feature count {p}")
    X = np.zeros((len(rows), p))
    for i, entries in enumerate(rows):
        for idx, val in entries.items():
            X[i, idx - 1] = val
    if classification:
        y = np.rint(np.asarray(labels)).astype(np.int64)
        k = classes if classes is not None else int(y.max()) + 1
        return Dataset(X, y, classes=k)
    return Dataset(X, np.asarray(labels)[:, None])


def serialize_libsvm(dataset: Dataset, target) -> None:
    """Write a Dataset back out in LIBSVM text form (nonzero features only)."""
    if dataset.is_classification:
        labels = (str(int(v)) for v in dataset.targets)
    else:
        if dataset.targets.shape[1] != 1:
            raise ValueError("LIBSVM serialization needs scalar targets")
        labels = (repr(float(v)) for v in dataset.targets[:, 0])
    own = isinstance(target, (str, Path))
    fh = open(target, "w") if own else target
    try:
        for label, row in zip(labels, dataset.features):
            toks = [label]
            for j in np.nonzero(row)[0]:
                toks.append(f"{j + 1}:{float(row[j])!r}")
            fh.write(" ".join(toks) + "\n")
    finally:
        if own:
            fh.close()


IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _read_bytes(source) -> bytes:
    if isinstance(source, (str, Path)):
        path = Path(source)
        opener = gzip.open if path.suffix == ".gz" else open
        with opener(path, "rb") as fh:
            return fh.read()
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    return source.read()


def parse_idx(source) -> np.ndarray:
    """Decode an IDX payload.

    Magic 0x00000803 (u8, 3 dims): images, scaled to [0, 1] and flattened
    to (count, rows*cols).  Magic 0x00000801 (u8, 1 dim): labels as a 1-d
    int array.  Anything else is rejected.
    """
    blob = _read_bytes(source)
    if len(blob) < 4:
        raise DataFormatError("IDX source shorter than its magic number")
    magic = struct.unpack(">I", blob[:4])[0]
    if magic == IDX_LABELS_MAGIC:
        ndim = 1
    elif magic == IDX_IMAGES_MAGIC:
        ndim = 3
    else:
        raise DataFormatError(f"unsupported IDX magic 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise DataFormatError("IDX header truncated")
    dims = struct.unpack(f">{ndim}I", blob[4:header])
    expected = int(np.prod(dims))
    payload = np.frombuffer(blob, dtype=np.uint8, offset=header)
    if payload.size != expected:
        raise DataFormatError(f"IDX payload has {payload.size} bytes, header declares {expected}")
    if ndim == 1:
        return payload.astype(np.int64)
    count = dims[0]
    return payload.astype(np.float64).reshape(count, dims[1] * dims[2]) / 255.0


def write_idx_images(target, images: np.ndarray) -> None:
    """Encode (N, rows, cols) u8 images as an IDX blob (test fixture helper)."""
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError("expected (count, rows, cols) u8 images")
    blob = struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape) + images.tobytes()
    _write_bytes(target, blob)


def write_idx_labels(target, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    blob = struct.pack(">II", IDX_LABELS_MAGIC, labels.size) + labels.astype(np.uint8).tobytes()
    _write_bytes(target, blob)


def _write_bytes(target, blob: bytes) -> None:
    if isinstance(target, (str, Path)):
        path = Path(target)
        opener = gzip.open if path.suffix == ".gz" else open
        with opener(path, "wb") as fh:
            fh.write(blob)
    else:
        target.write(blob)


_MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def find_mnist(directory) -> Optional[dict[str, Path]]:
    """Locate the four standard MNIST IDX files (plain or .gz) in a directory."""
    directory = Path(directory)
    found = {}
    for key, stem in _MNIST_FILES.items():
        for candidate in (directory / stem, directory / (stem + ".gz")):
            if candidate.is_file():
                found[key] = candidate
                break
        else:
            return None
    return found


def load_mnist(directory) -> tuple[Dataset, Dataset]:
    """Load the standard MNIST files from a directory into two Datasets."""
    paths = find_mnist(directory)
    if paths is None:
        raise FileNotFoundError(f"MNIST IDX files not found under {directory}")
    train = Dataset(parse_idx(paths["train_images"]), parse_idx(paths["train_labels"]), classes=10)
    test = Dataset(parse_idx(paths["test_images"]), parse_idx(paths["test_labels"]), classes=10)
    return train, test


def split(dataset: Dataset, train_count: int, seed: Optional[int] = None) -> tuple[Dataset, Dataset]:
    """Split into (train, test); sequential by default, shuffled when a seed
    is given."""
    n = dataset.n_samples
    if not 0 < train_count < n:
        raise ValueError(f"train_count must be in 1..{n - 1}, got {train_count}")
    if seed is None:
        order = np.arange(n)
    else:
        from .numerics import shuffle_indices
        order = shuffle_indices(n, SeededRng(seed))
    return dataset.subset(order[:train_count]), dataset.subset(order[train_count:])


class SurrogateProblem:
    """The separable quadratic L(w) = 0.5 * ||w - c||^2.

    The one regime where everything is known in closed form: the gradient
    is w - c and the l1-regularized minimizer is the soft threshold of c,
    which makes this the ground-truth oracle for the selection algorithms.
    block_sizes splits c into independent per-"layer" blocks so the
    multi-parameter machinery can be exercised too.
    """

    def __init__(self, center, block_sizes: Optional[Sequence[int]] = None):
        c = as_vector(center)
        if block_sizes is None:
            block_sizes = [c.size]
        if sum(block_sizes) != c.size or any(s < 1 for s in block_sizes):
            raise ValueError(f"block sizes {block_sizes} do not tile a vector of length {c.size}")
        bounds = np.cumsum([0] + list(block_sizes))
        self.center = c
        self.blocks = [c[a:b].copy() for a, b in zip(bounds[:-1], bounds[1:])]

    @property
    def depth(self) -> int:
        return len(self.blocks)

    @property
    def weight_counts(self) -> tuple[int, ...]:
        return tuple(b.size for b in self.blocks)

    @property
    def sample_count(self) -> int:
        return 1

    def init_params(self, rng: SeededRng) -> Parameters:
        # Convexity makes the start irrelevant; zero keeps runs reproducible.
        return Parameters([np.zeros(b.size) for b in self.blocks],
                          [np.zeros(0) for _ in self.blocks])

    def _gather(self, params: Parameters) -> np.ndarray:
        return np.concatenate([w.ravel() for w in params.weights])

    def batch_fidelity_and_grads(self, params: Parameters, idx):
        grads = Parameters([w - b for w, b in zip(params.weights, self.blocks)],
                           [np.zeros(0) for _ in self.blocks])
        value = 0.5 * sum(float(np.sum(g * g)) for g in grads.weights)
        return value, grads

    def fidelity(self, params: Parameters) -> float:
        return self.batch_fidelity_and_grads(params, None)[0]

    def metrics(self, params: Parameters):
        return None

    # Oracle methods: exact answers for the lasso problem on this loss.

    def loss(self, w) -> float:
        w = as_vector(w)
        return 0.5 * float(np.sum((w - self.center) ** 2))

    def gradient(self, w) -> np.ndarray:
        return as_vector(w) - self.center

    def lasso_solution(self, lam) -> np.ndarray:
        """Exact minimizer of L(w) + sum_k lam_k ||w_k||_1."""
        lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
        if lam.size == 1:
            lam = np.full(self.depth, lam[0])
        return np.concatenate([prox_l1(b, lam_k) for b, lam_k in zip(self.blocks, lam)])

    def solution_levels(self, lam) -> tuple[int, ...]:
        """Per-block nonzero counts of the exact solution: #{|c_i| > lam_k}."""
        lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
        if lam.size == 1:
            lam = np.full(self.depth, lam[0])
        return tuple(int(np.sum(np.abs(b) > lam_k)) for b, lam_k in zip(self.blocks, lam))


def make_surrogate(d: int, rng: SeededRng, lo: float = -2.0, hi: float = 2.0,
                   block_sizes: Optional[Sequence[int]] = None) -> SurrogateProblem:
    """Surrogate with c drawn i.i.d. Uniform[lo, hi]."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return SurrogateProblem(rng.uniforms(d, lo, hi), block_sizes)


def make_mackey_glass(n_samples: int = 1385, n_lags: int = 6, lag_step: int = 6,
                      horizon: int = 6, seed: int = 20240801, tau: float = 17.0,
                      beta: float = 0.2, gamma: float = 0.1, exponent: float = 10.0,
                      dt: float = 0.1, washout: float = 300.0) -> Dataset:
    """Lagged-observation regression on a Mackey-Glass series.

    Integrates x'(t) = beta*x(t-tau)/(1 + x(t-tau)^exponent) - gamma*x(t)
    (Euler, step dt) from a seeded initial history, discards a washout, and
    emits samples whose features are n_lags past values spaced lag_step
    apart and whose target is the value `horizon` ahead of the last lag.
    Deterministic for a given seed.
    """
    rng = SeededRng(seed)
    x0 = 1.2 + 0.2 * (rng.uniform() - 0.5)
    steps_per_unit = int(round(1.0 / dt))
    delay_steps = int(round(tau / dt))
    span = washout + (n_lags - 1) * lag_step + n_samples + horizon + 1
    total_steps = int(round(span / dt)) + delay_steps
    x = np.empty(total_steps + 1)
    x[: delay_steps + 1] = x0
    for i in range(delay_steps, total_steps):
        lagged = x[i - delay_steps]
        x[i + 1] = x[i] + dt * (beta * lagged / (1.0 + lagged ** exponent) - gamma * x[i])
    series = x[delay_steps::steps_per_unit]
    first = int(washout) + (n_lags - 1) * lag_step
    features = np.empty((n_samples, n_lags))
    targets = np.empty((n_samples, 1))
    for i in range(n_samples):
        t = first + i
        for j in range(n_lags):
            features[i, j] = series[t - (n_lags - 1 - j) * lag_step]
        targets[i, 0] = series[t + horizon]
    return Dataset(features, targets)


def _normals(rng: SeededRng, n: int) -> np.ndarray:
    """Standard normals via Box-Muller on the splitmix stream."""
    m = (n + 1) // 2
    u1 = 1.0 - rng.uniforms(m)
    u2 = rng.uniforms(m)
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
    return out[:n]


def make_cluster_classification(n_samples: int, n_features: int, classes: int,
                                seed: int = 0, spread: float = 0.35) -> Dataset:
    """Gaussian clusters around per-class centers; a small synthetic stand-in
    for smoke-testing the classification pipeline."""
    if classes < 2:
        raise ValueError("need at least 2 classes")
    rng = SeededRng(seed)
    centers = rng.uniforms(classes * n_features, -1.0, 1.0).reshape(classes, n_features)
    labels = np.array([rng.below(classes) for _ in range(n_samples)], dtype=np.int64)
    noise = _normals(rng, n_samples * n_features).reshape(n_samples, n_features)
    return Dataset(centers[labels] + spread * noise, labels, classes=classes)
