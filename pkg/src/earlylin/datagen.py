"""Input generation, label rules, concentration diagnostics, and CSV I/O.

Rows are generated from independent counter-based streams (numpy Philox,
keyed by (seed, domain) with the row index placed in the high words of the
256-bit counter), so row i depends only on (seed, i): datasets can be
extended without perturbing existing rows, and generation order is
irrelevant.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels

TRACE_TOL = 1e-9
DEFAULT_SPECTRUM_BOUND = 10.0

# Domain tags keep the Philox streams of different generators disjoint.
_DOMAIN_INPUTS = 1
_DOMAIN_HYPERCUBE = 2

_BASES = ("gaussian", "rademacher", "uniform-scaled")
_UNIFORM_HALF_WIDTH = math.sqrt(3.0)  # Unif[-sqrt(3), sqrt(3)] has variance 1


class LabelRangeWarning(UserWarning):
    """Raised when generated labels fall outside [-1, 1]."""


@dataclass(frozen=True)
class CovarianceSpec:
    """Diagonal covariance with tr(Sigma) = d and bounded spectrum."""

    kind: str  # "identity" or "diagonal"
    d: int
    diagonal: tuple[float, ...] | None = None
    spectrum_bound: float = DEFAULT_SPECTRUM_BOUND

    def __post_init__(self):
        if self.kind not in ("identity", "diagonal"):
            raise ValueError(f"covariance kind must be identity or diagonal, got {self.kind!r}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.kind == "diagonal":
            if self.diagonal is None or len(self.diagonal) != self.d:
                raise ValueError("diagonal covariance needs a spectrum of length d")
            spec = np.asarray(self.diagonal, dtype=float)
            if np.any(spec <= 0):
                raise ValueError("covariance spectrum entries must be positive")
            if abs(float(spec.sum()) - self.d) > TRACE_TOL:
                raise ValueError(
                    f"covariance trace must equal d={self.d} (got {spec.sum()!r})"
                )
            if float(spec.max()) > self.spectrum_bound:
                raise ValueError(
                    f"covariance spectrum entry {spec.max()} exceeds bound {self.spectrum_bound}"
                )

    def spectrum(self) -> np.ndarray:
        if self.kind == "identity":
            return np.ones(self.d)
        return np.asarray(self.diagonal, dtype=float)


def identity_covariance(d: int) -> CovarianceSpec:
    return CovarianceSpec("identity", d)


@dataclass(frozen=True)
class DataSpec:
    covariance: CovarianceSpec
    base: str
    n: int
    seed: int

    def __post_init__(self):
        if self.base not in _BASES:
            raise ValueError(f"base must be one of {_BASES}, got {self.base!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @property
    def d(self) -> int:
        return self.covariance.d


@dataclass
class Dataset:
    """Inputs, labels, and a provenance record describing where they came from."""

    X: np.ndarray
    y: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ConcentrationReport:
    max_norm_dev: float        # max_i |  ||x_i||^2 / d - 1 |
    max_offdiag: float         # max_{i != j} |<x_i, x_j>| / d
    gram_spectral_over_n: float  # ||X X^T|| / n


def _row_rng(seed: int, domain: int, row: int) -> np.random.Generator:
    key = (int(seed) & 0xFFFFFFFFFFFFFFFF) | (domain << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=row << 128))


def _base_row(rng: np.random.Generator, base: str, d: int) -> np.ndarray:
    if base == "gaussian":
        return rng.standard_normal(d)
    if base == "rademacher":
        return 2.0 * rng.integers(0, 2, size=d) - 1.0
    return rng.uniform(-_UNIFORM_HALF_WIDTH, _UNIFORM_HALF_WIDTH, size=d)


def generate_inputs(spec: DataSpec) -> np.ndarray:
    """Draw X (n x d) with rows Sigma^{1/2} x_bar, x_bar iid per the base law."""
    n, d = spec.n, spec.d
    X = np.empty((n, d))
    for i in range(n):
        X[i] = _base_row(_row_rng(spec.seed, _DOMAIN_INPUTS, i), spec.base, d)
    if spec.covariance.kind != "identity":
        X *= np.sqrt(spec.covariance.spectrum())[None, :]
    return X


def generate_hypercube(n: int, d: int, seed: int) -> np.ndarray:
    """Uniform rows from {-1, +1}^d (entries exactly +-1)."""
    X = np.empty((n, d))
    for i in range(n):
        rng = _row_rng(seed, _DOMAIN_HYPERCUBE, i)
        X[i] = 2.0 * rng.integers(0, 2, size=d) - 1.0
    return X


def labels_teacher_sign(X: np.ndarray, teacher) -> np.ndarray:
    """y = sign(teacher(x)) with sign(0) := +1."""
    from .network import forward  # deferred: datagen is otherwise upstream of network

    u = forward(teacher, X)
    return np.where(u >= 0.0, 1.0, -1.0)


def labels_norm_dependent(X: np.ndarray, a: np.ndarray) -> np.ndarray:
    """y = ||x||/sqrt(d) + relu(a.x); raw values kept, out-of-range reported."""
    a = np.asarray(a, dtype=float)
    d = X.shape[1]
    y = np.linalg.norm(X, axis=1) / math.sqrt(d) + np.maximum(X @ a, 0.0)
    n_out = int(np.sum(np.abs(y) > 1.0))
    if n_out:
        warnings.warn(
            f"{n_out} of {y.size} norm-dependent labels fall outside [-1, 1]; "
            "kept raw (loaders enforce the range, generators do not)",
            LabelRangeWarning,
            stacklevel=2,
        )
    return y


def concentration_report(X: np.ndarray) -> ConcentrationReport:
    """Norm, inner-product, and Gram-spectral concentration diagnostics."""
    n, d = X.shape
    sq = np.sum(X * X, axis=1) / d
    gram = X @ X.T
    off = np.abs(gram - np.diag(np.diag(gram)))
    max_off = float(off.max() / d) if n > 1 else 0.0
    return ConcentrationReport(
        max_norm_dev=float(np.max(np.abs(sq - 1.0))),
        max_offdiag=max_off,
        gram_spectral_over_n=kernels.spectral_norm(gram) / n,
    )


def save_csv(dataset: Dataset, path) -> None:
    """Write `x1,...,xd,y` rows with 17 significant digits (lossless for float64)."""
    n, d = dataset.X.shape
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j + 1}" for j in range(d)] + ["y"])
        for i in range(n):
            writer.writerow([f"{v:.17g}" for v in dataset.X[i]] + [f"{dataset.y[i]:.17g}"])


def load_csv(path) -> Dataset:
    """Read a dataset written by save_csv; rejects malformed rows and |y| > 1."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        d = len(header) - 1
        if d < 1 or header[-1] != "y":
            raise ValueError(f"{path}: expected header x1,...,xd,y, got {header!r}")
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != d + 1:
                raise ValueError(
                    f"{path}: line {lineno}: expected {d + 1} fields, got {len(row)}"
                )
            try:
                values = [float(v) for v in row]
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric field") from None
            if abs(values[-1]) > 1.0:
                raise ValueError(
                    f"{path}: line {lineno}: label {values[-1]} outside [-1, 1]"
                )
            rows.append(values[:-1])
            labels.append(values[-1])
    return Dataset(
        X=np.asarray(rows, dtype=float),
        y=np.asarray(labels, dtype=float),
        provenance={"source": str(path)},
    )
