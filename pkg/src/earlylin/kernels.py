"""Tangent-kernel matrices, their quadrature-based expectations, linear-model
kernels, the infinite-width CNN kernel on the hypercube, and spectral tooling.

Two bivariate-Gaussian conventions coexist deliberately: the first-layer
expected kernel parameterizes the 2x2 covariance by marginal *variances*
(entries [[a, c], [c, b]]), while the second-layer one parameterizes it by
marginal *standard deviations* (entries [[a^2, c], [c, b^2]]). Both are
implemented exactly as defined; the only place the distinction matters is
the two `expected_ntk_*` builders below.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .activations import (
    Activation,
    Moments,
    bivariate_expectation,
    phi_part,
    phi_prime_part,
)

PROVENANCES = (
    "ntk1", "ntk2", "ntk-full",
    "expected-ntk1", "expected-ntk2",
    "lin1", "lin2", "lin-full",
    "cnn-inf",
)

EXPECTED_NTK_MAX_N = 1024
_POWER_ITER_SEEDS = (0, 1)  # deterministic start + one (fixed-seed) restart


@dataclass(frozen=True)
class KernelMatrix:
    values: np.ndarray
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown kernel provenance {self.provenance!r}")

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class QVector:
    """Per-point norm feature q_i = theta0 + theta1 (s_i - 1) + theta2 (s_i - 1)^2
    with s_i = ||x_i|| / sqrt(d)."""

    q: np.ndarray


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    r_squared: float


def _symmetrize(K: np.ndarray) -> np.ndarray:
    return (K + K.T) / 2.0


def ntk_first_layer(net, X: np.ndarray) -> KernelMatrix:
    """(1/m) sum_r v_r^2 phi'(X w_r/sqrt(d)) phi'(X w_r/sqrt(d))^T  (.)  X X^T/d."""
    from .network import preactivations
    from .activations import phi_prime

    G = phi_prime(net.act, preactivations(net, X)) * net.v[None, :]
    K = ((G @ G.T) / net.m) * (X @ X.T / X.shape[1])
    return KernelMatrix(values=_symmetrize(K), provenance="ntk1")


def ntk_second_layer(net, X: np.ndarray) -> KernelMatrix:
    """(1/m) phi(X W^T/sqrt(d)) phi(X W^T/sqrt(d))^T."""
    from .network import jacobian_second_layer

    J2 = jacobian_second_layer(net, X)
    return KernelMatrix(values=_symmetrize(J2 @ J2.T), provenance="ntk2")


def ntk_full(net, X: np.ndarray) -> KernelMatrix:
    """First- plus second-layer tangent kernel."""
    K1 = ntk_first_layer(net, X)
    K2 = ntk_second_layer(net, X)
    return KernelMatrix(values=K1.values + K2.values, provenance="ntk-full")


def _expected_ntk_entries(X: np.ndarray, entry_fn) -> np.ndarray:
    n = X.shape[0]
    if n > EXPECTED_NTK_MAX_N:
        raise ValueError(
            f"expected-kernel quadrature is O(n^2 order^2); n={n} exceeds the "
            f"cap {EXPECTED_NTK_MAX_N}"
        )
    K = np.empty((n, n))
    for i in range(n):
        for j in range(i + 1):
            K[i, j] = K[j, i] = entry_fn(i, j)
    return K


def expected_ntk_first(X: np.ndarray, act: Activation, order: int = 64) -> KernelMatrix:
    """Infinite-width first-layer kernel: entries (x_i.x_j/d) E[phi'(z_i) phi'(z_j)]
    under the data-induced covariance with variances ||x_i||^2/d."""
    if order < 32:
        raise ValueError("expected-kernel quadrature needs order >= 32")
    d = X.shape[1]
    C = X @ X.T / d
    a = np.diag(C).copy()
    fp = phi_prime_part(act)

    def entry(i, j):
        c = C[i, j]
        bound = math.sqrt(a[i] * a[j])
        c = min(max(c, -bound), bound)  # Cauchy-Schwarz can be violated by fp error
        lam = np.array([[a[i], c], [c, a[j]]])
        return C[i, j] * bivariate_expectation(fp, fp, lam, order=order)

    return KernelMatrix(values=_expected_ntk_entries(X, entry), provenance="expected-ntk1")


def expected_ntk_second(X: np.ndarray, act: Activation, order: int = 64) -> KernelMatrix:
    """Infinite-width second-layer kernel: entries E[phi(z_i) phi(z_j)] where the
    marginal standard deviations are ||x_i||/sqrt(d) (note: stds, not variances)."""
    if order < 32:
        raise ValueError("expected-kernel quadrature needs order >= 32")
    d = X.shape[1]
    C = X @ X.T / d
    s = np.sqrt(np.diag(C))
    f = phi_part(act)

    def entry(i, j):
        c = C[i, j]
        bound = s[i] * s[j]
        c = min(max(c, -bound), bound)
        lam = np.array([[s[i] ** 2, c], [c, s[j] ** 2]])
        return bivariate_expectation(f, f, lam, order=order)

    return KernelMatrix(values=_expected_ntk_entries(X, entry), provenance="expected-ntk2")


def q_vector(X: np.ndarray, mom: Moments) -> QVector:
    d = X.shape[1]
    dev = np.linalg.norm(X, axis=1) / math.sqrt(d) - 1.0
    return QVector(q=mom.theta0 + mom.theta1 * dev + mom.theta2 * dev**2)


def linear_kernel(X: np.ndarray, mom: Moments, nu_value: float, which: str) -> KernelMatrix:
    """Kernels of the explicit linear feature maps.

    lin1     : (zeta^2 X X^T + nu^2 1 1^T) / d
    lin2     : (zeta^2 X X^T + nu^2/2 1 1^T) / d + q q^T
    lin-full : (2 zeta^2 X X^T + 3/2 nu^2 1 1^T) / d + q q^T
    """
    n, d = X.shape
    G = X @ X.T
    ones = np.ones((n, n))
    z2, n2 = mom.zeta**2, nu_value**2
    if which == "lin1":
        K = (z2 * G + n2 * ones) / d
    elif which in ("lin2", "lin-full"):
        q = q_vector(X, mom).q
        if which == "lin2":
            K = (z2 * G + 0.5 * n2 * ones) / d + np.outer(q, q)
        else:
            K = (2.0 * z2 * G + 1.5 * n2 * ones) / d + np.outer(q, q)
    else:
        raise ValueError(f"which must be lin1, lin2 or lin-full, got {which!r}")
    return KernelMatrix(values=_symmetrize(K), provenance=which)


def cnn_infinite_ntk(X: np.ndarray, q_filter: int, act: Activation,
                     order: int | None = None) -> KernelMatrix:
    """Infinite-width CNN kernel on hypercube inputs.

    Entry (i, j) is (1/d) sum_k [ P(rho_ijk) + Q(rho_ijk) rho_ijk ] over the d
    circular patch correlations rho_ijk = <x_i[k:k+q], x_j[k:k+q]>/q, with
    P(rho) = E[phi(z1)phi(z2)] and Q(rho) = E[phi'(z1)phi'(z2)] at unit
    marginals. Hypercube patches make rho take only q+1 values, so the two
    scalar functions are tabulated once.
    """
    n, d = X.shape
    if not np.all(np.abs(X) == 1.0):
        raise ValueError("infinite-width CNN kernel requires inputs with entries exactly +-1")
    if q_filter > d:
        raise ValueError(f"filter size q={q_filter} exceeds input dimension d={d}")
    rho_values = (q_filter - 2.0 * np.arange(q_filter + 1)) / q_filter  # 1, 1-2/q, ..., -1
    f, fp = phi_part(act), phi_prime_part(act)
    P_tab = np.array([
        bivariate_expectation(f, f, [[1.0, r], [r, 1.0]], order=order) for r in rho_values
    ])
    Q_tab = np.array([
        bivariate_expectation(fp, fp, [[1.0, r], [r, 1.0]], order=order) for r in rho_values
    ])

    Xc = np.concatenate([X, X[:, : q_filter - 1]], axis=1) if q_filter > 1 else X
    acc = np.zeros((n, n))
    for k in range(d):
        R = Xc[:, k : k + q_filter] @ Xc[:, k : k + q_filter].T  # integer-valued
        idx = np.rint((q_filter - R) / 2.0).astype(np.intp)
        acc += P_tab[idx] + Q_tab[idx] * (R / q_filter)
    return KernelMatrix(values=_symmetrize(acc / d), provenance="cnn-inf")


def spectral_norm(A: np.ndarray, tol: float = 1e-6, max_iters: int = 20000) -> float:
    """Largest singular value of a symmetric matrix by power iteration on A^2.

    Iterating on A^2 handles indefinite differences of kernels. Convergence
    is declared on the eigen-residual ||A^2 v - sigma^2 v|| <= tol*sigma^2,
    which (for symmetric matrices) bounds how far sigma^2 is from a true
    eigenvalue of A^2 — unlike the change between successive estimates,
    which can stall short of the limit when the spectral gap is small. Runs
    from a deterministic seeded start vector plus one restart; raises if no
    run converges within max_iters.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    best = None
    converged = False
    for seed in _POWER_ITER_SEEDS:
        v = np.random.default_rng(seed).standard_normal(n)
        v /= np.linalg.norm(v)
        for _ in range(max_iters):
            w = A @ v
            sigma_sq = float(w @ w)  # = v^T A^2 v with ||v|| = 1
            if sigma_sq == 0.0:  # v in the null space; restart handles rank-deficiency
                est = 0.0
                converged = True
                break
            v_new = A @ w  # = A^2 v
            residual = np.linalg.norm(v_new - sigma_sq * v)
            v = v_new / np.linalg.norm(v_new)
            if residual <= tol * sigma_sq:
                est = math.sqrt(sigma_sq)
                converged = True
                break
        else:
            continue
        best = est if best is None else max(best, est)
    if not converged or best is None:
        raise RuntimeError(f"power iteration did not converge in {max_iters} iterations")
    return float(best)


def frobenius_norm(A: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(A, dtype=float), "fro"))


def decay_fit(ds, norms) -> DecayFit:
    """OLS fit of log(norm) against log(d); needs >= 3 strictly positive points."""
    ds = np.asarray(ds, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if ds.size < 3:
        raise ValueError("decay fit needs at least 3 points")
    if np.any(norms <= 0):
        raise ValueError("decay fit needs strictly positive norms (degenerate fit)")
    if np.any(ds <= 0):
        raise ValueError("dimensions must be positive")
    lx, ly = np.log(ds), np.log(norms)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0  # constant norms: the flat fit is exact
    else:
        r2 = 1.0 - float(np.sum(resid**2)) / ss_tot
    return DecayFit(slope=float(slope), intercept=float(intercept),
                    r_squared=min(max(r2, 0.0), 1.0))


def save_kernel_csv(K: KernelMatrix, csv_path) -> None:
    """Dense CSV of the values plus a JSON sidecar recording provenance."""
    np.savetxt(csv_path, K.values, delimiter=",", fmt="%.17g")
    sidecar = str(csv_path) + ".json"
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump({"provenance": K.provenance, "n": K.n}, fh, indent=2)
        fh.write("\n")
