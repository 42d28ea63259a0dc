"""Coupled network/linear-model experiments and diagnostic probes.

A coupled run trains the network and its matching linear feature model in
lockstep with the *same* learning rate, starting from an exact tie (zero
output on both sides), and records per-step agreement metrics on the
training set and a held-out test set. The other entry points are the
experiment recipes built on top: dimension sweeps of the discrepancy,
tangent-kernel deviation probes along a trajectory, residual subspace
decomposition, the norm-feature ablation, the spectral-decay fit, and the
CNN kernel deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .activations import ERF, RELU, Activation, Moments, moments, nu, phi, phi_prime
from .datagen import DataSpec, identity_covariance, generate_hypercube, generate_inputs
from .kernels import (
    KernelMatrix,
    DecayFit,
    cnn_infinite_ntk,
    decay_fit,
    frobenius_norm,
    linear_kernel,
    ntk_first_layer,
    spectral_norm,
)
from .linmodel import FeatureMap, features, naive_map
from .network import (
    DivergenceError,
    DIVERGENCE_FACTOR,
    TwoLayerNet,
    preactivations,
    random_init,
    symmetric_init,
)

DEFAULT_HORIZON_C = 0.25
DEFAULT_TEST_SIZE = 2000
_THETA0_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class LabelSpec:
    """How training labels are produced.

    teacher-sign : y = sign(f*(x)) for a small random teacher net (erf by
                   default, width 5); sign(0) = +1.
    norm         : y = ||x||/sqrt(d) + relu(a.x) with a random direction of
                   norm a_norm (labels may leave [-1, 1]; kept raw).
    zero         : y = 0.
    """

    kind: str = "teacher-sign"
    teacher_width: int = 5
    teacher_act: Activation = ERF
    teacher_seed: int = 0
    a_norm: float = 0.5
    a_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("teacher-sign", "norm", "zero"):
            raise ValueError(f"unknown label kind {self.kind!r}")


def make_labels(X: np.ndarray, spec: LabelSpec) -> np.ndarray:
    from .datagen import labels_norm_dependent, labels_teacher_sign

    if spec.kind == "zero":
        return np.zeros(X.shape[0])
    if spec.kind == "teacher-sign":
        teacher = random_init(spec.teacher_width, X.shape[1], spec.teacher_act,
                              spec.teacher_seed)
        return labels_teacher_sign(X, teacher)
    rng = np.random.default_rng((spec.a_seed, 4))
    a = rng.standard_normal(X.shape[1])
    a *= spec.a_norm / np.linalg.norm(a)
    return labels_norm_dependent(X, a)


@dataclass(frozen=True)
class CoupledRunConfig:
    mode: str  # first | second | both
    data: DataSpec
    m: int
    act: Activation = ERF
    labels: LabelSpec = field(default_factory=LabelSpec)
    net_seed: int = 1
    eta: float | None = None  # default chosen by default_learning_rate
    T: int | None = None      # default from the horizon rule
    horizon_c: float = DEFAULT_HORIZON_C
    n_test: int = DEFAULT_TEST_SIZE
    record_stride: int = 1
    quad_order: int | None = None

    def __post_init__(self):
        if self.mode not in ("first", "second", "both"):
            raise ValueError(f"mode must be first, second or both, got {self.mode!r}")
        if self.m % 2 != 0:
            raise ValueError("width must be even (symmetric initialization)")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


@dataclass(frozen=True)
class AgreementRecord:
    step: int
    train_mse_net: float
    train_mse_lin: float
    train_gap: float          # (1/n) sum (f_t(x_i) - f_lin_t(x_i))^2
    test_gap_clipped: float   # mean of min{(f_t - f_lin_t)^2, 1} on held-out data
    w_move_fro: float
    v_move_l2: float
    beta_norm: float


@dataclass
class CoupledRunResult:
    records: list[AgreementRecord]
    eta: float
    T: int
    mode: str
    final_net: TwoLayerNet
    final_beta: np.ndarray


def default_learning_rate(mode: str, d: int, n: int, mom: Moments) -> float:
    """Rates well inside the stable region for each training mode.

    First-layer-only training tolerates rates up to order d; the modes that
    train the second layer are limited to order d/log(n) when E[phi(g)] = 0
    and to order 1 otherwise (the constant output feature is the stiff
    direction in that case).
    """
    if mode == "first":
        return 0.1 * d
    if abs(mom.theta0) < _THETA0_ZERO_TOL:
        return 0.1 * d / math.log(n)
    return 0.1


def _mode_rates(mode: str, eta: float) -> tuple[float, float]:
    if mode == "first":
        return eta, 0.0
    if mode == "second":
        return 0.0, eta
    return eta, eta


def resolve_run(config: CoupledRunConfig):
    """Fill in data, labels, moments, rates, and horizon for a coupled run."""
    d = config.data.d
    n = config.data.n
    mom = moments(config.act, config.quad_order)
    nu_val = nu(mom, config.data.covariance, d)
    eta = config.eta if config.eta is not None else default_learning_rate(
        config.mode, d, n, mom)
    T = config.T if config.T is not None else max(
        1, int(config.horizon_c * d * math.log(d) / eta))
    fmap = FeatureMap(which=config.mode, moments=mom, nu=nu_val, d=d)
    return mom, nu_val, eta, T, fmap


def coupled_run(config: CoupledRunConfig) -> CoupledRunResult:
    """Train network and linear model in lockstep; record agreement metrics.

    The test set is drawn from the same data spec as extra rows beyond the
    training block (row streams are independent per row, so train rows are
    unaffected). Records are emitted every `record_stride` steps plus always
    at t = 0 and t = T.
    """
    d, n = config.data.d, config.data.n
    mom, nu_val, eta, T, fmap = resolve_run(config)
    eta1, eta2 = _mode_rates(config.mode, eta)

    all_spec = replace(config.data, n=n + config.n_test)
    X_all = generate_inputs(all_spec)
    X, X_test = X_all[:n], X_all[n:]
    y = make_labels(X, config.labels)

    net = symmetric_init(config.m, d, config.act, config.net_seed)
    W0, v0 = net.W.copy(), net.v.copy()
    sqrt_m = math.sqrt(net.m)
    sqrt_md = math.sqrt(net.m * d)

    Psi = features(fmap, X)
    Psi_test = features(fmap, X_test)
    beta = np.zeros(fmap.out_dim)

    records: list[AgreementRecord] = []
    initial_mse = None
    for t in range(T + 1):
        Z = preactivations(net, X)
        A = phi(net.act, Z)
        u_net = A @ net.v / sqrt_m
        u_lin = Psi @ beta

        mse_net = float(np.mean((u_net - y) ** 2))
        mse_lin = float(np.mean((u_lin - y) ** 2))
        if initial_mse is None:
            initial_mse = max(mse_net, mse_lin)
        worst = max(mse_net, mse_lin)
        if not math.isfinite(worst) or (initial_mse > 0 and worst > DIVERGENCE_FACTOR * initial_mse):
            raise DivergenceError(
                f"coupled run diverged at step {t}: net mse={mse_net}, lin mse={mse_lin}"
            )

        if t % config.record_stride == 0 or t == T:
            if config.n_test > 0:
                f_net_test = phi(net.act, preactivations(net, X_test)) @ net.v / sqrt_m
                f_lin_test = Psi_test @ beta
                test_gap = float(np.mean(np.minimum((f_net_test - f_lin_test) ** 2, 1.0)))
            else:
                test_gap = 0.0
            records.append(AgreementRecord(
                step=t,
                train_mse_net=mse_net,
                train_mse_lin=mse_lin,
                train_gap=float(np.mean((u_net - u_lin) ** 2)),
                test_gap_clipped=test_gap,
                w_move_fro=float(np.linalg.norm(net.W - W0)),
                v_move_l2=float(np.linalg.norm(net.v - v0)),
                beta_norm=float(np.linalg.norm(beta)),
            ))
        if t == T:
            break

        r_net = u_net - y
        if eta1 != 0.0:
            G = phi_prime(net.act, Z)
            net.W = net.W - (eta1 / (n * sqrt_md)) * (
                net.v[:, None] * ((G * r_net[:, None]).T @ X))
        if eta2 != 0.0:
            net.v = net.v - (eta2 / (n * sqrt_m)) * (A.T @ r_net)
        beta = beta - (eta / n) * (Psi.T @ (u_lin - y))

    return CoupledRunResult(records=records, eta=eta, T=T, mode=config.mode,
                            final_net=net, final_beta=beta)


@dataclass
class DiscrepancySweep:
    d_list: list[int]
    max_gaps: np.ndarray         # (len(d_list), n_seeds) max train_gap per run
    median_max_gap: np.ndarray   # per d
    strictly_decreasing: bool


def discrepancy_vs_dimension(d_list, base: CoupledRunConfig,
                             n_seeds: int = 5) -> DiscrepancySweep:
    """Max train_gap over the horizon, per dimension, medianed over seeds.

    Seed k of a sweep shifts every seed in the base config by k. The base
    config's data spec must use the identity covariance (a fixed diagonal
    spectrum has no canonical rescaling across dimensions).
    """
    d_list = [int(d) for d in d_list]
    if len(d_list) < 1:
        raise ValueError("d_list must be non-empty")
    if base.data.covariance.kind != "identity":
        raise ValueError("dimension sweeps require the identity covariance")
    gaps = np.empty((len(d_list), n_seeds))
    for i, d in enumerate(d_list):
        for k in range(n_seeds):
            cfg = replace(
                base,
                data=DataSpec(identity_covariance(d), base.data.base,
                              base.data.n, base.data.seed + k),
                labels=replace(base.labels,
                               teacher_seed=base.labels.teacher_seed + k,
                               a_seed=base.labels.a_seed + k),
                net_seed=base.net_seed + k,
                eta=base.eta,
                T=base.T,
            )
            result = coupled_run(cfg)
            gaps[i, k] = max(r.train_gap for r in result.records)
    med = np.median(gaps, axis=1)
    decreasing = bool(np.all(np.diff(med) < 0)) if len(d_list) > 1 else True
    return DiscrepancySweep(d_list=d_list, max_gaps=gaps, median_max_gap=med,
                            strictly_decreasing=decreasing)


@dataclass(frozen=True)
class DeviationProbe:
    index: int
    eps: float            # || J(theta_t) J(theta_0)^T - K_lin ||
    eps_over_n_d: float   # eps / (n/d), the scale of ||K_lin||


def _cross_tangent_gram(mode: str, net_t: TwoLayerNet, net_0: TwoLayerNet,
                        X: np.ndarray) -> np.ndarray:
    """J(theta_t) J(theta_0)^T for the Jacobian blocks active in the mode."""
    n, d = X.shape
    K = np.zeros((n, n))
    if mode in ("first", "both"):
        S_t = phi_prime(net_t.act, preactivations(net_t, X)) * net_t.v[None, :]
        S_0 = phi_prime(net_0.act, preactivations(net_0, X)) * net_0.v[None, :]
        K += ((S_t @ S_0.T) / net_t.m) * (X @ X.T / d)
    if mode in ("second", "both"):
        A_t = phi(net_t.act, preactivations(net_t, X))
        A_0 = phi(net_0.act, preactivations(net_0, X))
        K += (A_t @ A_0.T) / net_t.m
    return K


def jacobian_deviation_probe(snapshots, X: np.ndarray, K_lin,
                             mode: str = "both") -> list[DeviationProbe]:
    """Spectral deviation of the trajectory cross-Gram from the linear kernel.

    snapshots[0] is the reference point theta(0); each probe reports
    eps = ||J(theta_t) J(theta_0)^T - K_lin|| and eps normalized by n/d.
    """
    if len(snapshots) < 1:
        raise ValueError("need at least one snapshot")
    K_ref = K_lin.values if hasattr(K_lin, "values") else np.asarray(K_lin, dtype=float)
    n, d = X.shape
    net_0 = snapshots[0]
    probes = []
    for idx, net_t in enumerate(snapshots):
        M = _cross_tangent_gram(mode, net_t, net_0, X)
        eps = spectral_norm(M - K_ref)
        probes.append(DeviationProbe(index=idx, eps=eps, eps_over_n_d=eps / (n / d)))
    return probes


def residual_subspace_decomposition(residual: np.ndarray, X_test: np.ndarray):
    """Split ||residual||^2 into the part inside span(columns reachable by
    X_test's input directions) and its orthogonal complement.

    Concretely: project the test-set residual vector onto the column space of
    X_test (dimension <= d) with a rank-revealing SVD. Requires n_test > d so
    the complement is non-trivial.
    """
    residual = np.asarray(residual, dtype=float)
    X_test = np.asarray(X_test, dtype=float)
    n_test, d = X_test.shape
    if residual.shape != (n_test,):
        raise ValueError(f"residual has shape {residual.shape}, expected ({n_test},)")
    if n_test <= d:
        raise ValueError(f"need n_test > d for a non-trivial complement (n_test={n_test}, d={d})")
    U, S, _ = np.linalg.svd(X_test, full_matrices=False)
    rank = int(np.sum(S > S[0] * 1e-12)) if S.size and S[0] > 0 else 0
    proj = U[:, :rank] @ (U[:, :rank].T @ residual)
    energy_in = float(proj @ proj)
    out = residual - proj
    energy_out = float(out @ out)
    return energy_in, energy_out


@dataclass
class AblationRecord:
    step: int
    disc_full: float   # (1/n) sum (f_net - f_full_lin)^2
    disc_naive: float  # same against the theta1 = theta2 = 0 model


@dataclass
class AblationResult:
    records: list[AblationRecord]
    fraction_full_below: float
    eta: float
    T: int


def norm_feature_ablation_experiment(config: CoupledRunConfig) -> AblationResult:
    """Train the net once; track full and norm-feature-ablated linear models.

    The naive model zeroes theta1 and theta2, freezing the norm feature at
    the constant theta0; everything else (data, rate, steps) is shared, so
    any gap difference is attributable to the norm feature.
    """
    d, n = config.data.d, config.data.n
    mom, nu_val, eta, T, fmap = resolve_run(config)
    eta1, eta2 = _mode_rates(config.mode, eta)
    fmap_naive = naive_map(fmap)

    X = generate_inputs(config.data)
    y = make_labels(X, config.labels)
    net = symmetric_init(config.m, d, config.act, config.net_seed)
    sqrt_m, sqrt_md = math.sqrt(net.m), math.sqrt(net.m * d)

    Psi_full = features(fmap, X)
    Psi_naive = features(fmap_naive, X)
    beta_full = np.zeros(fmap.out_dim)
    beta_naive = np.zeros(fmap_naive.out_dim)

    records: list[AblationRecord] = []
    initial_mse = None
    for t in range(T + 1):
        Z = preactivations(net, X)
        A = phi(net.act, Z)
        u_net = A @ net.v / sqrt_m
        u_full = Psi_full @ beta_full
        u_naive = Psi_naive @ beta_naive

        mse_net = float(np.mean((u_net - y) ** 2))
        if initial_mse is None:
            initial_mse = mse_net
        if not math.isfinite(mse_net) or (initial_mse > 0 and mse_net > DIVERGENCE_FACTOR * initial_mse):
            raise DivergenceError(f"ablation run diverged at step {t}: mse={mse_net}")

        if t % config.record_stride == 0 or t == T:
            records.append(AblationRecord(
                step=t,
                disc_full=float(np.mean((u_net - u_full) ** 2)),
                disc_naive=float(np.mean((u_net - u_naive) ** 2)),
            ))
        if t == T:
            break

        r_net = u_net - y
        if eta1 != 0.0:
            G = phi_prime(net.act, Z)
            net.W = net.W - (eta1 / (n * sqrt_md)) * (
                net.v[:, None] * ((G * r_net[:, None]).T @ X))
        if eta2 != 0.0:
            net.v = net.v - (eta2 / (n * sqrt_m)) * (A.T @ r_net)
        beta_full = beta_full - (eta / n) * (Psi_full.T @ (u_full - y))
        beta_naive = beta_naive - (eta / n) * (Psi_naive.T @ (u_naive - y))

    below = sum(1 for r in records if r.disc_full < r.disc_naive)
    return AblationResult(records=records,
                          fraction_full_below=below / len(records),
                          eta=eta, T=T)


@dataclass
class SpectralDecayResult:
    d_list: list[int]
    spectral: np.ndarray    # (len(d_list), n_seeds)
    frobenius: np.ndarray
    mean_spectral: np.ndarray
    mean_frobenius: np.ndarray
    spectral_fit: DecayFit
    frobenius_fit: DecayFit


_NET_SEED_SHIFT = 1_000_003  # net seeds live away from data seeds in sweeps


def spectral_decay_experiment(d_list, n: int, m: int, act: Activation,
                              seeds) -> SpectralDecayResult:
    """Norms of (first-layer tangent kernel at init) - (its linear-model kernel)
    as a function of d at fixed (n, m), with log-log decay fits of the means."""
    d_list = [int(d) for d in d_list]
    seeds = [int(s) for s in seeds]
    mom = moments(act)
    spec = np.empty((len(d_list), len(seeds)))
    frob = np.empty((len(d_list), len(seeds)))
    for i, d in enumerate(d_list):
        cov = identity_covariance(d)
        nu_val = nu(mom, cov, d)
        for k, seed in enumerate(seeds):
            X = generate_inputs(DataSpec(cov, "gaussian", n, seed))
            net = symmetric_init(m, d, act, seed + _NET_SEED_SHIFT)
            D = ntk_first_layer(net, X).values - linear_kernel(X, mom, nu_val, "lin1").values
            spec[i, k] = spectral_norm(D)
            frob[i, k] = frobenius_norm(D)
    mean_spec = spec.mean(axis=1)
    mean_frob = frob.mean(axis=1)
    return SpectralDecayResult(
        d_list=d_list, spectral=spec, frobenius=frob,
        mean_spectral=mean_spec, mean_frobenius=mean_frob,
        spectral_fit=decay_fit(d_list, mean_spec),
        frobenius_fit=decay_fit(d_list, mean_frob),
    )


@dataclass(frozen=True)
class CnnDeviationPoint:
    d: int
    n: int
    q: int
    deviation: float   # || K_cnn - 2 zeta^2 X X^T / d ||
    base_norm: float   # || 2 zeta^2 X X^T / d ||
    ratio: float


@dataclass
class CnnDeviationResult:
    points: list[CnnDeviationPoint]
    decreasing: bool


def cnn_kernel_deviation(d: int, q: int, n: int, act: Activation, seed: int,
                         order: int | None = None) -> CnnDeviationPoint:
    """Spectral distance of the infinite-width CNN kernel from 2 zeta^2 XX^T/d
    on hypercube data, relative to the target's own norm."""
    X = generate_hypercube(n, d, seed)
    mom = moments(act)
    K = cnn_infinite_ntk(X, q, act, order=order)
    base = (2.0 * mom.zeta**2 / d) * (X @ X.T)
    dev = spectral_norm(K.values - base)
    base_norm = spectral_norm(base)
    return CnnDeviationPoint(d=d, n=n, q=q, deviation=dev, base_norm=base_norm,
                             ratio=dev / base_norm)


def cnn_deviation_experiment(d: int, q: int, n: int, act: Activation, seed: int,
                             growth: float = 1.1) -> CnnDeviationResult:
    """Deviation ratio at (d, n) and at (2d, n * 2^growth) — n scales to hold
    n / d^growth fixed — and whether the ratio shrinks."""
    p1 = cnn_kernel_deviation(d, q, n, act, seed)
    n2 = int(round(n * 2.0**growth))
    p2 = cnn_kernel_deviation(2 * d, q, n2, act, seed + 1)
    return CnnDeviationResult(points=[p1, p2], decreasing=p2.ratio < p1.ratio)
