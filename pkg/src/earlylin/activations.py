"""Activation functions and their Gaussian moments.

Everything downstream (kernels, feature maps) is built from a handful of
expectations of an activation phi and its derivative phi' under standard
normal inputs, plus bivariate versions under correlated Gaussian pairs.
Smooth activations are integrated with Gauss-Hermite quadrature; the
piecewise-linear family (relu / leaky-relu / identity) has exact
half-Gaussian closed forms, which we use because the kink at zero halves
the effective quadrature order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np
from scipy import special

if TYPE_CHECKING:  # pragma: no cover
    from .datagen import CovarianceSpec

SMOOTH = "smooth"
PIECEWISE_LINEAR = "piecewise-linear"

_SMOOTH_KINDS = ("erf", "tanh", "sigmoid", "softplus")
_PL_KINDS = ("relu", "leaky-relu", "identity")

DEFAULT_ORDER_SMOOTH = 64
DEFAULT_ORDER_PIECEWISE = 128
MAX_ORDER = 256

# E[g * 1{g>0}] for g ~ N(0,1); the basic half-Gaussian moment.
_HALF_MOMENT = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Activation:
    """An activation function phi, identified by kind (plus slope for leaky-relu).

    For the piecewise-linear kinds we set phi'(0) = 1 (the convention used
    throughout the gradient and kernel formulas); `identity` is leaky-relu
    with slope 1 and therefore kink-free.
    """

    kind: str
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in _SMOOTH_KINDS + _PL_KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind == "leaky-relu" and not math.isfinite(self.slope):
            raise ValueError("leaky-relu slope must be finite")

    @property
    def smoothness(self) -> str:
        return SMOOTH if self.kind in _SMOOTH_KINDS else PIECEWISE_LINEAR

    @property
    def negative_slope(self) -> float:
        """Slope of the z<0 branch for piecewise-linear kinds."""
        if self.kind == "relu":
            return 0.0
        if self.kind == "identity":
            return 1.0
        return self.slope


ERF = Activation("erf")
TANH = Activation("tanh")
SIGMOID = Activation("sigmoid")
SOFTPLUS = Activation("softplus")
RELU = Activation("relu")
IDENTITY = Activation("identity")


def leaky_relu(slope: float) -> Activation:
    return Activation("leaky-relu", slope=slope)


def phi(act: Activation, z):
    """Evaluate the activation elementwise."""
    z = np.asarray(z, dtype=float)
    if act.kind == "erf":
        return special.erf(z)
    if act.kind == "tanh":
        return np.tanh(z)
    if act.kind == "sigmoid":
        return special.expit(z)
    if act.kind == "softplus":
        return np.logaddexp(0.0, z)
    a = act.negative_slope
    return np.where(z >= 0.0, z, a * z)


def phi_prime(act: Activation, z):
    """Evaluate phi' elementwise; phi'(0) = 1 for the piecewise-linear kinds."""
    z = np.asarray(z, dtype=float)
    if act.kind == "erf":
        return (2.0 / math.sqrt(math.pi)) * np.exp(-np.square(z))
    if act.kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if act.kind == "sigmoid":
        s = special.expit(z)
        return s * (1.0 - s)
    if act.kind == "softplus":
        return special.expit(z)
    a = act.negative_slope
    return np.where(z >= 0.0, 1.0, a)


@dataclass(frozen=True)
class Quadrature:
    """Gauss-Hermite rule normalized for N(0,1): sum(w)=1, sum(w x^2)=1."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int


def gauss_hermite(order: int) -> Quadrature:
    """Probabilists' Gauss-Hermite rule, exact for polynomials of degree 2*order-1."""
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"quadrature order must be in [1, {MAX_ORDER}], got {order}")
    x, w = np.polynomial.hermite.hermgauss(order)
    q = Quadrature(nodes=x * math.sqrt(2.0), weights=w / math.sqrt(math.pi), order=order)
    q.nodes.setflags(write=False)
    q.weights.setflags(write=False)
    return q


@dataclass(frozen=True)
class Moments:
    """Gaussian moments of an activation, g ~ N(0,1).

    zeta        = E[phi'(g)]
    g_phi_prime = E[g phi'(g)]     (theta1 is the same quantity, stored once)
    theta0      = E[phi(g)]
    theta2      = E[(g^3/2 - g) phi'(g)]
    gamma       = E[phi'(g)^2]
    """

    zeta: float
    g_phi_prime: float
    theta0: float
    theta2: float
    gamma: float
    quad_order: int

    @property
    def theta1(self) -> float:
        return self.g_phi_prime


def default_order(act: Activation) -> int:
    return DEFAULT_ORDER_SMOOTH if act.smoothness == SMOOTH else DEFAULT_ORDER_PIECEWISE


def moments(act: Activation, order: int | None = None) -> Moments:
    """Compute the scalar Gaussian moments of an activation.

    Smooth kinds use Gauss-Hermite quadrature at the given order.
    Piecewise-linear kinds are evaluated with the exact half-Gaussian
    closed forms (with negative-branch slope a):

        zeta = (1+a)/2,  theta0 = theta1 = (1-a)/sqrt(2 pi),
        theta2 = 0,      gamma = (1+a^2)/2.
    """
    if order is None:
        order = default_order(act)
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"quadrature order must be in [1, {MAX_ORDER}], got {order}")
    if act.smoothness == PIECEWISE_LINEAR:
        if order < 64:
            raise ValueError(
                "piecewise-linear activations require order >= 64 "
                f"(got {order}); the kink halves the quadrature order"
            )
        a = act.negative_slope
        return Moments(
            zeta=(1.0 + a) / 2.0,
            g_phi_prime=(1.0 - a) * _HALF_MOMENT,
            theta0=(1.0 - a) * _HALF_MOMENT,
            theta2=0.0,
            gamma=(1.0 + a * a) / 2.0,
            quad_order=order,
        )
    q = gauss_hermite(order)
    x, w = q.nodes, q.weights
    fp = phi_prime(act, x)
    return Moments(
        zeta=float(w @ fp),
        g_phi_prime=float(w @ (x * fp)),
        theta0=float(w @ phi(act, x)),
        theta2=float(w @ ((0.5 * x**3 - x) * fp)),
        gamma=float(w @ (fp * fp)),
        quad_order=order,
    )


def nu(mom: Moments, sigma: "CovarianceSpec", d: int) -> float:
    """The covariance-weighted slope constant: E[g phi'(g)] * sqrt(tr(Sigma^2)/d)."""
    spec = np.asarray(sigma.spectrum(), dtype=float)
    return mom.g_phi_prime * math.sqrt(float(np.sum(spec * spec)) / d)


@dataclass(frozen=True)
class ActivationPart:
    """One factor of a bivariate expectation: phi or phi' of a given activation."""

    act: Activation
    part: str  # "phi" or "phi_prime"

    def __post_init__(self):
        if self.part not in ("phi", "phi_prime"):
            raise ValueError(f"part must be 'phi' or 'phi_prime', got {self.part!r}")

    def __call__(self, z):
        return phi(self.act, z) if self.part == "phi" else phi_prime(self.act, z)

    def at_zero(self) -> float:
        """Value of the factor at z = 0 (phi'(0)=1 for piecewise-linear kinds)."""
        return float(self(np.asarray(0.0)))


def phi_part(act: Activation) -> ActivationPart:
    return ActivationPart(act, "phi")


def phi_prime_part(act: Activation) -> ActivationPart:
    return ActivationPart(act, "phi_prime")


def _check_covariance(lam) -> tuple[float, float, float]:
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (2, 2):
        raise ValueError(f"covariance must be 2x2, got shape {lam.shape}")
    a, b = float(lam[0, 0]), float(lam[1, 1])
    c = float(lam[0, 1])
    if abs(lam[0, 1] - lam[1, 0]) > 1e-12 * max(1.0, abs(c)):
        raise ValueError("covariance must be symmetric")
    if a < 0 or b < 0:
        raise ValueError("covariance has negative diagonal")
    bound = math.sqrt(a * b)
    if abs(c) > bound * (1.0 + 1e-8) + 1e-300:
        raise ValueError(f"covariance not PSD: |c|={abs(c)} exceeds sqrt(ab)={bound}")
    c = min(max(c, -bound), bound)  # clip fp overshoot within the tolerance
    return a, b, c


# E[B_i(u) B_j(v)] for standard bivariate normal (u, v) with correlation rho,
# over the basis B = (1, z, relu(z), step(z)). Piecewise-linear phi and phi'
# are linear combinations of this basis, so their products reduce to this table.
def _pl_basis_table(rho: float) -> np.ndarray:
    rho = min(max(rho, -1.0), 1.0)
    k = _HALF_MOMENT
    step_step = (math.pi - math.acos(rho)) / (2.0 * math.pi)
    relu_relu = (math.sqrt(max(1.0 - rho * rho, 0.0))
                 + rho * (math.pi - math.acos(rho))) / (2.0 * math.pi)
    relu_step = k * (1.0 + rho) / 2.0
    return np.array([
        [1.0,      0.0,       k,          0.5],
        [0.0,      rho,       rho / 2.0,  rho * k],
        [k,        rho / 2.0, relu_relu,  relu_step],
        [0.5,      rho * k,   relu_step,  step_step],
    ])


def _pl_coefficients(f: ActivationPart, std: float) -> np.ndarray:
    """Coefficients of f(std * u) over the basis (1, u, relu(u), step(u))."""
    a = f.act.negative_slope
    if std == 0.0:
        return np.array([f.at_zero(), 0.0, 0.0, 0.0])
    if f.part == "phi":
        return np.array([0.0, a * std, (1.0 - a) * std, 0.0])
    return np.array([a, 0.0, 0.0, 1.0 - a])


def _conditional_pl_mean(f: ActivationPart, mean, sd: float):
    """E[f(N(mean, sd^2))] for a piecewise-linear factor, exact.

    E[relu(N(m, s^2))] = m * Phi(m/s) + s * pdf(m/s) with the standard normal
    cdf/pdf; the step and linear pieces follow the same pattern.
    """
    mean = np.asarray(mean, dtype=float)
    a = f.act.negative_slope
    t = mean / sd
    cdf = special.ndtr(t)
    if f.part == "phi_prime":
        return a + (1.0 - a) * cdf
    pdf = np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    relu_mean = mean * cdf + sd * pdf
    return a * mean + (1.0 - a) * relu_mean


def bivariate_expectation(f1: ActivationPart, f2: ActivationPart, lam,
                          order: int | None = None) -> float:
    """E[f1(z1) f2(z2)] for (z1, z2) ~ N(0, lam), lam a 2x2 covariance.

    Three evaluation paths, chosen by the smoothness of the factors:
    both smooth        -> tensor-product Gauss-Hermite after Cholesky;
    both pw-linear     -> exact closed form (half-Gaussian basis table);
    mixed              -> outer Gauss-Hermite over the smooth factor, exact
                          conditional expectation of the pw-linear factor.
    Degenerate lam (|c| = sqrt(ab)) collapses to a univariate integral along
    the rank-1 direction.
    """
    a, b, c = _check_covariance(lam)
    s1, s2 = math.sqrt(a), math.sqrt(b)

    pl1 = f1.act.smoothness == PIECEWISE_LINEAR
    pl2 = f2.act.smoothness == PIECEWISE_LINEAR

    if order is None:
        order = max(default_order(f1.act), default_order(f2.act))
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"quadrature order must be in [1, {MAX_ORDER}], got {order}")

    # Constant factors (zero marginal variance) reduce to a univariate integral.
    if s1 == 0.0 or s2 == 0.0:
        if s1 == 0.0 and s2 == 0.0:
            return f1.at_zero() * f2.at_zero()
        const, live, s = (f1, f2, s2) if s1 == 0.0 else (f2, f1, s1)
        q = gauss_hermite(order)
        return const.at_zero() * float(q.weights @ live(s * q.nodes))

    if pl1 and pl2:
        rho = c / (s1 * s2)
        c1 = _pl_coefficients(f1, s1)
        c2 = _pl_coefficients(f2, s2)
        return float(c1 @ _pl_basis_table(rho) @ c2)

    # Disjoint rank-1 case: z2 is a deterministic multiple of z1.
    rho = c / (s1 * s2)
    if abs(rho) >= 1.0 - 1e-12:
        sign = 1.0 if rho > 0 else -1.0
        q = gauss_hermite(order)
        g = q.nodes
        return float(q.weights @ (f1(s1 * g) * f2(sign * s2 * g)))

    if pl1 or pl2:
        # Put the smooth factor on the outer (marginal) variable and integrate
        # the piecewise-linear factor exactly given the conditional normal law.
        outer, inner = (f2, f1) if pl1 else (f1, f2)
        s_out = s2 if pl1 else s1
        s_in = s1 if pl1 else s2
        q = gauss_hermite(order)
        g = q.nodes
        cond_mean = (c / s_out) * g
        cond_sd = math.sqrt(max(s_in * s_in - (c / s_out) ** 2, 0.0))
        if cond_sd == 0.0:  # numerically rank-1 after all
            return float(q.weights @ (outer(s_out * g) * inner(np.sign(c) * s_in * g)))
        vals = outer(s_out * g) * _conditional_pl_mean(inner, cond_mean, cond_sd)
        return float(q.weights @ vals)

    # Smooth x smooth: z1 = l11 g1, z2 = l21 g1 + l22 g2 (Cholesky of lam).
    l11 = s1
    l21 = c / s1
    l22 = math.sqrt(max(b - l21 * l21, 0.0))
    q = gauss_hermite(order)
    g, w = q.nodes, q.weights
    v1 = f1(l11 * g)  # depends on g1 only
    z2 = l21 * g[:, None] + l22 * g[None, :]
    return float((w * v1) @ f2(z2) @ w)
