"""Squared-exponential GP posterior and the V-optimal space-filling cost.

The kernel is ``sf2 * exp(-0.5 (x - x')^T Lambda^{-1} (x - x'))``; the noise
variance is added to the Gram diagonal. Posterior quantities use one
Cholesky factor of the regularized Gram and triangular solves only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, solve_triangular

from . import kernels
from .errors import ConditioningError, ConfigurationError, ContractError


@dataclass(frozen=True)
class GpConfig:
    """SE kernel hyperparameters.

    ``lambda_diag`` holds the diagonal of ``Lambda`` exactly as configured.
    With ``lambda_mode="squared"`` those entries are used as the squared
    widths ``d_i^2``; with ``"lengthscale"`` they are the widths ``d_i`` and
    get squared.
    """

    sigma_f2: float = math.sqrt(10.0)
    lambda_diag: tuple[float, ...] = (0.05, 0.40)
    sigma_eps2: float = 1.0
    jitter: float = 1e-10
    max_jitter: float = 1e-6
    lambda_mode: str = "squared"

    def __post_init__(self):
        object.__setattr__(self, "lambda_diag", tuple(float(v) for v in self.lambda_diag))
        if self.sigma_f2 <= 0:
            raise ConfigurationError("sigma_f2 must be positive")
        if not self.lambda_diag or min(self.lambda_diag) <= 0:
            raise ConfigurationError("kernel widths must be positive")
        if self.sigma_eps2 < 0:
            raise ConfigurationError("sigma_eps2 must be non-negative")
        if self.jitter <= 0 or self.max_jitter < self.jitter:
            raise ConfigurationError("need 0 < jitter <= max_jitter")
        if self.lambda_mode not in ("squared", "lengthscale"):
            raise ConfigurationError(f"unknown lambda_mode {self.lambda_mode!r}")

    @property
    def dim(self):
        return len(self.lambda_diag)

    @property
    def lambda_squared(self):
        """Diagonal of ``Lambda`` as it enters the kernel."""
        lam = np.asarray(self.lambda_diag)
        return lam**2 if self.lambda_mode == "lengthscale" else lam

    def scale(self, x):
        """Map points so that the kernel distance is plain Euclidean."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ConfigurationError(
                f"feature dimension {x.shape[-1]} does not match kernel dimension {self.dim}"
            )
        return np.ascontiguousarray(x / np.sqrt(self.lambda_squared))


def se_kernel(x, x2, config: GpConfig = GpConfig()):
    z = config.scale(np.atleast_1d(x))
    z2 = config.scale(np.atleast_1d(x2))
    d = z - z2
    return float(config.sigma_f2 * math.exp(-0.5 * float(d @ d)))


def kernel_matrix(xa, xb, config: GpConfig):
    za = config.scale(np.atleast_2d(xa))
    zb = config.scale(np.atleast_2d(xb))
    return kernels.se_cross(za, zb, config.sigma_f2)


def regularized_gram(z, sf2, diag_add):
    """Lower triangle (Fortran order) of the SE Gram of pre-scaled points plus ``diag_add``.

    Entries above the diagonal are not meaningful.
    """
    gram = kernels.sqdist_lower(z)
    np.multiply(gram, -0.5, out=gram)
    np.exp(gram, out=gram)
    gram *= sf2
    gram.flat[:: gram.shape[0] + 1] += diag_add
    return gram


@dataclass(frozen=True)
class GramFactor:
    """Cholesky factor of ``K + (sigma_eps2 + jitter) I`` for features ``x``.

    Only the lower triangle of ``chol`` is meaningful; use :attr:`lower`.
    """

    chol: np.ndarray
    x: np.ndarray
    z: np.ndarray
    jitter: float
    config: GpConfig

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def lower(self):
        return np.tril(self.chol)

    def matches(self, x, config):
        return config == self.config and (
            x is self.x or (np.shape(x) == self.x.shape and np.array_equal(x, self.x))
        )


def gram_factorize(x, config: GpConfig = GpConfig()):
    x = np.array(x, dtype=float, ndmin=2)
    if x.size == 0:
        x = np.zeros((0, config.dim))
    z = config.scale(x)
    if not np.all(np.isfinite(z)):
        raise ConfigurationError("features must be finite")
    n = z.shape[0]
    if n == 0:
        return GramFactor(np.zeros((0, 0), order="F"), x, z, 0.0, config)
    jitter = config.jitter * config.sigma_f2
    limit = config.max_jitter * config.sigma_f2 * (1.0 + 1e-9)
    while True:
        gram = regularized_gram(z, config.sigma_f2, config.sigma_eps2 + jitter)
        chol, info = lapack.dpotrf(gram, lower=1, clean=0, overwrite_a=1)
        if info == 0:
            return GramFactor(chol, x, z, jitter, config)
        jitter *= 10.0
        if jitter > limit:
            raise ConditioningError(
                f"Gram factorization failed up to jitter {jitter / 10.0:.3g}"
            )


def _check_factor(x, factor, config):
    if not factor.matches(np.asarray(x, dtype=float), config):
        raise ContractError("Gram factor was built from different features or config")


def _cross_solve(x_star, factor, config):
    zs = config.scale(np.atleast_2d(x_star))
    ks = kernels.se_cross(zs, factor.z, config.sigma_f2)
    if factor.n == 0:
        return ks, np.zeros((0, zs.shape[0]))
    v = solve_triangular(factor.chol, ks.T, lower=True, check_finite=False)
    return ks, v


def posterior_variance(x_star, x, factor: GramFactor, config: GpConfig = GpConfig()):
    """Posterior variance at one point (float) or at each row of ``x_star``."""
    _check_factor(x, factor, config)
    single = np.ndim(x_star) == 1
    _, v = _cross_solve(x_star, factor, config)
    var = config.sigma_f2 - np.einsum("ij,ij->j", v, v)
    var = np.clip(var, 0.0, config.sigma_f2)
    return float(var[0]) if single else var


def posterior_mean(x_star, x, y, factor: GramFactor, config: GpConfig = GpConfig()):
    _check_factor(x, factor, config)
    single = np.ndim(x_star) == 1
    y = np.asarray(y, dtype=float)
    if y.shape[0] != factor.n:
        raise ConfigurationError("output length does not match the factor")
    if factor.n == 0:
        mean = np.zeros(np.atleast_2d(x_star).shape[0])
    else:
        _, v = _cross_solve(x_star, factor, config)
        w = solve_triangular(factor.chol, y, lower=True, check_finite=False)
        mean = v.T @ w
    return float(mean[0]) if single else mean


def anchor_variances(features, anchors, config: GpConfig = GpConfig()):
    factor = gram_factorize(features, config)
    return posterior_variance(anchors, factor.x, factor, config)


def v_cost(data, anchors, config: GpConfig = GpConfig()):
    """Average posterior variance at the anchor points.

    ``data`` is a feature matrix or anything with a ``features`` attribute;
    ``anchors`` a point matrix or anything with ``points``.
    """
    features = getattr(data, "features", data)
    points = np.asarray(getattr(anchors, "points", anchors), dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ConfigurationError("anchor set must be a non-empty point matrix")
    return float(np.mean(anchor_variances(features, points, config)))
