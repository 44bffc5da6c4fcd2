"""Zero-mean Gaussian-process regression with an isotropic Matern-5/2 kernel.

Inputs live in the normalized control square [0, 1]^2.  ``fit`` factorizes
``K + noise_var * I`` once (Cholesky, with escalating jitter); ``predict``
returns the posterior mean ``k_*^T (K + s_n^2 I)^{-1} y`` and variance
``k(x, x) - k_*^T (K + s_n^2 I)^{-1} k_*``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InvalidInputError, NonPSDError

SQRT5 = math.sqrt(5.0)
JITTER_REL = 1e-10
JITTER_ESCALATIONS = 3
DUPLICATE_TOL = 1e-12


@dataclass(frozen=True)
class Hyperparams:
    lengthscale: float = 0.2
    signal_var: float = 1.0
    noise_var: float = 1e-4

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise InvalidInputError("lengthscale must be > 0")
        if not self.signal_var > 0:
            raise InvalidInputError("signal_var must be > 0")
        if not self.noise_var >= 0:
            raise InvalidInputError("noise_var must be >= 0")


@dataclass(frozen=True)
class Observation:
    x: tuple
    y: float

    def __post_init__(self):
        x = tuple(float(c) for c in self.x)
        if len(x) != 2 or not all(0.0 <= c <= 1.0 for c in x):
            raise InvalidInputError(f"observation x must lie in [0,1]^2, got {self.x}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", float(self.y))


def _matern_of_r(r, signal_var):
    s = SQRT5 * r
    return signal_var * (1.0 + s + s * s / 3.0) * np.exp(-s)


def matern52(a, b, hyper: Hyperparams) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    r = math.sqrt(float(((a - b) ** 2).sum())) / hyper.lengthscale
    return float(_matern_of_r(r, hyper.signal_var))


def kernel_matrix(A, B, hyper: Hyperparams):
    """Matern-5/2 cross-covariance between row sets ``A`` (n, 2) and ``B`` (m, 2)."""
    A = np.asarray(A, dtype=np.float64).reshape(-1, 2)
    B = np.asarray(B, dtype=np.float64).reshape(-1, 2)
    diff = A[:, None, :] - B[None, :, :]
    r = np.sqrt((diff * diff).sum(axis=2)) / hyper.lengthscale
    return _matern_of_r(r, hyper.signal_var)


@dataclass(frozen=True)
class GPModel:
    hyper: Hyperparams
    X: np.ndarray
    y: np.ndarray
    factor: np.ndarray
    alpha: np.ndarray
    jitter: float

    @property
    def train(self):
        return [Observation(tuple(x), y) for x, y in zip(self.X, self.y)]

    @property
    def m(self) -> int:
        return len(self.y)


def _has_duplicates(X):
    if len(X) < 2:
        return False
    diff = np.abs(X[:, None, :] - X[None, :, :]).max(axis=2)
    np.fill_diagonal(diff, np.inf)
    return bool((diff <= DUPLICATE_TOL).any())


def fit(train, hyper: Hyperparams = Hyperparams()) -> GPModel:
    """Factorize the noisy Gram matrix of ``train`` and solve for the weights."""
    train = [t if isinstance(t, Observation) else Observation(*t) for t in train]
    if not train:
        raise InvalidInputError("fit needs at least one observation")
    X = np.array([t.x for t in train], dtype=np.float64)
    y = np.array([t.y for t in train], dtype=np.float64)
    if hyper.noise_var == 0.0 and _has_duplicates(X):
        raise NonPSDError("duplicate inputs with zero noise make K singular")

    gram = kernel_matrix(X, X, hyper)
    gram[np.diag_indices_from(gram)] += hyper.noise_var
    jitter = JITTER_REL * hyper.signal_var
    for _ in range(JITTER_ESCALATIONS + 1):
        try:
            L = np.linalg.cholesky(gram + jitter * np.eye(len(y)))
        except np.linalg.LinAlgError:
            jitter *= 10.0
            continue
        if np.all(np.diag(L) > 0.0):
            break
        jitter *= 10.0
    else:
        raise NonPSDError(
            f"Gram matrix not positive definite after {JITTER_ESCALATIONS} jitter escalations")

    alpha = solve_triangular(L.T, solve_triangular(L, y, lower=True), lower=False)
    for a in (X, y, L, alpha):
        a.setflags(write=False)
    return GPModel(hyper, X, y, L, alpha, jitter)


def predict_many(model: GPModel, Xq):
    """Posterior mean and variance at each row of ``Xq``."""
    Xq = np.asarray(Xq, dtype=np.float64).reshape(-1, 2)
    k_star = kernel_matrix(Xq, model.X, model.hyper)
    mu = k_star @ model.alpha
    v = solve_triangular(model.factor, k_star.T, lower=True)
    var = model.hyper.signal_var - (v * v).sum(axis=0)
    return mu, np.maximum(var, 0.0)


def predict(model: GPModel, x):
    mu, var = predict_many(model, x)
    return float(mu[0]), float(var[0])


def log_marginal_likelihood(model: GPModel) -> float:
    m = model.m
    return float(-0.5 * model.y @ model.alpha
                 - np.log(np.diag(model.factor)).sum()
                 - 0.5 * m * math.log(2.0 * math.pi))
