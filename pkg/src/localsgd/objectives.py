"""Finite-sum objectives f(x) = (1/n) sum_i f_i(x) with stochastic oracles.

Two families are provided:

* ridge-regularized logistic regression over a sparse Dataset,
  f_i(x) = log(1 + exp(-b_i a_i^T x)) + (lam/2) ||x||^2
* a synthetic strongly convex quadratic with shared diagonal curvature,
  f_i(x) = (1/2) x^T A x - b_i^T x

Both expose the full gradient, per-component gradients, mini-batch means,
and vectorized batched variants used by the Monte-Carlo runners.  The
quadratic has an analytic minimizer and exactly known curvature and noise
constants, which makes it the fixture of choice for verifying bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import Dataset


@dataclass(frozen=True)
class ProblemConstants:
    """Curvature and noise constants consumed by the convergence bounds.

    L: smoothness, mu: strong convexity (L >= mu > 0), sigma_sq: bound on
    the per-component gradient variance, G_sq: bound on the per-component
    gradient second moment.  kappa is always exactly L/mu.
    """

    L: float
    mu: float
    sigma_sq: float
    G_sq: float

    def __post_init__(self):
        if not (self.mu > 0.0):
            raise ValueError("strong convexity constant must be positive")
        if self.L < self.mu:
            raise ValueError("smoothness constant must be >= strong convexity")
        if self.sigma_sq < 0.0 or self.G_sq < 0.0:
            raise ValueError("noise bounds must be nonnegative")

    @property
    def kappa(self) -> float:
        return self.L / self.mu


@dataclass(frozen=True)
class ReferenceSolution:
    """Minimizer x_star and optimal value f_star, analytic or numeric."""

    x_star: np.ndarray
    f_star: float
    provenance: str  # "analytic" | "numeric"


class LogisticObjective:
    """L2-regularized logistic loss over a sparse Dataset.

    The loss is evaluated through log(1 + e^z) = logaddexp(0, z), which is
    stable for margins of either sign; a non-finite result raises.
    """

    kind = "logistic-l2"

    def __init__(self, dataset: Dataset, lam=None):
        self.dataset = dataset
        self.lam = dataset.lam if lam is None else float(lam)
        if self.lam < 0.0:
            raise ValueError("regularization must be nonnegative")
        self.n = dataset.n
        self.d = dataset.d
        self._A = dataset.features
        self._b = dataset.labels
        self._row_norms_sq = dataset.row_norms_sq()
        self._dense = None  # built lazily for the vectorized oracles

    def _check_dim(self, x):
        if x.shape[-1] != self.d:
            raise ValueError(f"point has dimension {x.shape[-1]}, expected {self.d}")

    def _margins(self, x):
        return self._b * (self._A @ x)

    def value(self, x) -> float:
        self._check_dim(x)
        m = self._margins(x)
        val = float(np.mean(np.logaddexp(0.0, -m))) + 0.5 * self.lam * float(x @ x)
        if not np.isfinite(val):
            raise FloatingPointError("logistic loss evaluated to a non-finite value")
        return val

    def gradient(self, x) -> np.ndarray:
        self._check_dim(x)
        m = self._margins(x)
        coef = -self._b * expit(-m)
        return np.asarray(self._A.T @ coef) / self.n + self.lam * x

    def component_value(self, x, i) -> float:
        self._check_dim(x)
        if not 0 <= i < self.n:
            raise IndexError(f"component index {i} out of range [0, {self.n})")
        row = self._A.getrow(i)
        m = self._b[i] * float(row.data @ x[row.indices])
        return float(np.logaddexp(0.0, -m)) + 0.5 * self.lam * float(x @ x)

    def component_gradient(self, x, i) -> np.ndarray:
        self._check_dim(x)
        if not 0 <= i < self.n:
            raise IndexError(f"component index {i} out of range [0, {self.n})")
        row = self._A.getrow(i)
        m = self._b[i] * float(row.data @ x[row.indices])
        coef = -self._b[i] * expit(-m)
        g = self.lam * np.array(x)
        g[row.indices] += coef * row.data
        return g

    def minibatch_gradient(self, x, idx) -> np.ndarray:
        """Mean of component gradients over index array idx."""
        self._check_dim(x)
        rows = self._A[idx]
        m = self._b[idx] * (rows @ x)
        coef = -self._b[idx] * expit(-m)
        return np.asarray(rows.T @ coef) / len(idx) + self.lam * x

    def component_gradients_at(self, x, idx) -> np.ndarray:
        """Per-component gradients at a single point, stacked (len(idx), d)."""
        self._check_dim(x)
        dense = self._dense_features()
        rows = dense[idx]
        m = self._b[idx] * (rows @ x)
        coef = -self._b[idx] * expit(-m)
        return coef[:, None] * rows + self.lam * x

    def minibatch_gradient_many(self, X, I) -> np.ndarray:
        """Vectorized mini-batch means: X (..., d), I (..., b) -> (..., d)."""
        dense = self._dense_features()
        rows = dense[I]                                   # (..., b, d)
        m = self._b[I] * np.einsum("...bd,...d->...b", rows, X)
        coef = -self._b[I] * expit(-m)
        return np.einsum("...b,...bd->...d", coef, rows) / I.shape[-1] + self.lam * X

    def value_many(self, X) -> np.ndarray:
        """Full-objective values for a stack of points X (..., d)."""
        dense = self._dense_features()
        m = self._b * np.einsum("nd,...d->...n", dense, X)
        return np.mean(np.logaddexp(0.0, -m), axis=-1) + 0.5 * self.lam * np.sum(
            X * X, axis=-1
        )

    def gradient_many(self, X) -> np.ndarray:
        """Full gradients for a stack of points X (..., d)."""
        dense = self._dense_features()
        m = self._b * np.einsum("nd,...d->...n", dense, X)
        coef = -self._b * expit(-m)
        return np.einsum("...n,nd->...d", coef, dense) / self.n + self.lam * X

    def second_moment_many(self, X) -> np.ndarray:
        """E_i ||grad f_i||^2 for a stack of points, exact enumeration."""
        dense = self._dense_features()
        m = self._b * np.einsum("nd,...d->...n", dense, X)
        coef = -self._b * expit(-m)
        second = np.mean(coef**2 * self._row_norms_sq, axis=-1)
        mean_part = np.einsum("...n,nd->...d", coef, dense) / self.n
        return (
            second
            + 2.0 * self.lam * np.sum(X * mean_part, axis=-1)
            + self.lam**2 * np.sum(X * X, axis=-1)
        )

    def variance_at(self, x) -> float:
        """Exact E_i ||grad f_i(x) - grad f(x)||^2 by enumeration."""
        self._check_dim(x)
        m = self._margins(x)
        coef = -self._b * expit(-m)
        # the lam*x part is common to every component and cancels
        mean_part = np.asarray(self._A.T @ coef) / self.n
        second = float(np.mean(coef**2 * self._row_norms_sq))
        return second - float(mean_part @ mean_part)

    def second_moment_at(self, x) -> float:
        """Exact E_i ||grad f_i(x)||^2 by enumeration."""
        self._check_dim(x)
        m = self._margins(x)
        coef = -self._b * expit(-m)
        mean_part = np.asarray(self._A.T @ coef) / self.n
        second = float(np.mean(coef**2 * self._row_norms_sq))
        return (
            second
            + 2.0 * self.lam * float(x @ mean_part)
            + self.lam**2 * float(x @ x)
        )

    def curvature(self):
        """Analytic (mu, L): mu = lam, L = lam + max_i ||a_i||^2 / 4."""
        return self.lam, self.lam + float(self._row_norms_sq.max()) / 4.0

    def _dense_features(self):
        if self._dense is None:
            if self.n * self.d > 20_000_000:
                raise MemoryError(
                    "dense feature cache requested for a large dataset; "
                    "vectorized oracles are meant for small fixtures"
                )
            self._dense = self._A.toarray()
        return self._dense


class QuadraticObjective:
    """Synthetic quadratic with shared diagonal Hessian and noisy linear terms.

    f_i(x) = (1/2) x^T diag(h) x - b_i^T x.  The component gradients differ
    from the mean only through b_i, so the gradient variance is the same at
    every point and is known exactly.
    """

    kind = "synthetic-quadratic"
    lam = 0.0

    def __init__(self, hessian_diag, linear_terms):
        self.hess = np.asarray(hessian_diag, dtype=np.float64)
        self.B = np.atleast_2d(np.asarray(linear_terms, dtype=np.float64))
        self.n = self.B.shape[0]
        self.d = self.hess.shape[0]
        if self.B.shape[1] != self.d:
            raise ValueError("linear terms do not match Hessian dimension")
        self.b_mean = self.B.mean(axis=0)
        deltas = self.B - self.b_mean
        self.sigma_sq = float(np.mean(np.sum(deltas**2, axis=1)))

    def _check_dim(self, x):
        if x.shape[-1] != self.d:
            raise ValueError(f"point has dimension {x.shape[-1]}, expected {self.d}")

    def value(self, x) -> float:
        self._check_dim(x)
        return 0.5 * float(x @ (self.hess * x)) - float(self.b_mean @ x)

    def gradient(self, x) -> np.ndarray:
        self._check_dim(x)
        return self.hess * x - self.b_mean

    def component_value(self, x, i) -> float:
        self._check_dim(x)
        return 0.5 * float(x @ (self.hess * x)) - float(self.B[i] @ x)

    def component_gradient(self, x, i) -> np.ndarray:
        self._check_dim(x)
        return self.hess * x - self.B[i]

    def minibatch_gradient(self, x, idx) -> np.ndarray:
        self._check_dim(x)
        return self.hess * x - self.B[idx].mean(axis=0)

    def component_gradients_at(self, x, idx) -> np.ndarray:
        self._check_dim(x)
        return self.hess * x - self.B[idx]

    def minibatch_gradient_many(self, X, I) -> np.ndarray:
        return self.hess * X - self.B[I].mean(axis=-2)

    def value_many(self, X) -> np.ndarray:
        return 0.5 * np.sum(X * self.hess * X, axis=-1) - X @ self.b_mean

    def gradient_many(self, X) -> np.ndarray:
        return self.hess * X - self.b_mean

    def second_moment_many(self, X) -> np.ndarray:
        g = self.hess * X - self.b_mean
        return np.sum(g**2, axis=-1) + self.sigma_sq

    def variance_at(self, x) -> float:
        return self.sigma_sq

    def second_moment_at(self, x) -> float:
        g = self.gradient(x)
        return float(g @ g) + self.sigma_sq

    def curvature(self):
        return float(self.hess.min()), float(self.hess.max())

    def reference_solution(self) -> ReferenceSolution:
        x_star = self.b_mean / self.hess
        return ReferenceSolution(
            x_star=x_star, f_star=self.value(x_star), provenance="analytic"
        )


def logistic_value(x, dataset: Dataset, lam) -> float:
    """Full logistic objective value at x; stable for any margin sign."""
    return LogisticObjective(dataset, lam=lam).value(np.asarray(x, dtype=np.float64))


def stochastic_gradient(x, i, dataset: Dataset, lam) -> np.ndarray:
    """Gradient of the i-th logistic component (0-based index)."""
    return LogisticObjective(dataset, lam=lam).component_gradient(
        np.asarray(x, dtype=np.float64), i
    )


def make_quadratic(d, mu, L, n, noise, seed):
    """Construct the synthetic quadratic fixture with exact constants.

    The Hessian is diagonal with spectrum spread linearly over [mu, L]
    (both endpoints attained), the linear terms b_i are centered so their
    mean is exact, and the perturbations are rescaled so that the gradient
    variance equals noise^2 exactly.  Returns the objective, its analytic
    minimizer, and the exact constants (G_sq reported at the minimizer,
    where the second moment equals the variance).
    """
    if not (0.0 < mu <= L):
        raise ValueError("require 0 < mu <= L")
    if d < 1 or n < 1:
        raise ValueError("require d >= 1 and n >= 1")
    if d == 1 and mu != L:
        raise ValueError("a one-dimensional spectrum cannot attain both mu and L")
    if n == 1 and noise != 0.0:
        raise ValueError("a single component cannot carry zero-mean noise")

    rng = np.random.default_rng(seed)
    hess = np.linspace(mu, L, d) if d > 1 else np.array([mu], dtype=np.float64)
    x_star = rng.standard_normal(d)
    b_mean = hess * x_star

    if noise > 0.0:
        deltas = rng.standard_normal((n, d))
        deltas -= deltas.mean(axis=0)
        scale = noise / np.sqrt(np.mean(np.sum(deltas**2, axis=1)))
        B = b_mean + scale * deltas
    else:
        B = np.tile(b_mean, (n, 1))

    objective = QuadraticObjective(hess, B)
    reference = objective.reference_solution()
    constants = ProblemConstants(
        L=float(L), mu=float(mu), sigma_sq=float(noise) ** 2, G_sq=float(noise) ** 2
    )
    return objective, reference, constants


def estimate_constants(objective, sample_points, trials=1, seed=0) -> ProblemConstants:
    """Estimate (L, mu, sigma^2, G^2) for an objective over sample points.

    sigma^2 and G^2 are the maxima over the points of the per-component
    gradient variance and second moment; both are computed by exact
    enumeration when n is small and by sampling `trials` components
    otherwise.  L and mu come from the analytic formulas of the objective
    family.
    """
    points = [np.asarray(p, dtype=np.float64) for p in sample_points]
    if not points:
        raise ValueError("at least one sample point is required")
    if trials < 1:
        raise ValueError("trials must be >= 1")

    exact = objective.n <= 100_000 or isinstance(objective, QuadraticObjective)
    rng = np.random.default_rng(seed)

    sigma_sq = 0.0
    g_sq = 0.0
    for x in points:
        if exact:
            var = objective.variance_at(x)
            second = objective.second_moment_at(x)
        else:
            idx = rng.integers(0, objective.n, size=trials)
            grads = objective.component_gradients_at(x, idx)
            mean = objective.gradient(x)
            var = float(np.mean(np.sum((grads - mean) ** 2, axis=1)))
            second = float(np.mean(np.sum(grads**2, axis=1)))
        sigma_sq = max(sigma_sq, var)
        g_sq = max(g_sq, second)

    mu, L = objective.curvature()
    return ProblemConstants(L=L, mu=mu, sigma_sq=sigma_sq, G_sq=g_sq)
