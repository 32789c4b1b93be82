"""Loss models, datasets and the analytic constants derived from them.

Two strongly convex losses are supported:

* ``ridge``: ``f(w, (x, y)) = 0.5 * (x @ w - y)**2 + 0.5 * l2 * ||w||**2``
* ``logistic``: multinomial softmax cross-entropy with weights stored as a
  ``(K, d)`` matrix flattened row-major, plus the same per-sample ``l2`` term.

Model parameters are plain 1-D float64 numpy arrays throughout the package.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize
from scipy.special import logsumexp, softmax

RIDGE = "ridge"
LOGISTIC = "logistic"
_KINDS = (RIDGE, LOGISTIC)

# slack for floating-point round-off when checking recorded bounds
_BOUND_RTOL = 1e-9


class DimensionError(ValueError):
    """Raised when parameter or feature dimensions disagree."""

    def __init__(self, what: str, expected, actual):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected dimension {expected}, got {actual}")


class ConvergenceError(RuntimeError):
    """Raised when an optimizer stops before reaching its gradient tolerance."""

    def __init__(self, message: str, grad_norm: float):
        self.grad_norm = grad_norm
        super().__init__(f"{message} (final gradient norm {grad_norm:.3e})")


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    label: float


@dataclass
class Dataset:
    """An ordered collection of labeled samples stored as arrays.

    ``num_classes`` is ``None`` for regression data. ``x_max`` bounds every
    ``||x||**2`` and ``y_max`` bounds every ``y**2`` (regression only); when
    omitted they are set to the realized maxima.
    """

    X: np.ndarray
    y: np.ndarray
    num_classes: int | None = None
    x_max: float | None = None
    y_max: float | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"features must be a 2-D array, got shape {X.shape}")
        if X.shape[0] == 0:
            raise ValueError("dataset must contain at least one sample")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        y = np.asarray(self.y)
        if y.shape != (X.shape[0],):
            raise DimensionError("labels", (X.shape[0],), y.shape)

        if self.num_classes is None:
            y = y.astype(np.float64)
            if not np.all(np.isfinite(y)):
                raise ValueError("labels must be finite")
            realized_y = float(np.max(y**2))
            if self.y_max is None:
                self.y_max = realized_y
            elif realized_y > self.y_max * (1 + _BOUND_RTOL) + 1e-300:
                raise ValueError(f"label bound violated: max y^2 = {realized_y} > y_max = {self.y_max}")
        else:
            if self.num_classes < 1:
                raise ValueError("num_classes must be >= 1")
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise ValueError("class labels must be integers")
            y = y.astype(np.int64)
            if y.min() < 0 or y.max() >= self.num_classes:
                raise ValueError(f"class labels must lie in 0..{self.num_classes - 1}")

        realized_x = float(np.max(np.einsum("ij,ij->i", X, X)))
        if self.x_max is None:
            self.x_max = realized_x
        elif realized_x > self.x_max * (1 + _BOUND_RTOL):
            raise ValueError(f"feature bound violated: max ||x||^2 = {realized_x} > x_max = {self.x_max}")

        self.X = X
        self.y = y

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledSample], num_classes: int | None = None, **bounds) -> Dataset:
        if not samples:
            raise ValueError("dataset must contain at least one sample")
        dims = {np.asarray(s.features).shape for s in samples}
        if len(dims) != 1:
            raise ValueError(f"inhomogeneous feature dimensions: {sorted(dims)}")
        X = np.stack([np.asarray(s.features, dtype=np.float64) for s in samples])
        y = np.array([s.label for s in samples])
        return cls(X, y, num_classes, **bounds)

    def __len__(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, m: int) -> LabeledSample:
        return LabeledSample(self.X[m], self.y[m].item())

    @property
    def samples(self) -> list[LabeledSample]:
        return [self[m] for m in range(len(self))]

    @property
    def feature_dim(self) -> int:
        return self.X.shape[1]

    @property
    def is_classification(self) -> bool:
        return self.num_classes is not None

    def with_labels(self, y: np.ndarray) -> Dataset:
        """Copy with replaced labels; features and recorded bounds are kept."""
        return Dataset(self.X, np.asarray(y), self.num_classes, x_max=self.x_max, y_max=self.y_max)

    def subset(self, idx) -> Dataset:
        return Dataset(self.X[idx], self.y[idx], self.num_classes, x_max=self.x_max, y_max=self.y_max)


@dataclass(frozen=True)
class LossModel:
    kind: str = RIDGE
    l2: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unsupported model kind {self.kind!r}; expected one of {_KINDS}")
        if not self.l2 >= 0:
            raise ValueError("l2 coefficient must be >= 0")

    def n_params(self, feature_dim: int, num_classes: int | None = None) -> int:
        if self.kind == RIDGE:
            return feature_dim
        if num_classes is None:
            raise ValueError("logistic model needs num_classes")
        return num_classes * feature_dim

    def zeros(self, ds: Dataset) -> np.ndarray:
        return np.zeros(self.n_params(ds.feature_dim, ds.num_classes))

    def _check(self, w: np.ndarray, X: np.ndarray, num_classes: int | None) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        expected = self.n_params(X.shape[1], num_classes)
        if w.shape != (expected,):
            raise DimensionError("model parameters", expected, w.shape[0] if w.ndim == 1 else w.shape)
        if self.kind == LOGISTIC:
            return w.reshape(num_classes, X.shape[1])
        return w

    # vectorized primitives over the rows of X

    def losses(self, w, X, y, num_classes=None) -> np.ndarray:
        W = self._check(w, X, num_classes)
        reg = 0.5 * self.l2 * float(np.dot(w, w))
        if self.kind == RIDGE:
            r = X @ W - y
            return 0.5 * r * r + reg
        z = X @ W.T
        return logsumexp(z, axis=1) - z[np.arange(len(y)), y] + reg

    def grads(self, w, X, y, num_classes=None) -> np.ndarray:
        """Per-sample gradients, shape ``(n, n_params)``."""
        W = self._check(w, X, num_classes)
        w = np.asarray(w, dtype=np.float64)
        if self.kind == RIDGE:
            r = X @ W - y
            return r[:, None] * X + self.l2 * w
        P = softmax(X @ W.T, axis=1)
        P[np.arange(len(y)), y] -= 1.0
        G = P[:, :, None] * X[:, None, :]
        return G.reshape(len(y), -1) + self.l2 * w

    def mean_grad(self, w, X, y, num_classes=None) -> np.ndarray:
        W = self._check(w, X, num_classes)
        w = np.asarray(w, dtype=np.float64)
        n = X.shape[0]
        if self.kind == RIDGE:
            return X.T @ (X @ W - y) / n + self.l2 * w
        P = softmax(X @ W.T, axis=1)
        P[np.arange(n), y] -= 1.0
        return (P.T @ X).ravel() / n + self.l2 * w

    def predict(self, w, X, num_classes=None) -> np.ndarray:
        W = self._check(w, X, num_classes)
        if self.kind == RIDGE:
            return X @ W
        return np.argmax(X @ W.T, axis=1)


def per_sample_loss(model: LossModel, w, s: LabeledSample, num_classes: int | None = None) -> float:
    x = np.atleast_2d(np.asarray(s.features, dtype=np.float64))
    y = np.array([s.label], dtype=np.int64 if model.kind == LOGISTIC else np.float64)
    if model.kind == LOGISTIC and num_classes is None:
        num_classes = np.asarray(w).size // x.shape[1]
    return float(model.losses(w, x, y, num_classes)[0])


def per_sample_grad(model: LossModel, w, s: LabeledSample, num_classes: int | None = None) -> np.ndarray:
    x = np.atleast_2d(np.asarray(s.features, dtype=np.float64))
    y = np.array([s.label], dtype=np.int64 if model.kind == LOGISTIC else np.float64)
    if model.kind == LOGISTIC and num_classes is None:
        num_classes = np.asarray(w).size // x.shape[1]
    return model.grads(w, x, y, num_classes)[0]


def empirical_loss(model: LossModel, w, ds: Dataset) -> float:
    """Mean per-sample loss over ``ds`` (the client objective F_i)."""
    return float(np.mean(model.losses(w, ds.X, ds.y, ds.num_classes)))


def empirical_grad(model: LossModel, w, ds: Dataset) -> np.ndarray:
    return model.mean_grad(w, ds.X, ds.y, ds.num_classes)


def _check_weights(p, n: int) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (n,):
        raise DimensionError("aggregation weights", n, p.shape)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights must be non-negative and sum to 1 (sum = {p.sum()!r})")
    return p


def global_loss(model: LossModel, w, datasets: Sequence[Dataset], p) -> float:
    """Weighted federated objective ``sum_i p_i F_i(w)``."""
    p = _check_weights(p, len(datasets))
    return float(sum(pi * empirical_loss(model, w, ds) for pi, ds in zip(p, datasets)))


def global_grad(model: LossModel, w, datasets: Sequence[Dataset], p) -> np.ndarray:
    p = _check_weights(p, len(datasets))
    return sum(pi * empirical_grad(model, w, ds) for pi, ds in zip(p, datasets))


class SmoothnessConstants(NamedTuple):
    L: float
    mu: float


def _second_moment(ds: Dataset) -> np.ndarray:
    return ds.X.T @ ds.X / len(ds)


def estimate_constants(model: LossModel, datasets: Sequence[Dataset] | Dataset, p=None) -> SmoothnessConstants:
    """Shared smoothness ``L`` and strong-convexity ``mu`` of every F_i.

    Ridge constants are exact Hessian eigenvalues. For logistic regression
    ``mu = l2`` and ``L = l2 + 0.5 * max_i lambda_max(X_i^T X_i / n_i)``,
    using the 1/2 bound on the softmax Hessian.
    """
    if isinstance(datasets, Dataset):
        datasets = [datasets]
    if p is not None:
        _check_weights(p, len(datasets))
    eigs = [np.linalg.eigvalsh(_second_moment(ds)) for ds in datasets]
    top = max(float(e[-1]) for e in eigs)
    if model.kind == RIDGE:
        L = top + model.l2
        mu = min(float(e[0]) for e in eigs) + model.l2
        if mu <= 1e-12 * max(L, 1.0):
            raise ValueError("ridge objective is not strongly convex (rank-deficient data); set l2 > 0")
        return SmoothnessConstants(L, mu)
    if model.l2 <= 0:
        raise ValueError("logistic strong convexity requires l2 > 0")
    return SmoothnessConstants(model.l2 + 0.5 * top, model.l2)


def minimize(model: LossModel, datasets: Sequence[Dataset] | Dataset, p=None, tol: float = 1e-9,
             max_iter: int = 20000, w0=None) -> np.ndarray:
    """Exact minimizer of ``sum_i p_i F_i`` (a single dataset means F_i alone).

    Ridge is solved through the normal equations. Logistic regression runs
    L-BFGS followed by gradient descent with step ``1/L`` until the gradient norm
    is at most ``tol``.
    """
    if isinstance(datasets, Dataset):
        datasets = [datasets]
    p = np.full(len(datasets), 1.0 / len(datasets)) if p is None else _check_weights(p, len(datasets))
    ref = datasets[0]
    for ds in datasets[1:]:
        if ds.feature_dim != ref.feature_dim or ds.num_classes != ref.num_classes:
            raise DimensionError("dataset", (ref.feature_dim, ref.num_classes), (ds.feature_dim, ds.num_classes))

    def grad(w):
        return global_grad(model, w, datasets, p)

    if model.kind == RIDGE:
        d = ref.feature_dim
        Hm = model.l2 * np.eye(d) + sum(pi * _second_moment(ds) for pi, ds in zip(p, datasets))
        b = sum(pi * ds.X.T @ ds.y / len(ds) for pi, ds in zip(p, datasets))
        w = np.linalg.solve(Hm, b)
        for _ in range(5):
            g = grad(w)
            if np.linalg.norm(g) <= tol:
                return w
            w = w - np.linalg.solve(Hm, g)
        raise ConvergenceError("ridge solve did not reach tolerance", float(np.linalg.norm(grad(w))))

    if model.l2 <= 0:
        raise ValueError("logistic minimization requires l2 > 0")

    def fun(w):
        return global_loss(model, w, datasets, p), grad(w)

    w = model.zeros(ref) if w0 is None else np.array(w0, dtype=np.float64)
    res = optimize.minimize(fun, w, jac=True, method="L-BFGS-B",
                            options={"maxiter": max_iter, "gtol": tol * 1e-2, "ftol": 0.0, "maxcor": 30})
    w = res.x
    # fixed 1/L steps; L bounds the Hessian everywhere
    L, _ = estimate_constants(model, datasets)
    g = grad(w)
    for _ in range(max_iter):
        if np.linalg.norm(g) <= tol:
            return w
        w = w - g / L
        g = grad(w)
    raise ConvergenceError("gradient descent hit the iteration cap", float(np.linalg.norm(g)))


def accuracy(model: LossModel, w, ds: Dataset) -> float:
    """Top-1 accuracy; NaN for regression."""
    if not ds.is_classification:
        return float("nan")
    return float(np.mean(model.predict(w, ds.X, ds.num_classes) == ds.y))
