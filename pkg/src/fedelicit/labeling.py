"""Crowdsourced labeling effort and the no-effort gradient-gap bound beta."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .model import LOGISTIC, RIDGE, Dataset, LossModel

ANALYTIC = "analytic"
BRUTE_FORCE = "brute_force"


@dataclass(frozen=True)
class BetaBound:
    value: float
    method: str


def _check_effort(e) -> int:
    if e not in (0, 1):
        raise ValueError(f"labeling effort must be 0 or 1, got {e!r}")
    return int(e)


def apply_labeling(ds: Dataset, e: int, rng: np.random.Generator) -> Dataset:
    """Return the dataset a client ends up with after labeling with effort ``e``.

    With ``e == 1`` the dataset is returned untouched. With ``e == 0`` every
    label is redrawn independently of the features: uniformly over the classes,
    or uniformly on ``[-sqrt(y_max), sqrt(y_max)]`` for regression.
    """
    if _check_effort(e) == 1:
        return ds
    n = len(ds)
    if ds.is_classification:
        y = rng.integers(0, ds.num_classes, size=n)
    else:
        a = np.sqrt(ds.y_max)
        y = rng.uniform(-a, a, size=n)
    return ds.with_labels(y)


def compute_beta_analytic(model: LossModel, x_max: float, y_max: float = 0.0, num_classes: int | None = None,
                          strict: bool = False) -> BetaBound:
    """Closed-form bound on the expected squared gradient gap caused by relabeling.

    Ridge: ``2 * y_max * x_max`` (``4 * y_max * x_max`` with ``strict=True``,
    which also covers the worst single relabeling). Logistic: ``2 * x_max``,
    since two distinct one-hot vectors differ by squared norm 2.
    """
    if not (np.isfinite(x_max) and x_max >= 0 and np.isfinite(y_max) and y_max >= 0):
        raise ValueError("x_max and y_max must be finite and non-negative")
    if model.kind == RIDGE:
        return BetaBound((4.0 if strict else 2.0) * y_max * x_max, ANALYTIC)
    if model.kind == LOGISTIC:
        if num_classes is not None and num_classes < 2:
            return BetaBound(0.0, ANALYTIC)
        return BetaBound(2.0 * x_max, ANALYTIC)
    raise ValueError(f"unsupported model kind {model.kind!r}")


def _replacement_labels(ds: Dataset, n_grid: int):
    """Support of the no-effort label distribution with quadrature weights."""
    if ds.is_classification:
        K = ds.num_classes
        return np.arange(K), np.full(K, 1.0 / K)
    a = np.sqrt(ds.y_max)
    if a == 0:
        return np.zeros(1), np.ones(1)
    # composite Simpson weights: exact for the quadratic gap of ridge
    labels = np.linspace(-a, a, n_grid)
    wts = np.ones(n_grid)
    wts[1:-1:2] = 4.0
    wts[2:-1:2] = 2.0
    return labels, wts / wts.sum()


def compute_beta_empirical(model: LossModel, ds: Dataset, w_samples: Sequence[np.ndarray],
                           mode: str = "expected", n_grid: int = 101) -> BetaBound:
    """Brute-force gradient gap ``||grad f(w, (x, y)) - grad f(w, (x, y'))||^2``.

    The replacement label ``y'`` ranges over the no-effort label distribution.
    ``mode="expected"`` averages over it (the quantity the bound assumes) and
    ``mode="sup"`` takes the worst replacement. Either way the result is the
    maximum over samples and probe points.
    """
    if len(w_samples) == 0:
        raise ValueError("w_samples must contain at least one probe point")
    if mode not in ("expected", "sup"):
        raise ValueError(f"unknown mode {mode!r}")
    if n_grid < 3 or n_grid % 2 == 0:
        raise ValueError("n_grid must be odd and >= 3")
    labels, wts = _replacement_labels(ds, n_grid)
    n = len(ds)
    X_rep = np.repeat(ds.X, len(labels), axis=0)
    y_rep = np.tile(labels, n)
    best = 0.0
    for w in w_samples:
        g_true = model.grads(w, ds.X, ds.y, ds.num_classes)
        g_swap = model.grads(w, X_rep, y_rep, ds.num_classes).reshape(n, len(labels), -1)
        gap = np.sum((g_swap - g_true[:, None, :]) ** 2, axis=2)
        per_sample = gap @ wts if mode == "expected" else gap.max(axis=1)
        best = max(best, float(per_sample.max()))
    return BetaBound(best, BRUTE_FORCE)
