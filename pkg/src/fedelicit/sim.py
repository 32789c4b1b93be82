"""Federated training under strategic clients.

Each round every client starts from the global model, runs ``H`` mini-batch
SGD steps on its (possibly mislabeled) dataset with its chosen batch size,
and reports ``w_global + gamma * (w_local - w_global)``. The server averages
the reports with the aggregation weights.
"""

from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import (
    Dataset,
    LossModel,
    _check_weights,
    accuracy,
    empirical_grad,
    empirical_loss,
    global_loss,
    minimize,
)


@dataclass(frozen=True)
class ClientStrategy:
    """The executed triple: labeling effort, batch size, reporting coefficient."""

    e: int = 1
    D: int = 1
    gamma: float = 1.0

    def __post_init__(self):
        if self.e not in (0, 1):
            raise ValueError(f"labeling effort must be 0 or 1, got {self.e!r}")
        if self.D < 1:
            raise ValueError(f"batch size must be >= 1, got {self.D!r}")
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError(f"reporting coefficient must be finite and >= 0, got {self.gamma!r}")


@dataclass
class ClientProfile:
    """Per-client constants.

    ``dataset`` is what the client trains on (after labeling); ``clean_dataset``
    holds the correct labels used to measure the task loss and defaults to
    ``dataset``.
    """

    weight: float
    comp_cost: float
    dataset: Dataset
    sigma_sq: float | None = None
    het: float | None = None
    clean_dataset: Dataset | None = None

    def __post_init__(self):
        if not 0 < self.weight <= 1:
            raise ValueError("client weight must lie in (0, 1]")
        if not self.comp_cost > 0:
            raise ValueError("computation cost must be positive")
        if self.clean_dataset is None:
            self.clean_dataset = self.dataset


@dataclass(frozen=True)
class TrainConfig:
    eta: float
    T: int
    H: int
    seed: int
    w0: np.ndarray

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("step size must be positive")
        if self.T < 1 or self.H < 1:
            raise ValueError("T and H must be >= 1")


@dataclass
class TrainResult:
    w_final: np.ndarray
    loss_per_round: list[float]
    excess_loss: float
    test_loss_per_round: list[float] = field(default_factory=list)
    accuracy_per_round: list[float] = field(default_factory=list)
    iterates: list[np.ndarray] = field(default_factory=list)
    reported: list[list[np.ndarray]] = field(default_factory=list)


def client_rng(seed: int, client: int, round_: int) -> np.random.Generator:
    """Independent stream for one client in one round."""
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), client, round_]))


def _local_sgd(model: LossModel, w_global, ds: Dataset, D: int, eta: float, H: int,
               rng: np.random.Generator) -> np.ndarray:
    n = len(ds)
    if D > n:
        raise ValueError(f"batch size {D} exceeds local dataset size {n}")
    w = np.array(w_global, dtype=np.float64)
    for _ in range(H):
        idx = rng.integers(0, n, size=D)
        w = w - eta * model.mean_grad(w, ds.X[idx], ds.y[idx], ds.num_classes)
    return w


def local_update(model: LossModel, w_global, profile: ClientProfile, strategy: ClientStrategy,
                 cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    """One client's reported model for one round."""
    w_global = np.asarray(w_global, dtype=np.float64)
    w_local = _local_sgd(model, w_global, profile.dataset, strategy.D, cfg.eta, cfg.H, rng)
    if strategy.gamma == 1.0:
        return w_local
    return w_global + strategy.gamma * (w_local - w_global)


def aggregate(models: Sequence[np.ndarray], p) -> np.ndarray:
    p = _check_weights(p, len(models))
    shapes = {np.shape(m) for m in models}
    if len(shapes) != 1:
        raise ValueError(f"models have differing shapes: {sorted(shapes)}")
    return np.einsum("i,ij->j", p, np.stack(models))


def run_training(model: LossModel, cfg: TrainConfig, profiles: Sequence[ClientProfile],
                 strategies: Sequence[ClientStrategy], test_ds: Dataset | None = None,
                 f_star: float | None = None, record_iterates: bool = False, record_reports: bool = False,
                 workers: int = 1) -> TrainResult:
    """Run ``T`` rounds of broadcast, local updates and aggregation.

    ``loss_per_round[t-1]`` is the weighted loss of ``w_t`` on the clean
    client datasets. ``excess_loss`` subtracts ``f_star`` (computed exactly
    when not given). Results depend only on ``cfg.seed``, not on ``workers``.
    """
    if len(profiles) != len(strategies):
        raise ValueError("one strategy per client profile is required")
    p = np.array([pr.weight for pr in profiles])
    clean = [pr.clean_dataset for pr in profiles]
    if f_star is None:
        f_star = global_loss(model, minimize(model, clean, p), clean, p)

    w = np.array(cfg.w0, dtype=np.float64)
    result = TrainResult(w, [], float("nan"))
    pool = ThreadPoolExecutor(workers) if workers > 1 else None

    def one(i, t):
        return local_update(model, w, profiles[i], strategies[i], cfg, client_rng(cfg.seed, i, t))

    try:
        for t in range(1, cfg.T + 1):
            ids = range(len(profiles))
            reports = list(pool.map(lambda i: one(i, t), ids)) if pool else [one(i, t) for i in ids]
            w = aggregate(reports, p)
            result.loss_per_round.append(global_loss(model, w, clean, p))
            if test_ds is not None:
                result.test_loss_per_round.append(empirical_loss(model, w, test_ds))
                result.accuracy_per_round.append(accuracy(model, w, test_ds))
            if record_iterates:
                result.iterates.append(w)
            if record_reports:
                result.reported.append(reports)
    finally:
        if pool is not None:
            pool.shutdown()

    result.w_final = w
    result.excess_loss = result.loss_per_round[-1] - f_star
    return result


def test_loss(model: LossModel, w, test_ds: Dataset, mode: str = "full_mean",
              rng: np.random.Generator | None = None) -> float:
    """Loss on one random test sample (``single_sample``) or the test-set mean."""
    if mode == "full_mean":
        return empirical_loss(model, w, test_ds)
    if mode == "single_sample":
        if rng is None:
            raise ValueError("single_sample mode needs an rng")
        m = int(rng.integers(0, len(test_ds)))
        return float(model.losses(w, test_ds.X[m:m + 1], test_ds.y[m:m + 1], test_ds.num_classes)[0])
    raise ValueError(f"unknown test mode {mode!r}")


test_loss.__test__ = False  # keep pytest from collecting it


def _sample_variance(model: LossModel, w, ds: Dataset) -> float:
    G = model.grads(w, ds.X, ds.y, ds.num_classes)
    return float(np.mean(np.sum((G - G.mean(axis=0)) ** 2, axis=1)))


def estimate_sigma(model: LossModel, profile: ClientProfile, w_probes: Sequence[np.ndarray],
                   dataset: Dataset | None = None) -> float:
    """Largest per-sample gradient variance of the client over the probes.

    Uses the client's training dataset unless ``dataset`` is given; the value
    is stored in ``profile.sigma_sq``.
    """
    if len(w_probes) == 0:
        raise ValueError("w_probes must contain at least one probe point")
    ds = profile.dataset if dataset is None else dataset
    value = max(_sample_variance(model, w, ds) for w in w_probes)
    profile.sigma_sq = value
    return value


def estimate_G_sq(model: LossModel, profiles: Sequence[ClientProfile], w_probes: Sequence[np.ndarray]) -> float:
    """Max of ``||grad F_i(w)||^2`` over clients (clean data) and probes."""
    if len(w_probes) == 0:
        raise ValueError("w_probes must contain at least one probe point")
    return max(float(np.sum(empirical_grad(model, w, pr.clean_dataset) ** 2))
               for pr in profiles for w in w_probes)


def estimate_het(model: LossModel, profiles: Sequence[ClientProfile], w_star=None) -> np.ndarray:
    """Heterogeneity ``d_i = F_i(w*) - F_i(w_i*)`` on the clean datasets."""
    p = np.array([pr.weight for pr in profiles])
    clean = [pr.clean_dataset for pr in profiles]
    if w_star is None:
        w_star = minimize(model, clean, p)
    d = np.empty(len(profiles))
    for i, (pr, ds) in enumerate(zip(profiles, clean)):
        w_i = minimize(model, ds, w0=w_star)
        gap = empirical_loss(model, w_star, ds) - empirical_loss(model, w_i, ds)
        if gap < -1e-10:
            raise ArithmeticError(f"client {i}: local optimum worse than global optimum by {-gap}")
        d[i] = max(gap, 0.0)
        pr.het = d[i]
    return d
