"""Upper bound on the expected excess training loss after ``T`` rounds."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .sim import ClientStrategy


class HypothesisError(ValueError):
    """A hypothesis of the loss bound is violated."""


@dataclass(frozen=True)
class BoundInputs:
    L: float
    mu: float
    eta: float
    T: int
    H: int
    beta: float
    G_sq: float
    init_dist_sq: float
    p: np.ndarray
    sigma_sq: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        for name in ("p", "sigma_sq", "d"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))

    @property
    def n_clients(self) -> int:
        return len(self.p)

    def validate(self) -> None:
        if not 0 < self.mu <= self.L:
            raise HypothesisError(f"need 0 < mu <= L (mu={self.mu}, L={self.L})")
        if not self.eta > 0:
            raise HypothesisError("need eta > 0")
        if self.eta > (1 + 1e-12) / (2 * self.L):
            raise HypothesisError(f"eta > 1/(2L) (eta={self.eta}, 1/(2L)={1 / (2 * self.L)})")
        if not 0 < self.mu * self.eta < 1:
            raise HypothesisError(f"need 0 < mu*eta < 1 (mu*eta={self.mu * self.eta})")
        if self.T < 1 or self.H < 1:
            raise HypothesisError("need T >= 1 and H >= 1")
        n = len(self.p)
        if self.sigma_sq.shape != (n,) or self.d.shape != (n,):
            raise HypothesisError("per-client arrays must have equal length")
        if np.any(self.p < 0) or abs(self.p.sum() - 1) > 1e-12:
            raise HypothesisError("weights must be non-negative and sum to 1")
        if np.any(self.sigma_sq < 0) or np.any(self.d < 0) or self.beta < 0 or self.G_sq < 0 or self.init_dist_sq < 0:
            raise HypothesisError("variances, heterogeneity, beta, G^2 and init distance must be non-negative")


def _geometric_sum(mu: float, eta: float, n_terms: int) -> float:
    """``sum_{k=0}^{n_terms-1} (1 - mu*eta)^k``."""
    q = mu * eta
    return -np.expm1(n_terms * np.log1p(-q)) / q


def geometric_A(L: float, mu: float, eta: float, T: int, H: int) -> float:
    """Mechanism constant ``2 L eta (1 - (1 - mu eta)^(TH)) / mu``."""
    if not 0 < mu * eta < 1:
        raise HypothesisError(f"need 0 < mu*eta < 1 (mu*eta={mu * eta})")
    return 2 * L * eta**2 * _geometric_sum(mu, eta, T * H)


def per_client_terms(b: BoundInputs, strategies: Sequence[ClientStrategy]) -> np.ndarray:
    """Per-client summand multiplying the geometric weight."""
    if len(strategies) != b.n_clients:
        raise HypothesisError("one strategy per client is required")
    e = np.array([s.e for s in strategies], dtype=np.float64)
    D = np.array([s.D for s in strategies], dtype=np.float64)
    g = np.array([s.gamma for s in strategies], dtype=np.float64)
    if np.any(D < 1):
        raise HypothesisError("batch sizes must be >= 1")
    return _terms(b, e, D, g)


def _terms(b: BoundInputs, e, D, g) -> np.ndarray:
    p, s2 = b.p, b.sigma_sq
    noise = s2 / D
    mislabel = (1 - e) * b.beta
    drift = (g - 1) ** 2 + (b.H - 1) ** 2
    return (p**2 * noise + 6 * b.L * p * b.d + p * mislabel
            + 2 * p * drift * (b.G_sq + noise + mislabel))


def loss_bound(b: BoundInputs, strategies: Sequence[ClientStrategy], term_by_term: bool = False) -> float:
    """Bound on ``E[F(w_T) - F(w*)]`` for the given client strategies.

    The double sum over rounds and local iterations is a geometric series and
    is evaluated in closed form unless ``term_by_term`` is set.
    """
    b.validate()
    terms = per_client_terms(b, strategies).sum()
    decay = 1 - b.mu * b.eta
    TH = b.T * b.H
    head = b.L * decay**TH * b.init_dist_sq
    if term_by_term:
        weight = 0.0
        for t in range(1, b.T + 1):
            for h in range(1, b.H + 1):
                weight += decay ** (TH - (t - 1) * b.H - h)
        return float(head + 2 * b.L * b.eta**2 * weight * terms)
    return float(head + geometric_A(b.L, b.mu, b.eta, b.T, b.H) * terms)


def truthful_bound(b: BoundInputs, D):
    """Bound under full effort and ``gamma = 1``; ``D`` may be real-valued.

    ``D`` has shape ``(..., N)``; a batch of assignments gives an array of bounds.
    """
    b.validate()
    D = np.asarray(D, dtype=np.float64)
    if D.shape[-1:] != (b.n_clients,) or np.any(D <= 0):
        raise HypothesisError("need one positive batch size per client")
    terms = _terms(b, 1.0, D, 1.0).sum(axis=-1)
    head = b.L * (1 - b.mu * b.eta) ** (b.T * b.H) * b.init_dist_sq
    out = head + geometric_A(b.L, b.mu, b.eta, b.T, b.H) * terms
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Sensitivity:
    client: int
    which: str
    base: float
    perturbed: float

    @property
    def delta(self) -> float:
        return self.perturbed - self.base


def bound_sensitivity(b: BoundInputs, strategies: Sequence[ClientStrategy], which: str, client: int,
                      gamma_to: float = 1.5) -> Sensitivity:
    """Change of the bound for one client's move.

    ``which="D"`` adds one sample to the batch, ``"e"`` switches labeling
    effort from 0 to 1 and ``"gamma"`` moves the coefficient from 1 to
    ``gamma_to``.
    """
    strategies = list(strategies)
    s = strategies[client]
    if which == "D":
        before, after = s, ClientStrategy(s.e, s.D + 1, s.gamma)
    elif which == "e":
        before, after = ClientStrategy(0, s.D, s.gamma), ClientStrategy(1, s.D, s.gamma)
    elif which == "gamma":
        before, after = ClientStrategy(s.e, s.D, 1.0), ClientStrategy(s.e, s.D, gamma_to)
    else:
        raise ValueError(f"unknown sensitivity target {which!r}")
    strategies[client] = before
    base = loss_bound(b, strategies)
    strategies[client] = after
    return Sensitivity(client, which, base, loss_bound(b, strategies))
