"""Reward rule, client/server payoffs and optimal batch-size assignment.

The server asks every client to label carefully (``e' = 1``), report the true
local model (``gamma' = 1``) and use batch size ``D'_i``. Client ``i`` is paid

    r_i = Omega_i - Phi_i * (observed_test_loss - baseline) + c_l

where ``Phi_i`` scales the client's exposure to the test loss and ``Omega_i``
returns the expected loss exposure plus the computation cost. A client's
approximated expected payoff replaces the expected loss by the loss bound;
under this rule it is exactly zero at the truthful strategy and negative for
every deviation once ``D'_i`` clears the labeling floor.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .bound import BoundInputs, geometric_A, truthful_bound
from .sim import ClientStrategy

# floor variants for the labeling constraint on D'
CONSISTENT = "consistent"
PRINTED = "printed"


class InfeasibleError(ValueError):
    """The labeling effort cannot be made incentive compatible."""


@dataclass(frozen=True)
class CostProfile:
    c_l: float
    c_p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c_p", np.asarray(self.c_p, dtype=np.float64))
        if self.c_l < 0:
            raise ValueError("labeling cost must be >= 0")
        if np.any(self.c_p <= 0):
            raise ValueError("computation costs must be positive")


@dataclass
class Assignment:
    D_prime: np.ndarray
    A: float
    phi: np.ndarray
    omega: np.ndarray
    floor: np.ndarray
    baseline: float = 0.0
    D_star: np.ndarray | None = None
    e_prime: np.ndarray = field(default=None)
    gamma_prime: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.D_prime)
        if self.e_prime is None:
            self.e_prime = np.ones(n, dtype=np.int64)
        if self.gamma_prime is None:
            self.gamma_prime = np.ones(n)

    def truthful(self) -> list[ClientStrategy]:
        return [ClientStrategy(1, int(D) if float(D).is_integer() else float(D), 1.0) for D in self.D_prime]


@dataclass(frozen=True)
class PayoffRecord:
    reward: float
    labeling_cost: float
    comp_cost: float
    payoff: float
    payoff_hat: float = float("nan")


@dataclass(frozen=True)
class ServerRecord:
    test_loss: float
    total_reward: float
    payoff: float


def _drift(H: int) -> float:
    return 2.0 * (H - 1) ** 2


def phi(D_prime, c_p, T: int, A: float, sigma_sq, p, H: int):
    """Loss-exposure coefficient ``D'^2 c_p T / (A sigma^2 p (p + 2(H-1)^2))``."""
    sigma_sq = np.asarray(sigma_sq, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if np.any(sigma_sq <= 0) or np.any(p <= 0) or A <= 0:
        raise ZeroDivisionError("phi needs sigma_sq > 0, p > 0 and A > 0 "
                                f"(sigma_sq={sigma_sq}, p={p}, A={A})")
    D_prime = np.asarray(D_prime, dtype=np.float64)
    return D_prime**2 * np.asarray(c_p) * T / (A * sigma_sq * p * (p + _drift(H)))


def min_feasible_D(sigma_sq, c_l: float, p, H: int, beta: float, c_p, T: int, form: str = CONSISTENT):
    """Smallest real ``D'`` for which skipping the labeling effort does not pay.

    ``form="consistent"`` is the exact break-even point of the approximated
    payoff, ``sqrt(c_l sigma^2 (p + 2(H-1)^2) / (beta c_p T (1 + 2(H-1)^2)))``.
    ``form="printed"`` carries an extra factor ``p`` under the root and is
    kept for comparison; it is smaller whenever ``p < 1``.
    """
    if form not in (CONSISTENT, PRINTED):
        raise ValueError(f"unknown floor form {form!r}")
    if beta <= 0:
        raise InfeasibleError("beta = 0: mislabeling does not move the loss bound, "
                              "so labeling effort cannot be incentivized")
    if T < 1 or np.any(np.asarray(c_p) <= 0):
        raise ValueError("need T >= 1 and c_p > 0")
    p = np.asarray(p, dtype=np.float64)
    num = c_l * np.asarray(sigma_sq, dtype=np.float64) * (p + _drift(H))
    if form == PRINTED:
        num = num * p
    return np.sqrt(num / (beta * np.asarray(c_p) * T * (1 + _drift(H))))


def omega(D_prime, costs: CostProfile, b: BoundInputs, A: float | None = None) -> np.ndarray:
    """Per-client fixed reward component ``Omega_i``."""
    A = geometric_A(b.L, b.mu, b.eta, b.T, b.H) if A is None else A
    D_prime = np.asarray(D_prime, dtype=np.float64)
    p, s2 = b.p, b.sigma_sq
    noise = s2 / D_prime
    inner = np.sum(6 * b.L * p * b.d + p**2 * noise + p * _drift(b.H) * (b.G_sq + noise))
    expected_gap = b.L * (1 - b.mu * b.eta) ** (b.T * b.H) * b.init_dist_sq + A * inner
    ph = phi(D_prime, costs.c_p, b.T, A, s2, p, b.H)
    return ph * expected_gap + b.T * costs.c_p * D_prime


def make_assignment(D_prime, costs: CostProfile, b: BoundInputs, baseline: float = 0.0,
                    enforce_floor: bool = True, floor_form: str = CONSISTENT,
                    D_star=None) -> Assignment:
    """Populate ``A``, ``Phi`` and ``Omega`` for a given batch-size assignment."""
    b.validate()
    D_prime = np.asarray(D_prime, dtype=np.float64)
    if D_prime.shape != (b.n_clients,) or np.any(D_prime <= 0):
        raise ValueError("need one positive assigned batch size per client")
    floor = min_feasible_D(b.sigma_sq, costs.c_l, b.p, b.H, b.beta, costs.c_p, b.T, floor_form)
    if enforce_floor and np.any(D_prime < floor * (1 - 1e-12)):
        bad = np.flatnonzero(D_prime < floor * (1 - 1e-12)).tolist()
        raise InfeasibleError(f"assigned batch sizes below the labeling floor for clients {bad}")
    A = geometric_A(b.L, b.mu, b.eta, b.T, b.H)
    return Assignment(D_prime=D_prime, A=A, phi=phi(D_prime, costs.c_p, b.T, A, b.sigma_sq, b.p, b.H),
                      omega=omega(D_prime, costs, b, A), floor=floor, baseline=baseline,
                      D_star=None if D_star is None else np.asarray(D_star, dtype=np.float64))


def reward(i: int, assignment: Assignment, observed_test_loss: float, costs: CostProfile) -> float:
    return float(assignment.omega[i] - assignment.phi[i] * (observed_test_loss - assignment.baseline) + costs.c_l)


def _payoff_hat(i, e, D, gamma, assignment: Assignment, b: BoundInputs, costs: CostProfile):
    """Approximated expected payoff; broadcasts over array-valued ``e, D, gamma``."""
    p, s2, H = b.p[i], b.sigma_sq[i], b.H
    Dp = assignment.D_prime[i]
    c_p = costs.c_p[i]
    k = assignment.phi[i] * assignment.A
    e = np.asarray(e, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)

    def loss_terms(e_, D_, gamma_):
        noise = s2 / D_
        mislabel = (1 - e_) * b.beta
        return (p**2 * noise + p * mislabel + p * _drift(H) * (noise + mislabel)
                + 2 * p * (gamma_ - 1) ** 2 * (b.G_sq + noise + mislabel))

    ref = loss_terms(1.0, Dp, 1.0)
    return (k * (ref - loss_terms(e, D, gamma)) + b.T * c_p * (Dp - D) + costs.c_l * (1 - e))


def payoff_hat(i: int, strategy: ClientStrategy, assignment: Assignment, b: BoundInputs,
               costs: CostProfile) -> float:
    """Client ``i``'s approximated expected payoff when the others are truthful."""
    return float(_payoff_hat(i, strategy.e, strategy.D, strategy.gamma, assignment, b, costs))


def realized_payoff(i: int, strategy: ClientStrategy, assignment: Assignment, costs: CostProfile,
                    observed_test_loss: float, b: BoundInputs) -> PayoffRecord:
    """Settle client ``i`` against an observed test loss."""
    r = reward(i, assignment, observed_test_loss, costs)
    lab = costs.c_l * strategy.e
    comp = b.T * costs.c_p[i] * strategy.D
    return PayoffRecord(r, lab, comp, r - lab - comp, payoff_hat(i, strategy, assignment, b, costs))


def server_payoff(observed_test_loss: float, rewards: Sequence[float]) -> ServerRecord:
    total = float(np.sum(rewards))
    return ServerRecord(observed_test_loss, total, -observed_test_loss - total)


def bound_server_payoff(D_prime, b: BoundInputs, costs: CostProfile, check_feasible: bool = True,
                        floor_form: str = CONSISTENT):
    """Server payoff surrogate: minus (loss bound under truthful play + minimum payments).

    ``D_prime`` may hold a batch of assignments with shape ``(..., N)``.
    """
    D_prime = np.asarray(D_prime, dtype=np.float64)
    if check_feasible:
        floor = min_feasible_D(b.sigma_sq, costs.c_l, b.p, b.H, b.beta, costs.c_p, b.T, floor_form)
        if np.any(D_prime < floor * (1 - 1e-12)):
            raise InfeasibleError("assignment violates the labeling floor")
    payments = np.sum(costs.c_l + b.T * costs.c_p * D_prime, axis=-1)
    out = -(truthful_bound(b, D_prime) + payments)
    return float(out) if np.ndim(out) == 0 else out


def optimal_D(costs: CostProfile, b: BoundInputs, form: str = "stationary",
              floor_form: str = CONSISTENT) -> np.ndarray:
    """Real-valued maximizer of :func:`bound_server_payoff` subject to the floor.

    ``form="stationary"`` is the root of the derivative of the separable
    objective, ``sqrt(A sigma^2 p (p + 2(H-1)^2) / (c_p T))``; ``"printed"``
    is ``sqrt(A (p^2 sigma^2 + 2 p (H-1)^2) / (c_p T))``; the two agree when
    ``H = 1`` or ``sigma^2 = 1``.
    """
    A = geometric_A(b.L, b.mu, b.eta, b.T, b.H)
    p, s2 = b.p, b.sigma_sq
    if form == "stationary":
        interior = np.sqrt(A * s2 * p * (p + _drift(b.H)) / (costs.c_p * b.T))
    elif form == "printed":
        interior = np.sqrt(A * (p**2 * s2 + _drift(b.H) * p) / (costs.c_p * b.T))
    else:
        raise ValueError(f"unknown optimum form {form!r}")
    floor = min_feasible_D(s2, costs.c_l, p, b.H, b.beta, costs.c_p, b.T, floor_form)
    return np.maximum(interior, floor)


def optimal_assignment(costs: CostProfile, b: BoundInputs, form: str = "stationary",
                       floor_form: str = CONSISTENT, baseline: float = 0.0) -> Assignment:
    """Server-optimal assignment; batch sizes are rounded up to integers."""
    D_star = optimal_D(costs, b, form, floor_form)
    D_int = np.maximum(np.ceil(D_star - 1e-9 * D_star), 1.0)
    return make_assignment(D_int, costs, b, baseline=baseline, floor_form=floor_form, D_star=D_star)


@dataclass(frozen=True)
class ClientCheck:
    client: int
    truthful_value: float
    worst_value: float
    worst_deviation: tuple  # (e, D, gamma)
    passed: bool


@dataclass(frozen=True)
class Certificate:
    kind: str
    passed: bool
    clients: tuple
    tol: float

    def lines(self) -> list[str]:
        out = [f"certificate: {self.kind}", f"result: {'pass' if self.passed else 'fail'}", f"tolerance: {self.tol:g}"]
        for c in self.clients:
            e, D, g = c.worst_deviation
            out.append(f"client {c.client}: {'pass' if c.passed else 'fail'} truthful={c.truthful_value:.17g} "
                       f"worst={c.worst_value:.17g} at e={e} D={D:g} gamma={g:g}")
        return out


DEFAULT_GAMMAS = tuple(np.round(np.arange(0, 2.0001, 0.25), 10))


def verify_truthfulness(assignment: Assignment, b: BoundInputs, costs: CostProfile,
                        gammas: Sequence[float] = DEFAULT_GAMMAS, D_cap=None,
                        tol: float = 1e-9) -> Certificate:
    """Exhaustive best-response check of the truthful strategy for every client.

    Each client's deviations span ``e in {0, 1}``, ``gamma in gammas`` and
    ``D in 1..D_cap`` (default ``2 * D'_i``). The certificate passes when the
    truthful payoff is zero and no deviation earns more than ``tol``.
    """
    if 1.0 not in set(float(g) for g in gammas):
        gammas = tuple(gammas) + (1.0,)
    checks = []
    for i in range(b.n_clients):
        Dp = assignment.D_prime[i]
        cap = int(math.ceil(2 * Dp)) if D_cap is None else int(D_cap)
        e, D, g = np.meshgrid([0, 1], np.arange(1, cap + 1), np.asarray(gammas, dtype=np.float64), indexing="ij")
        values = _payoff_hat(i, e, D, g, assignment, b, costs)
        truthful = (e == 1) & (D == Dp) & (g == 1.0)
        values = np.where(truthful, -np.inf, values)
        k = int(np.argmax(values))
        worst = float(values.flat[k])
        t_val = float(_payoff_hat(i, 1, Dp, 1.0, assignment, b, costs))
        ok = abs(t_val) <= tol and worst <= tol
        checks.append(ClientCheck(i, t_val, worst, (int(e.flat[k]), float(D.flat[k]), float(g.flat[k])), ok))
    return Certificate("truthfulness", all(c.passed for c in checks), tuple(checks), tol)


def verify_IR(assignment: Assignment, b: BoundInputs, costs: CostProfile, tol: float = 1e-9) -> Certificate:
    checks = []
    for i in range(b.n_clients):
        Dp = assignment.D_prime[i]
        v = float(_payoff_hat(i, 1, Dp, 1.0, assignment, b, costs))
        checks.append(ClientCheck(i, v, v, (1, float(Dp), 1.0), v >= -tol))
    return Certificate("individual_rationality", all(c.passed for c in checks), tuple(checks), tol)
