"""Experiment scenarios: assign, label, train, test and settle, once per seed.

Every scenario evaluates one or more *variants* (a strategy profile and an
assignment) on the same data and the same per-seed random streams, so
variants are paired by seed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bound import BoundInputs, loss_bound
from .config import ConfigError, ExperimentSpec
from .data import FederatedData, build_data
from .labeling import apply_labeling, compute_beta_analytic
from .mechanism import (
    Assignment,
    Certificate,
    CostProfile,
    bound_server_payoff,
    make_assignment,
    optimal_assignment,
    realized_payoff,
    server_payoff,
    verify_IR,
    verify_truthfulness,
)
from .model import LossModel, estimate_constants, global_loss, minimize
from .sim import (
    ClientProfile,
    ClientStrategy,
    TrainConfig,
    client_rng,
    estimate_G_sq,
    estimate_het,
    estimate_sigma,
    run_training,
    test_loss,
)

# stream tags; training uses rounds 1..T of the same (seed, client) family
_DATA_TAG = 0x0DA7A
_PILOT_TAG = 0x9170


@dataclass
class Setting:
    """Data and every constant the mechanism needs, derived once per data draw."""

    model: LossModel
    data: FederatedData
    profiles: list[ClientProfile]
    p: np.ndarray
    eta: float
    w0: np.ndarray
    w_star: np.ndarray
    f_star: float
    probes: list[np.ndarray]
    bound: BoundInputs
    costs: CostProfile
    assignment: Assignment

    @property
    def n_clients(self) -> int:
        return len(self.profiles)


@dataclass(frozen=True)
class Variant:
    name: str
    strategies: tuple[ClientStrategy, ...]
    assignment: Assignment | None = None


@dataclass
class SeedRun:
    variant: str
    seed: int
    strategies: tuple[ClientStrategy, ...]
    train_loss: list[float]
    test_loss: list[float]
    accuracy: list[float]
    observed_test_loss: float
    excess_loss: float
    payoffs: list
    server: object
    bound: float
    corrupted: list = field(default_factory=list, repr=False)


@dataclass
class ScenarioResult:
    spec: ExperimentSpec
    runs: list[SeedRun]
    summary: list[str]
    certificates: list[Certificate] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.certificates)

    def by_variant(self) -> dict[str, list[SeedRun]]:
        out: dict[str, list[SeedRun]] = {}
        for r in self.runs:
            out.setdefault(r.variant, []).append(r)
        return out


def _data_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([_DATA_TAG, seed & (2**64 - 1)]))


def prepare(spec: ExperimentSpec, seed: int) -> Setting:
    """Build data, estimate the bound constants and compute the optimal assignment.

    The probe set for ``sigma_i^2`` and ``G^2`` is ``w0``, ``w*`` and every
    iterate of a truthful pilot run with batch size ``pilot_D``.
    """
    data = build_data(spec, _data_rng(seed))
    model = LossModel(spec.model, spec.l2)
    sizes = np.array([len(ds) for ds in data.clients], dtype=np.float64)
    p = sizes / sizes.sum()
    c_p = np.array(spec.cost_vector())
    profiles = [ClientProfile(float(pi), float(ci), ds) for pi, ci, ds in zip(p, c_p, data.clients)]
    L, mu = estimate_constants(model, data.clients, p)
    eta = spec.eta if spec.eta > 0 else 1.0 / (2.0 * L)
    w0 = np.zeros(model.n_params(data.clients[0].feature_dim, data.clients[0].num_classes))
    w_star = minimize(model, data.clients, p)
    f_star = global_loss(model, w_star, data.clients, p)
    d = estimate_het(model, profiles, w_star)

    pilot_D = min(spec.pilot_D, int(sizes.min()))
    pilot = run_training(model, TrainConfig(eta, spec.T, spec.H, _PILOT_TAG ^ seed, w0), profiles,
                         [ClientStrategy(1, pilot_D, 1.0)] * len(profiles), f_star=f_star,
                         record_iterates=True)
    probes = [w0, w_star, *pilot.iterates]
    sigma_sq = np.array([estimate_sigma(model, pr, probes) for pr in profiles])
    G_sq = estimate_G_sq(model, profiles, probes)
    x_max = max(ds.x_max for ds in data.clients)
    y_max = 0.0 if spec.model == "logistic" else max(ds.y_max for ds in data.clients)
    beta = compute_beta_analytic(model, x_max, y_max, data.clients[0].num_classes).value
    b = BoundInputs(L=L, mu=mu, eta=eta, T=spec.T, H=spec.H, beta=beta, G_sq=G_sq,
                    init_dist_sq=float(np.sum((w0 - w_star) ** 2)), p=p, sigma_sq=sigma_sq, d=d)
    try:
        b.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    costs = CostProfile(spec.c_l, c_p)
    if spec.assign_D > 0:
        assignment = make_assignment(np.full(len(p), float(spec.assign_D)), costs, b, enforce_floor=False)
    else:
        assignment = optimal_assignment(costs, b)
    _check_fits(assignment.D_prime, sizes)
    return Setting(model, data, profiles, p, eta, w0, w_star, f_star, probes, b, costs, assignment)


def _check_fits(D_prime, sizes) -> None:
    over = np.flatnonzero(np.asarray(D_prime) > sizes)
    if over.size:
        i = int(over[0])
        raise ConfigError(f"assigned batch size {D_prime[i]:g} for client {i} exceeds its {int(sizes[i])} samples; "
                          "raise c_p or samples_per_client")


def _apply_overrides(spec: ExperimentSpec, strategies) -> tuple[ClientStrategy, ...]:
    out = list(strategies)
    for i, ov in spec.overrides.items():
        s = out[i]
        out[i] = ClientStrategy(ov.get("e", s.e), ov.get("D", s.D), ov.get("gamma", s.gamma))
    return tuple(out)


def simulate(spec: ExperimentSpec, setting: Setting, variant: Variant, seed: int, workers: int = 1) -> SeedRun:
    """Label, train, test and settle one variant for one seed."""
    a = variant.assignment or setting.assignment
    strategies = variant.strategies
    _check_fits([s.D for s in strategies], np.array([len(pr.dataset) for pr in setting.profiles]))
    profiles, corrupted = [], []
    for i, (pr, s) in enumerate(zip(setting.profiles, strategies)):
        ds = apply_labeling(pr.clean_dataset, s.e, client_rng(seed, i, 0))
        profiles.append(ClientProfile(pr.weight, pr.comp_cost, ds, clean_dataset=pr.clean_dataset))
        if s.e == 0:
            corrupted.append((i, ds))
    cfg = TrainConfig(setting.eta, spec.T, spec.H, seed, setting.w0)
    res = run_training(setting.model, cfg, profiles, list(strategies), test_ds=setting.data.test,
                       f_star=setting.f_star, workers=workers)
    server_rng = client_rng(seed, setting.n_clients, spec.T + 1)
    observed = test_loss(setting.model, res.w_final, setting.data.test, spec.test_mode, server_rng)
    b = setting.bound
    records = [realized_payoff(i, s, a, setting.costs, observed, b) for i, s in enumerate(strategies)]
    server = server_payoff(observed, [r.reward for r in records])
    return SeedRun(variant.name, seed, tuple(strategies), res.loss_per_round, res.test_loss_per_round,
                   res.accuracy_per_round, observed, res.excess_loss, records, server,
                   loss_bound(b, list(strategies)), corrupted)


def _uniform_D(total: int, n: int) -> np.ndarray:
    base, extra = divmod(int(total), n)
    return np.array([base + (1 if i < extra else 0) for i in range(n)], dtype=np.float64)


def build_variants(spec: ExperimentSpec, setting: Setting) -> list[Variant]:
    N = setting.n_clients
    a = setting.assignment
    truthful = _apply_overrides(spec, a.truthful())
    if spec.scenario in ("verify", "bound_check"):
        return [Variant("truthful" if not spec.overrides else "override", truthful)]

    if spec.scenario == "effort_sweep":
        out = []
        for D in spec.sweep_D:
            out.append(Variant(f"D{D}", _apply_overrides(spec, [ClientStrategy(1, D, 1.0)] * N)))
        k, D = spec.no_effort_clients, spec.sweep_D[-1]
        if k:
            lazy = [ClientStrategy(0 if i < k else 1, D, 1.0) for i in range(N)]
            out.append(Variant(f"D{D}_no_effort{k}", _apply_overrides(spec, lazy)))
        return out

    if spec.scenario == "gamma_sweep":
        movers = set(spec.gamma_clients) if spec.gamma_clients else set(range(N))
        out = []
        for g in spec.sweep_gamma:
            strat = [ClientStrategy(s.e, s.D, float(g)) if i in movers else s for i, s in enumerate(truthful)]
            out.append(Variant(f"gamma{g:g}", tuple(strat)))
        return out

    if spec.scenario == "client_payoff":
        i = spec.deviator
        D_prime = a.D_prime.copy()
        D_prime[i] = spec.deviator_D_prime
        dev_a = make_assignment(D_prime, setting.costs, setting.bound)
        _check_fits(D_prime, np.array([len(pr.dataset) for pr in setting.profiles]))
        base = list(dev_a.truthful())
        Dp = int(D_prime[i])

        def move(tag, s):
            strat = list(base)
            strat[i] = s
            return Variant(tag, tuple(strat), dev_a)

        out = [move("truthful", ClientStrategy(1, Dp, 1.0)), move("e0", ClientStrategy(0, Dp, 1.0))]
        out += [move(f"gamma{g:g}", ClientStrategy(1, Dp, float(g))) for g in (0.0, 0.5, 1.5, 2.0)]
        out += [move(f"D{D}", ClientStrategy(1, int(D), 1.0)) for D in spec.sweep_D if D != Dp]
        return out

    if spec.scenario == "server_payoff":
        D_opt = a.D_prime
        out = [Variant("optimal", a.truthful(), a)]
        for tag, D in (("uniform", _uniform_D(D_opt.sum(), N)), (f"all{spec.compare_D}", np.full(N, float(spec.compare_D)))):
            alt = make_assignment(D, setting.costs, setting.bound, enforce_floor=False)
            out.append(Variant(tag, tuple(alt.truthful()), alt))
        return out
    raise ConfigError(f"unknown scenario {spec.scenario!r}")


def _summary(spec: ExperimentSpec, settings: dict[int, Setting], runs: list[SeedRun],
             variants: dict[str, Variant]) -> list[str]:
    first = settings[min(settings)]
    b = first.bound
    out = [f"scenario: {spec.scenario}", f"model: {spec.model}", f"data: {spec.data}",
           f"seeds: {','.join(str(s) for s in spec.seeds)}",
           f"L: {b.L:.17g}", f"mu: {b.mu:.17g}", f"eta: {b.eta:.17g}", f"T: {b.T}", f"H: {b.H}",
           f"beta: {b.beta:.17g}", f"G_sq: {b.G_sq:.17g}", f"A: {first.assignment.A:.17g}",
           "D_prime: " + ",".join(f"{D:g}" for D in first.assignment.D_prime),
           "floor: " + ",".join(f"{x:.17g}" for x in first.assignment.floor)]
    grouped: dict[str, list[SeedRun]] = {}
    for r in runs:
        grouped.setdefault(r.variant, []).append(r)
    for name, rs in grouped.items():
        mean = lambda xs: float(np.mean(xs))
        line = (f"variant {name}: final_train_loss={mean([r.train_loss[-1] for r in rs]):.17g} "
                f"excess_loss={mean([r.excess_loss for r in rs]):.17g} "
                f"test_loss={mean([r.observed_test_loss for r in rs]):.17g} "
                f"accuracy={mean([r.accuracy[-1] for r in rs]):.17g} "
                f"server_payoff={mean([r.server.payoff for r in rs]):.17g} "
                f"bound={mean([r.bound for r in rs]):.17g}")
        if spec.scenario == "server_payoff":
            a = variants[name].assignment
            line += f" bound_server_payoff={bound_server_payoff(a.D_prime, b, first.costs, check_feasible=False):.17g}"
        if spec.scenario == "client_payoff":
            i = spec.deviator
            line += (f" client{i}_payoff_hat={rs[0].payoffs[i].payoff_hat:.17g}"
                     f" client{i}_payoff={mean([r.payoffs[i].payoff for r in rs]):.17g}")
        out.append(line)
    return out


def run_scenario(spec: ExperimentSpec) -> ScenarioResult:
    """Run every variant for every seed; results are ordered by seed then variant."""
    spec.validate()
    shared = prepare(spec, spec.data_seed) if spec.data_seed >= 0 else None

    def one_seed(seed: int):
        setting = shared or prepare(spec, seed)
        variants = build_variants(spec, setting)
        return setting, variants, [simulate(spec, setting, v, seed) for v in variants]

    if spec.workers > 1 and len(spec.seeds) > 1:
        with ThreadPoolExecutor(spec.workers) as pool:
            outcomes = list(pool.map(one_seed, spec.seeds))
    else:
        outcomes = [one_seed(s) for s in spec.seeds]

    settings = {seed: o[0] for seed, o in zip(spec.seeds, outcomes)}
    runs = [r for o in outcomes for r in o[2]]
    variants = {v.name: v for v in outcomes[0][1]}
    certificates = []

    if spec.scenario == "bound_check":
        runs = _recheck_bound(spec, settings, runs)
    if spec.scenario == "verify":
        for seed, s in settings.items():
            certificates.append(verify_truthfulness(s.assignment, s.bound, s.costs))
            certificates.append(verify_IR(s.assignment, s.bound, s.costs))
            if shared is not None:
                break
    summary = _summary(spec, settings, runs, variants)
    if spec.scenario == "bound_check":
        ex = float(np.mean([r.excess_loss for r in runs]))
        bnd = max(r.bound for r in runs)
        summary.append(f"mean_excess_loss: {ex:.17g}")
        summary.append(f"loss_bound: {bnd:.17g}")
        summary.append(f"bound_holds: {'yes' if ex <= bnd else 'no'}")
    return ScenarioResult(spec, runs, summary, certificates)


def _recheck_bound(spec: ExperimentSpec, settings: dict[int, Setting], runs: list[SeedRun]) -> list[SeedRun]:
    """Recompute the bound with ``sigma_i^2`` also covering the relabeled datasets."""
    shared = spec.data_seed >= 0
    cache: dict = {}
    out = []
    for r in runs:
        key = None if shared else r.seed
        if key not in cache:
            s = settings[r.seed]
            sigma = s.bound.sigma_sq.copy()
            for q in runs:
                if shared or q.seed == r.seed:
                    for i, ds in q.corrupted:
                        probe = ClientProfile(s.p[i], s.costs.c_p[i], ds)
                        sigma[i] = max(sigma[i], estimate_sigma(s.model, probe, s.probes))
            cache[key] = replace(s.bound, sigma_sq=sigma)
        out.append(replace(r, bound=loss_bound(cache[key], list(r.strategies))))
    return out
