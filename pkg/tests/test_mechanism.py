import numpy as np
import pytest
from conftest import random_setting
from hypothesis import given, settings
from hypothesis import strategies as st

from fedelicit.bound import BoundInputs, geometric_A, loss_bound
from fedelicit.mechanism import (
    PRINTED,
    Assignment,
    CostProfile,
    InfeasibleError,
    bound_server_payoff,
    make_assignment,
    min_feasible_D,
    omega,
    optimal_assignment,
    optimal_D,
    payoff_hat,
    phi,
    realized_payoff,
    reward,
    server_payoff,
    verify_IR,
    verify_truthfulness,
)
from fedelicit.sim import ClientStrategy


def payoff_via_bound(i, strategy, assignment, b, costs):
    """Omega_i - Phi_i * bound(deviation, others truthful) + c_l - costs."""
    strategies = assignment.truthful()
    strategies[i] = strategy
    return (assignment.omega[i] - assignment.phi[i] * loss_bound(b, strategies) + costs.c_l
            - costs.c_l * strategy.e - b.T * costs.c_p[i] * strategy.D)


class TestPhi:
    def test_hand_values(self):
        assert phi(10, 0.01, 100, 2.0, 1.0, 0.1, 1) == pytest.approx(5000.0, rel=1e-14)
        assert phi(4, 1.0, 1, 1.0, 1.0, 0.5, 2) == pytest.approx(12.8, rel=1e-14)

    def test_quadratic(self):
        assert phi(20, 0.3, 7, 0.5, 2.0, 0.2, 3) == pytest.approx(4 * phi(10, 0.3, 7, 0.5, 2.0, 0.2, 3), rel=1e-14)

    def test_zero_division(self):
        with pytest.raises(ZeroDivisionError):
            phi(10, 1.0, 1, 1.0, 0.0, 0.5, 1)
        with pytest.raises(ZeroDivisionError):
            phi(10, 1.0, 1, 1.0, 1.0, 0.0, 1)


class TestMinFeasible:
    def test_hand_value(self):
        assert min_feasible_D(1.0, 1.0, 1.0, 1, 1.0, 1.0, 1) == 1.0
        assert min_feasible_D(1.0, 1.0, 1.0, 1, 1.0, 1.0, 1, form=PRINTED) == 1.0

    def test_costless_labeling(self):
        assert min_feasible_D(3.0, 0.0, 0.3, 2, 1.0, 1.0, 5) == 0.0

    def test_h1_reduction(self):
        s2, c_l, p, beta, c_p, T = 4.0, 0.7, 0.3, 2.0, 0.01, 50
        sigma = np.sqrt(s2)
        assert min_feasible_D(s2, c_l, p, 1, beta, c_p, T, form=PRINTED) == pytest.approx(
            sigma * p * np.sqrt(c_l / (beta * c_p * T)), rel=1e-14)
        assert min_feasible_D(s2, c_l, p, 1, beta, c_p, T) == pytest.approx(
            sigma * np.sqrt(p * c_l / (beta * c_p * T)), rel=1e-14)

    def test_zero_beta(self):
        with pytest.raises(InfeasibleError):
            min_feasible_D(1.0, 1.0, 1.0, 1, 0.0, 1.0, 1)


def small_setting():
    b = BoundInputs(L=1.0, mu=0.5, eta=0.4, T=3, H=2, beta=1.5, G_sq=0.7, init_dist_sq=2.0,
                    p=[0.3, 0.7], sigma_sq=[2.0, 1.0], d=[0.05, 0.02])
    costs = CostProfile(0.2, [0.01, 0.02])
    return b, costs


class TestOmega:
    def test_single_client_hand_value(self):
        b = BoundInputs(L=1.0, mu=1.0, eta=0.1, T=4, H=1, beta=1.0, G_sq=3.0, init_dist_sq=0.0,
                        p=[1.0], sigma_sq=[2.0], d=[0.0])
        costs = CostProfile(0.1, [0.5])
        # Phi A p^2 sigma^2 / D' = D' c_p T, so Omega = 2 T c_p D'
        assert omega([6.0], costs, b)[0] == pytest.approx(2 * 4 * 0.5 * 6.0, rel=1e-13)

    def test_symbolic(self):
        b, costs = small_setting()
        Dp = np.array([5.0, 8.0])
        A = geometric_A(1.0, 0.5, 0.4, 3, 2)
        ph = Dp**2 * costs.c_p * 3 / (A * b.sigma_sq * b.p * (b.p + 2))
        inner = sum(6 * 1.0 * b.p[j] * b.d[j] + b.p[j] ** 2 * b.sigma_sq[j] / Dp[j]
                    + 2 * b.p[j] * (0.7 + b.sigma_sq[j] / Dp[j]) for j in range(2))
        expected = ph * (1.0 * 0.8**6 * 2.0 + A * inner) + 3 * costs.c_p * Dp
        np.testing.assert_allclose(omega(Dp, costs, b), expected, rtol=1e-13)

    def test_matches_bound_route(self, rng):
        for _ in range(20):
            b, costs = random_setting(rng)
            Dp = rng.uniform(1, 100, b.n_clients)
            A = geometric_A(b.L, b.mu, b.eta, b.T, b.H)
            ph = phi(Dp, costs.c_p, b.T, A, b.sigma_sq, b.p, b.H)
            via_bound = ph * loss_bound(b, [ClientStrategy(1, D, 1.0) for D in Dp]) + b.T * costs.c_p * Dp
            np.testing.assert_allclose(omega(Dp, costs, b), via_bound, rtol=1e-12)

    def test_increasing_in_init_distance(self):
        b, costs = small_setting()
        lo = omega([5.0, 8.0], costs, b)
        b2 = BoundInputs(**{**b.__dict__, "init_dist_sq": 3.0})
        assert np.all(omega([5.0, 8.0], costs, b2) > lo)


class TestReward:
    def test_zero_loss(self):
        b, costs = small_setting()
        a = make_assignment([20.0, 30.0], costs, b)
        assert reward(0, a, 0.0, costs) == pytest.approx(a.omega[0] + costs.c_l, rel=1e-15)

    def test_zero_crossing(self):
        b, costs = small_setting()
        a = make_assignment([20.0, 30.0], costs, b)
        loss = (a.omega[1] + costs.c_l) / a.phi[1]
        assert reward(1, a, loss, costs) == pytest.approx(0.0, abs=1e-9 * a.omega[1])

    def test_baseline(self):
        b, costs = small_setting()
        a = make_assignment([20.0, 30.0], costs, b, baseline=0.25)
        assert reward(0, a, 0.75, costs) == pytest.approx(a.omega[0] - a.phi[0] * 0.5 + costs.c_l, rel=1e-14)


class TestPayoffHat:
    def test_truthful_zero(self, rng):
        for _ in range(100):
            b, costs = random_setting(rng)
            a = optimal_assignment(costs, b)
            for i in range(b.n_clients):
                assert payoff_hat(i, ClientStrategy(1, a.D_prime[i], 1.0), a, b, costs) == 0.0

    def test_tight_at_floor(self):
        b, costs = small_setting()
        floor = min_feasible_D(b.sigma_sq, costs.c_l, b.p, b.H, b.beta, costs.c_p, b.T)
        a = make_assignment(floor, costs, b)
        for i in range(2):
            v = payoff_hat(i, ClientStrategy(0, a.D_prime[i], 1.0), a, b, costs)
            assert v == pytest.approx(0.0, abs=1e-12)

    def test_gamma_penalty_hand_value(self):
        b = BoundInputs(L=0.5, mu=0.5, eta=1.0, T=1, H=1, beta=1.0, G_sq=1.0, init_dist_sq=0.0,
                        p=[1.0], sigma_sq=[1.0], d=[0.0])
        costs = CostProfile(0.0, [1.0])
        a = Assignment(D_prime=np.array([1.0]), A=1.0, phi=np.array([1.0]), omega=np.array([0.0]),
                       floor=np.array([0.0]))
        assert payoff_hat(0, ClientStrategy(1, 1, 2.0), a, b, costs) == pytest.approx(-4.0, rel=1e-15)

    def test_matches_bound_route(self, rng):
        for _ in range(30):
            b, costs = random_setting(rng)
            a = optimal_assignment(costs, b)
            i = int(rng.integers(0, b.n_clients))
            s = ClientStrategy(int(rng.integers(0, 2)), int(rng.integers(1, 2 * a.D_prime[i] + 2)),
                               float(rng.uniform(0, 2)))
            direct = payoff_hat(i, s, a, b, costs)
            oracle = payoff_via_bound(i, s, a, b, costs)
            scale = max(1.0, abs(a.omega[i]))
            assert direct == pytest.approx(oracle, abs=1e-9 * scale)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_effort_identity(self, seed):
        rng = np.random.default_rng(seed)
        b, costs = random_setting(rng)
        a = optimal_assignment(costs, b)
        i = int(rng.integers(0, b.n_clients))
        D = float(rng.integers(1, 3 * a.D_prime[i] + 1))
        g = float(rng.uniform(0, 2))
        drift = 2 * (b.H - 1) ** 2
        closed = (a.D_prime[i] ** 2 * costs.c_p[i] * b.T * (1 + drift) * b.beta
                  / (b.sigma_sq[i] * (b.p[i] + drift)) - costs.c_l)
        diff = payoff_hat(i, ClientStrategy(1, D, 1.0), a, b, costs) - payoff_hat(i, ClientStrategy(0, D, 1.0), a, b, costs)
        assert diff == pytest.approx(closed, rel=1e-9, abs=1e-9)
        assert diff >= -1e-9
        # any gamma: effort still pays at least as much
        assert (payoff_hat(i, ClientStrategy(1, D, g), a, b, costs)
                >= payoff_hat(i, ClientStrategy(0, D, g), a, b, costs) - 1e-9)

    def test_gamma_argmax(self, rng):
        for _ in range(20):
            b, costs = random_setting(rng)
            a = optimal_assignment(costs, b)
            i = int(rng.integers(0, b.n_clients))
            D = float(rng.integers(1, 50))
            e = int(rng.integers(0, 2))
            grid = np.linspace(0, 2, 17)
            vals = [payoff_hat(i, ClientStrategy(e, D, g), a, b, costs) for g in grid]
            assert grid[int(np.argmax(vals))] == 1.0

    def test_batch_stationary_point(self, rng):
        for _ in range(20):
            b, costs = random_setting(rng)
            Dp = rng.uniform(5, 80, b.n_clients)
            a = make_assignment(Dp, costs, b, enforce_floor=False)
            i = int(rng.integers(0, b.n_clients))
            h = 1e-4 * Dp[i]

            def u(D):
                return payoff_hat(i, ClientStrategy(1, D, 1.0), a, b, costs)

            left = (u(Dp[i] - h) - u(Dp[i] - 2 * h)) / h
            right = (u(Dp[i] + 2 * h) - u(Dp[i] + h)) / h
            assert left > 0 > right
            grid = np.arange(1, int(2 * Dp[i]) + 1)
            best = grid[int(np.argmax([u(D) for D in grid]))]
            assert abs(best - Dp[i]) < 1.0


class TestSettlement:
    def test_zero_costs(self):
        b, costs = small_setting()
        free = CostProfile(0.0, [1e-12, 1e-12])
        a = make_assignment([20.0, 30.0], free, b)
        rec = realized_payoff(0, ClientStrategy(0, 1, 1.0), a, free, 0.3, b)
        assert rec.payoff == pytest.approx(rec.reward, abs=1e-9)

    def test_costs_only(self):
        b, costs = small_setting()
        a = make_assignment([20.0, 30.0], costs, b)
        loss = (a.omega[0] + costs.c_l) / a.phi[0]
        rec = realized_payoff(0, ClientStrategy(1, 7, 1.0), a, costs, loss, b)
        assert rec.payoff == pytest.approx(-costs.c_l - b.T * costs.c_p[0] * 7, abs=1e-9)

    def test_hand_case(self):
        b, costs = small_setting()
        a = make_assignment([20.0, 30.0], costs, b)
        s = ClientStrategy(1, 25, 1.5)
        rec = realized_payoff(1, s, a, costs, 0.4, b)
        r = a.omega[1] - a.phi[1] * 0.4 + 0.2
        assert rec.reward == pytest.approx(r, rel=1e-14)
        assert rec.comp_cost == pytest.approx(3 * 0.02 * 25, rel=1e-14)
        assert rec.payoff == pytest.approx(r - 0.2 - 1.5, rel=1e-13)
        assert rec.payoff_hat == payoff_hat(1, s, a, b, costs)

    def test_server(self):
        assert server_payoff(0.0, [1.0, 2.0]).payoff == -3.0
        assert server_payoff(0.0, [0.0, 0.0]).payoff == 0.0
        rec = server_payoff(0.5, [0.25, 1.5, 2.0])
        assert rec.payoff == -0.5 - 3.75 and rec.total_reward == 3.75

    def test_money_conservation(self, rng):
        for _ in range(20):
            b, costs = random_setting(rng)
            a = optimal_assignment(costs, b)
            strat = [ClientStrategy(int(rng.integers(0, 2)), int(rng.integers(1, 50)), float(rng.uniform(0, 2)))
                     for _ in range(b.n_clients)]
            loss = float(rng.uniform(0, 3))
            recs = [realized_payoff(i, s, a, costs, loss, b) for i, s in enumerate(strat)]
            server = server_payoff(loss, [r.reward for r in recs])
            total_costs = sum(costs.c_l * s.e + b.T * costs.c_p[i] * s.D for i, s in enumerate(strat))
            lhs = server.payoff + sum(r.payoff for r in recs)
            assert lhs == pytest.approx(-loss - total_costs, abs=1e-9 * max(1.0, server.total_reward))


class TestAssignment:
    def test_hand_value(self):
        # T = H = 1, L = 0.5, eta = 1 gives A = 1
        b = BoundInputs(L=0.5, mu=0.5, eta=1.0, T=1, H=1, beta=1.0, G_sq=0.0, init_dist_sq=0.0,
                        p=[1.0], sigma_sq=[1.0], d=[0.0])
        costs = CostProfile(1.0, [1.0])
        assert geometric_A(0.5, 0.5, 1.0, 1, 1) == 1.0
        assert optimal_D(costs, b)[0] == pytest.approx(1.0, rel=1e-15)
        a = optimal_assignment(costs, b)
        assert a.D_prime[0] == 1.0 and a.D_star[0] == pytest.approx(1.0)

    def test_floor_binds_for_expensive_labeling(self, rng):
        b, costs = random_setting(rng)
        pricey = CostProfile(1e6, costs.c_p)
        floor = min_feasible_D(b.sigma_sq, pricey.c_l, b.p, b.H, b.beta, pricey.c_p, b.T)
        np.testing.assert_allclose(optimal_D(pricey, b), floor, rtol=1e-15)

    def test_printed_form(self):
        b, costs = small_setting()
        A = geometric_A(b.L, b.mu, b.eta, b.T, b.H)
        printed = np.sqrt(A * (b.p**2 * b.sigma_sq + 2 * b.p) / (costs.c_p * b.T))
        floor = min_feasible_D(b.sigma_sq, costs.c_l, b.p, b.H, b.beta, costs.c_p, b.T)
        np.testing.assert_allclose(optimal_D(costs, b, form="printed"), np.maximum(printed, floor), rtol=1e-14)

    def test_grid_search(self, rng):
        for _ in range(10):
            b, costs = random_setting(rng)
            D_star = optimal_D(costs, b)
            floor = min_feasible_D(b.sigma_sq, costs.c_l, b.p, b.H, b.beta, costs.c_p, b.T)
            base = bound_server_payoff(D_star, b, costs)
            for i in range(b.n_clients):
                for f in (1 - 1e-3, 1 + 1e-3, 0.5, 2.0):
                    D = D_star.copy()
                    D[i] *= f
                    if D[i] < floor[i]:
                        continue
                    assert bound_server_payoff(D, b, costs) <= base + 1e-12 * abs(base)

    def test_objective_shape(self):
        b, costs = small_setting()
        costs = CostProfile(0.0, costs.c_p)
        D_star = optimal_D(costs, b)
        best = bound_server_payoff(D_star, b, costs)
        assert bound_server_payoff(D_star * 0.2, b, costs) < best
        assert bound_server_payoff(D_star * 20, b, costs) < best
        # the payment part is linear in D'
        v = [bound_server_payoff(D_star * k, b, costs) + loss_bound(b, [ClientStrategy(1, D, 1.0) for D in D_star * k])
             for k in (1.0, 2.0, 3.0)]
        assert v[2] - v[1] == pytest.approx(v[1] - v[0], rel=1e-12)

    def test_batch_matches_scalar(self, rng):
        b, costs = random_setting(rng)
        D = optimal_D(costs, b) * rng.uniform(1.0, 3.0, (4, 3, b.n_clients))
        batch = bound_server_payoff(D, b, costs)
        assert batch.shape == (4, 3)
        for idx in np.ndindex(4, 3):
            assert batch[idx] == pytest.approx(bound_server_payoff(D[idx], b, costs), rel=1e-14)

    def test_infeasible(self):
        b, costs = small_setting()
        floor = min_feasible_D(b.sigma_sq, costs.c_l, b.p, b.H, b.beta, costs.c_p, b.T)
        with pytest.raises(InfeasibleError):
            bound_server_payoff(floor * 0.5, b, costs)
        with pytest.raises(InfeasibleError):
            make_assignment(floor * 0.5, costs, b)


class TestCertificates:
    def test_feasible_passes(self, rng):
        for _ in range(10):
            b, costs = random_setting(rng)
            a = optimal_assignment(costs, b)
            cert = verify_truthfulness(a, b, costs)
            assert cert.passed, "\n".join(cert.lines())
            assert verify_IR(a, b, costs).passed

    def test_half_floor_fails_on_effort(self):
        b, costs = small_setting()
        costs = CostProfile(50.0, costs.c_p)
        a = optimal_assignment(costs, b)
        Dp = a.D_prime.copy()
        Dp[0] = np.floor(0.5 * a.floor[0])
        bad = make_assignment(Dp, costs, b, enforce_floor=False)
        cert = verify_truthfulness(bad, b, costs)
        assert not cert.passed
        worst = cert.clients[0]
        assert worst.worst_deviation[0] == 0 and worst.worst_value > 0
        assert cert.clients[1].passed

    def test_single_client_hand_values(self):
        b = BoundInputs(L=0.5, mu=0.5, eta=1.0, T=1, H=1, beta=1.0, G_sq=1.0, init_dist_sq=0.0,
                        p=[1.0], sigma_sq=[1.0], d=[0.0])
        costs = CostProfile(0.5, [1.0])
        a = make_assignment([2.0], costs, b)
        # Phi A = D'^2 c_p T / (sigma^2 p^2) = 4
        cert = verify_truthfulness(a, b, costs, gammas=(1.0,), D_cap=4)
        # best deviation is e=1, D=1 or D=3: 4 * (1/2 - 1) + (2 - 1) = -1 ; 4 * (1/2 - 1/3) - 1 = -1/3
        assert cert.passed
        assert cert.clients[0].worst_value == pytest.approx(-1 / 3, rel=1e-14)
        assert cert.clients[0].worst_deviation == (1, 3.0, 1.0)
        # e = 0 at D' = 2: 4 * (-1) + 0.5 = -3.5
        assert payoff_hat(0, ClientStrategy(0, 2, 1.0), a, b, costs) == pytest.approx(-3.5, rel=1e-15)

    def test_ir_values(self, rng):
        for _ in range(10):
            b, costs = random_setting(rng)
            cert = verify_IR(optimal_assignment(costs, b), b, costs)
            assert cert.passed
            assert all(abs(c.truthful_value) <= 1e-12 for c in cert.clients)
