"""
Choosing batch sizes as the server
==================================

Clients with cheap computation should be asked for larger batches. The
optimal assignment is compared with a uniform split of the same budget
and with a flat batch size of 100.
"""

from pathlib import Path

import numpy as np

from fedelicit import bound_server_payoff, load_spec
from fedelicit.mechanism import optimal_D
from fedelicit.scenarios import prepare

spec = load_spec(Path(__file__).resolve().parent.parent / "configs" / "server_payoff.spec")
s = prepare(spec, spec.data_seed)
b, costs = s.bound, s.costs

D_star = optimal_D(costs, b)
print("c_p:   ", costs.c_p)
print("D*:    ", np.round(D_star, 1))
uniform = np.full(b.n_clients, D_star.sum() / b.n_clients)
for name, D in (("optimal", D_star), ("uniform", uniform), ("all 100", np.full(b.n_clients, 100.0))):
    print(f"{name:8s} surrogate server payoff {bound_server_payoff(D, b, costs):10.4f}")

# scaling everyone's batch size by a common factor
for k in (0.25, 0.5, 1.0, 2.0, 4.0):
    print(f"x{k:<5} {bound_server_payoff(D_star * k, b, costs, check_feasible=False):10.4f}")
