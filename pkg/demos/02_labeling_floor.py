"""
The labeling floor
==================

Careful labeling costs c_l. The reward only compensates for it when the
assigned batch size is large enough for mislabeled data to visibly hurt the
loss bound. Below that floor, skipping the labeling work pays.
"""

import numpy as np

from fedelicit import (
    BoundInputs,
    CostProfile,
    make_assignment,
    min_feasible_D,
    payoff_hat,
)
from fedelicit.sim import ClientStrategy

b = BoundInputs(L=1.0, mu=0.5, eta=0.4, T=20, H=2, beta=1.5, G_sq=0.7, init_dist_sq=2.0,
                p=[0.5, 0.5], sigma_sq=[2.0, 1.0], d=[0.05, 0.02])
costs = CostProfile(c_l=5.0, c_p=[0.01, 0.01])
floor = min_feasible_D(b.sigma_sq, costs.c_l, b.p, b.H, b.beta, costs.c_p, b.T)
print("floor per client:", np.round(floor, 3))

print("\n D'   payoff(e=1)  payoff(e=0)")
for Dp in (0.25, 0.5, 0.75, 1.0, 1.5, 2.0):
    D = np.maximum(np.round(floor * Dp), 1.0)
    a = make_assignment(D, costs, b, enforce_floor=False)
    d0 = int(D[0])
    good = payoff_hat(0, ClientStrategy(1, d0, 1.0), a, b, costs)
    lazy = payoff_hat(0, ClientStrategy(0, d0, 1.0), a, b, costs)
    flag = "  <- skipping pays" if lazy > good else ""
    print(f"{d0:4d}   {good:10.4g}   {lazy:10.4g}{flag}")
