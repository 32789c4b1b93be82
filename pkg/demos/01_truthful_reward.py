"""
Why truthful play is a best response
====================================

Five ridge-regression clients, constants estimated exactly from their data.
The server assigns batch sizes, and we tabulate one client's approximated
payoff for every deviation it could try.
"""

from pathlib import Path

import numpy as np

from fedelicit import load_spec, payoff_hat, verify_truthfulness
from fedelicit.scenarios import prepare
from fedelicit.sim import ClientStrategy

spec = load_spec(Path(__file__).resolve().parent.parent / "configs" / "verify.spec")
setting = prepare(spec, 0)
a, b, costs = setting.assignment, setting.bound, setting.costs

print("assigned batch sizes:", a.D_prime.astype(int))
print("labeling floor:      ", np.round(a.floor, 3))

# client 0, everyone else truthful
Dp = int(a.D_prime[0])
print(f"\nclient 0 payoff (assigned D'={Dp})")
print("        " + "".join(f"D={D:<9d}" for D in (1, Dp // 2, Dp, 2 * Dp)))
for e in (1, 0):
    for g in (0.5, 1.0, 1.5):
        row = [payoff_hat(0, ClientStrategy(e, D, g), a, b, costs) for D in (1, Dp // 2, Dp, 2 * Dp)]
        print(f"e={e} g={g:<3}" + "".join(f"{v:<11.4g}" for v in row))

# exhaustive check over e, D in 1..2D' and gamma in 0..2
cert = verify_truthfulness(a, b, costs)
print()
print("\n".join(cert.lines()))
