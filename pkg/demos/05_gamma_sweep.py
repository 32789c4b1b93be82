"""
Misreported updates
===================

Three of ten clients scale their update by gamma before reporting. Either
direction pulls the global model toward their own data and raises the loss.
If all ten clients scaled alike, gamma would only rescale the step size.
"""

from dataclasses import replace
from pathlib import Path

import numpy as np

from fedelicit import load_spec, run_scenario

spec = load_spec(Path(__file__).resolve().parent.parent / "configs" / "gamma_sweep.spec")
for label, clients in (("three clients", (0, 1, 2)), ("all clients", ())):
    res = run_scenario(replace(spec, gamma_clients=clients, seeds=tuple(range(5))))
    print(label)
    for name, runs in res.by_variant().items():
        print(f"  {name:10s} final loss {np.mean([r.train_loss[-1] for r in runs]):.5f}")
