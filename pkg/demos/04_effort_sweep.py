"""
Labeling and computation effort in training
===========================================

Ten logistic-regression clients with skewed class mixes. Larger batches
lower the final loss a little; two clients with random labels raise it a lot.
"""

from dataclasses import replace
from pathlib import Path

import numpy as np

from fedelicit import load_spec, run_scenario

spec = load_spec(Path(__file__).resolve().parent.parent / "configs" / "effort_sweep.spec")
res = run_scenario(replace(spec, seeds=tuple(range(5))))

print(f"{'variant':18s} {'final loss':>11s} {'accuracy':>9s}")
for name, runs in res.by_variant().items():
    loss = np.mean([r.train_loss[-1] for r in runs])
    acc = np.mean([r.accuracy[-1] for r in runs])
    print(f"{name:18s} {loss:11.5f} {acc:9.3f}")
