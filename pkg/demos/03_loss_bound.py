"""
The loss bound against simulation
=================================

Ridge regression with five clients, one of which skips labeling and two
of which misreport their update. The mean excess loss over many seeds is
compared with the bound computed from the estimated constants.
"""

from dataclasses import replace
from pathlib import Path

import numpy as np

from fedelicit import load_spec, run_scenario

spec = load_spec(Path(__file__).resolve().parent.parent / "configs" / "bound_check.spec")
for T, H in ((10, 1), (50, 3)):
    res = run_scenario(replace(spec, T=T, H=H, seeds=tuple(range(30))))
    excess = np.array([r.excess_loss for r in res.runs])
    print(f"T={T:3d} H={H}: mean excess {excess.mean():.4g} (+/- {excess.std(ddof=1) / np.sqrt(len(excess)):.2g}), "
          f"bound {res.runs[0].bound:.4g}")
# the bound holds with a wide margin; it is a worst case over smooth, strongly convex losses
