"""
How much noise helps a 40-site chain?

A quantum starts spread evenly over an open chain and leaves through the
last site at rate Gamma = 3J. Without noise, slow momentum components
near the band edges linger; with a lot of noise the walk becomes
diffusive. In between lies an optimum, found here by minimising the
average dwelling time over the classical-hopping noise level p.

Run with ``python demos/optimal_noise.py``.
"""

import numpy as np

from qtransport import ModelSpec, build, dwelling_time, propagate, scan_optimal_p

model = ModelSpec(build("chain", 40, "end"), Gamma=3.0)

print("remaining population P(t) for a few noise levels")
t = [0.0, 50.0, 100.0, 200.0, 400.0]
for p in (0.0, 0.01, 0.03, 0.1, 0.5, 1.0):
    P = propagate(model.with_p(p), "uniform", t[-1], t_eval=t, store_states=False).P
    print(f"  p = {p:<5} " + "  ".join(f"{v:8.5f}" for v in P))

res = scan_optimal_p(model, tol=1e-6)
print(f"\noptimal noise p_opt = {res.p_opt:.5f} with dwelling time {res.tbar_opt:.2f} / J")
for p in (0.0, res.p_opt, 1.0):
    print(f"  tbar(p = {p:.4f}) = {dwelling_time(model.with_p(p)):9.2f}")

# the dwelling time is flat near the optimum: a factor of two in p costs little
ratio = dwelling_time(model.with_p(2 * res.p_opt)) / res.tbar_opt
print(f"doubling p from the optimum raises tbar by {100 * (ratio - 1):.1f}%")
