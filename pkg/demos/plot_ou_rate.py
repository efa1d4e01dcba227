"""
Convergence rate on a stationary Ornstein-Uhlenbeck model
=========================================================

With linear interaction ``b(x, mu) = -(x - mean(mu))`` and ``X_0 ~ N(3, 1/2)``
the law stays ``N(3, 1/2)`` for all time, which gives an exact reference for
the estimator error.  We measure the mean squared sup error ``E_N`` for a few
kernel orders and fit ``log2 E_N = -alpha log2 N + c``.
"""

# %%
import math

import numpy as np

from mkv import get_model, harness, particles

model = get_model("ou-linear")
ens = particles.simulate(particles.SimConfig(n_particles=4096, n_steps=100, horizon=1.0, seed=0), model)
print(f"mean {ens.positions.mean():.4f}  variance {ens.positions.var():.4f}")

# %%
# A desk-sized version of the rate study: the bandwidth is the rate rule
# ``N^(-1/(2(order+1)+1))`` and each ``N`` reuses the same replicate seeds.
n_values = [2**k for k in range(7, 13)]
rows = harness.mc_strong_error(model, n_values, [1, 3, 5], eval_grid=np.linspace(0, 6, 1000),
                               replicates=10, seed=0)
for order in (1, 3, 5):
    errs = [r["E_N"] for r in rows if r["order"] == order]
    fit = harness.fit_slope([(math.log2(n), math.log2(e)) for n, e in zip(n_values, errs)])
    shown = " ".join(f"{e:.2e}" for e in errs)
    print(f"order {order}: E_N = {shown}  alpha = {fit.alpha:.3f}")

# %%
# The same protocol at full scale is ``run_experiment("ou-rate")``; it writes
# JSON and CSV files meant for plotting.
