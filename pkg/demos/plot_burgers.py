"""
Reconstructing the viscous Burgers density
==========================================

Particles started at the origin and pushed by the empirical CDF of the
ensemble approximate the law whose CDF solves a viscous Burgers equation.
The exact solution is available in closed form, so the adaptive estimate can
be compared against it pointwise.
"""

# %%
import numpy as np

from mkv import burgers_reference, get_model, gl, kernels, particles

sigma = np.sqrt(0.2)
x = np.linspace(-3, 4, 15)
ref = burgers_reference(1.0, x, sigma)
for xi, c, d in zip(x, ref["cdf"], ref["density"]):
    print(f"x = {xi:5.2f}  cdf = {c:.4f}  density = {d:.4f}")

# %%
# Simulate, then estimate with a locally selected bandwidth.
model = get_model("burgers")
for n in (2**10, 2**13):
    ens = particles.simulate(particles.SimConfig(n_particles=n, n_steps=100, horizon=1.0, seed=1), model)
    k = kernels.make_kernel(5)
    grid = np.linspace(-3, 4, 701)
    est = gl.adaptive_estimate(ens, k, gl.bandwidth_grid(n, 5), 23.0, grid)
    err = np.abs(est.values - burgers_reference(1.0, grid, sigma)["density"]).max()
    print(f"N = {n:5d}: sup error {err:.4f}, bandwidths used {sorted({round(float(b), 3) for b in est.bandwidth})}")
