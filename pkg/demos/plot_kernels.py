"""
High-order Gaussian kernels
===========================

Each kernel is a polynomial in ``x**2`` times the standard normal density.
Raising the order cancels more moments, which lowers the bias of a density
estimate on smooth targets at the price of a larger ``L2`` norm.
"""

# %%
# Build every supported kernel and look at its norms.
import numpy as np

from mkv import kernels

for order in kernels.SUPPORTED_ORDERS:
    k = kernels.make_kernel(order)
    print(f"order {order}: K(0) = {float(k(0.0)):.6f}  "
          f"|K|_1 = {k.l1_norm:.4f}  |K|_2^2 = {k.l2_norm_sq:.6f}  sup = {k.sup_norm:.4f}")

# %%
# Moments up to the order vanish; the next even one does not.
report = kernels.check_moments(kernels.make_kernel(3), 4)
for r in report:
    print(f"  int x^{r.k} K = {r.moment:+.3e}")

# %%
# The kernels change sign, so an estimate built from them can dip below zero
# in the tails.  The sign changes sit at the roots of the polynomial part.
print(kernels.sign_changes(kernels.make_kernel(5)))

# %%
# Multivariate kernels are products over coordinates.
k2 = kernels.make_kernel(3, dim=2)
print(float(k2([0.0, 0.0])), float(kernels.make_kernel(3)(0.0)) ** 2)
x = np.linspace(-4, 4, 9)
print(np.round(kernels.make_kernel(7)(x), 4))
