"""Resonances of a Gaussian perturbation near the first Landau threshold.

``V = e^{-rho^2} e^{-2|x3|}`` with ``b = 2``: the effective potential is
``W = e^{-rho^2}/2`` and its Toeplitz eigenvalues are ``2^-(l+2)``, so the
counting function should grow like ``ln(1/r) / ln 2``.  Resonances far
from the threshold add a fixed offset, so the difference column settles.
"""
import warnings

import numpy as np

from charval.magnetic import (MagneticModel, PotentialSpec, asymptotic_law, count_resonances,
                              find_resonances, toeplitz_counting)

pot = PotentialSpec("A2-gaussian", amplitude=1.0, N=2.0, beta=1.0, mu=1.0)
model = MagneticModel(b=2.0, q=0, sign=1, potential=pot, j_max=4, ell_range=range(0, 8), n_x3=40)

res = find_resonances(model, 1e-3, 1.2)
print(f"{len(res)} resonances, pairing defect {res.pairing_defect():.1e}")
for x in sorted(res.resonances, key=lambda x: -abs(x.k))[:8]:
    print(f"  l = {x.ell}:  k = {x.k.real:+.6f} {x.k.imag:+.6f}i")

grid = np.geomspace(5e-3, 0.3, 6)
with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    rep = toeplitz_counting(model, grid)
law, curve = asymptotic_law(model)
print(f"law: {law.form}, C = {law.C:.4f}, gamma = {law.gamma}")
print(f"{'r':>8} {'#res':>5} {'n_+':>5} {'diff':>5} {'law':>7}")
for r, a, b in zip(grid, count_resonances(res, grid, 1.2), rep.eig_counts):
    print(f"{r:8.3g} {a:5d} {b:5d} {a - b:5d} {curve(r):7.2f}")
