"""Where the sector law breaks: the three counterexample families.

Run with ``python3 demos/counterexamples.py``.  Each block localises the
characteristic values of one family and prints them next to what the
construction predicts.
"""
import math

import numpy as np

from charval.contours import Rectangle
from charval.engine import localize
from charval.models import (bracket_zeros, build_inductive_sequences, counterexample_noncompact,
                            counterexample_noninvertible, counterexample_nonselfadjoint, eval_f)

# i) A'(0) not compact: the values sit at -lambda_k, on the wrong side
eigs = 2.0 ** -np.arange(1, 7)
fam = counterexample_noncompact(eigs)
vals = localize(fam.F, Rectangle(-1, -1e-3, -0.1, 0.1), 1e-10)
print("i)   located:", np.round(sorted(v.location.real for v in vals), 10))
print("     -eigs:  ", np.sort(-eigs))

# ii) A(0) nilpotent: no eigenvalues at all, yet values at alpha_k^2
alphas = 2.0 ** -np.arange(6)
fam = counterexample_nonselfadjoint(alphas)
vals = localize(fam.F, Rectangle(1e-4, 2, -0.1, 0.1), 1e-10)
print("ii)  located:", np.round(sorted(v.location.real for v in vals), 10))
print("     spectrum of A(0):", np.round(np.abs(np.linalg.eigvals(fam.a0())), 12))

# iii) I - A'(0) P0 not invertible: f changes sign between consecutive lambdas
seqs = build_inductive_sequences(8)
print("iii) k   lambda_k          sign f(lambda_k)  |f| / |alpha_k|^2")
for k in range(seqs.n_max + 1):
    val, err = eval_f(seqs, math.inf, seqs.lambdas[k])
    print(f"     {k:<3d} {seqs.lambdas[k]:<17.6g} {int(np.sign(val.real)):>+3d}"
          f"              {abs(val) / abs(seqs.alphas[k]) ** 2:.3f}")
xs = bracket_zeros(seqs, 4)
fam = counterexample_noninvertible(seqs, seqs.n_max + 1)
for x in xs:
    s = np.linalg.svd(fam.F(x), compute_uv=False)[-1]
    print(f"     zero at {x:.10g}, smallest singular value {s:.2e}")
