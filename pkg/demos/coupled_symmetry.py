"""Fold of a symmetric two-component system versus its scalar reduction.

For G = (u1^4 + u2^4)/4 + u1^2 u2^2 the diagonal u1 = u2 = w is invariant
and reduces the system to the scalar equation with g = 3 w^3, so both
problems must fold at the same lambda.
"""

import numpy as np

from foldfinder import ModelSpec, build_grid, coupled_model, find_fold_direct

grid = build_grid("interval", 63)

fp2 = find_fold_direct(grid, coupled_model(q=1.5))
scalar = ModelSpec(m=1, q=1.5, terms=((0.75, (4.0,)),))   # G = 3 u^4 / 4
fp1 = find_fold_direct(grid, scalar)

u = fp2.state.u
print("coupled fold   : lambda* = %.12f" % fp2.lam)
print("scalar fold    : lambda* = %.12f" % fp1.lam)
print("relative error : %.2e" % (abs(fp2.lam - fp1.lam) / fp1.lam))
print("component asymmetry max|u1-u2|/sup: %.2e"
      % (np.abs(u[0] - u[1]).max() / np.abs(u).max()))
