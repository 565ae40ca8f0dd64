"""Locate the fold of the one-node problem and compare with the closed form.

On a single interior grid node the discrete problem collapses to the scalar
equation 8*u = lam*u^(q-1) + u^(gamma-1), whose fold is known exactly.
"""

import numpy as np

from foldfinder import abc_model, build_grid, find_fold_direct

Q, GAMMA, C = 1.5, 4.0, 8.0

u_star = ((2.0 - Q) * C / (GAMMA - Q)) ** (1.0 / (GAMMA - 2.0))
lam_star = C * u_star ** (2.0 - Q) - u_star ** (GAMMA - Q)

grid = build_grid("interval", 1)
fp = find_fold_direct(grid, abc_model(q=Q, gamma=GAMMA))

print("closed form : u* = %.15f  lambda* = %.15f" % (u_star, lam_star))
print("solver      : u* = %.15f  lambda* = %.15f"
      % (fp.state.u[0, 0], fp.lam))
print("errors      : %.2e / %.2e"
      % (abs(fp.state.u[0, 0] - u_star), abs(fp.lam - lam_star)))
print("stability index at the fold: %.2e (should vanish)" % fp.delta)
print("null direction: %s (unit in the quadrature norm)" % fp.v.ravel())
