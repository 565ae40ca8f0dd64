"""Second-order mesh convergence of the fold location.

The second-order stencil should drive lambda*(h) to its continuum limit
with O(h^2) error, so each mesh halving shrinks successive differences by
about a factor of four.
"""

from foldfinder import abc_model, build_grid, find_fold_direct

spec = abc_model(q=1.5, gamma=4.0)
sizes = (31, 63, 127, 255)
lams = [find_fold_direct(build_grid("interval", n), spec).lam for n in sizes]

print("%6s %18s %14s %8s" % ("n", "lambda*", "difference", "ratio"))
for i, n in enumerate(sizes):
    diff = lams[i - 1] - lams[i] if i else float("nan")
    ratio = ((lams[i - 2] - lams[i - 1]) / (lams[i - 1] - lams[i])
             if i >= 2 else float("nan"))
    print("%6d %18.12f %14.3e %8.3f" % (n, lams[i], diff, ratio))

rich = lams[-1] + (lams[-1] - lams[-2]) / 3.0
print("Richardson-extrapolated continuum fold: %.12f" % rich)
