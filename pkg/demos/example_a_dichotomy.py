"""Example A: a plane in R^2 x R carrying a fractal time measure.

The measure is spatially two-dimensional, so beta against vertical lines
stays of order one at every scale, while the transport distance to
products of the full spatial plane with a time measure is tiny.  The
script prints both sides of that picture along one chain of cubes.

    python demos/example_a_dichotomy.py
"""

import numpy as np

from rectilab.beta import cube_betas, ur_growth, ur_sum
from rectilab.dyadic import build_tree
from rectilab.group import GroupModel, Region
from rectilab.measures import make_example_A
from rectilab.transport import alpha_m

model = GroupModel.parabolic(2, 1)
mu = make_example_A(model, Region.cube(np.zeros(3), 4.0), h=0.25)
print(f"{len(mu)} atoms, total mass {mu.mass:.4g}")

tree = build_tree(mu, 16.0, 2.0)
betas = cube_betas(mu, tree)
print("\nsidelength  cubes  min beta  max beta")
for j, ids in sorted(tree.generations.items(), reverse=True):
    ell = tree.cubes[ids[0]].ell
    print(f"{ell:10g}  {len(ids):5d}  {betas[ids].min():8.3f}  {betas[ids].max():8.3f}")

depths, means, slope = ur_growth(ur_sum(mu, tree, betas=betas), tree)
print(f"\nmean UR sum by depth: {np.round(means, 3).tolist()}  (slope {slope:.3f})")

# balls of two sizes around the atom nearest the origin
X = mu.points[np.argmin(model.norm(mu.points))]
print("\nballs around", np.round(X, 3))
print("     r   alpha_1   alpha_2")
for r in (2.0, 1.0):
    a1 = alpha_m(mu, X, r, 1).value
    a2 = alpha_m(mu, X, r, 2).value
    print(f"{r:6g}  {a1:8.3g}  {a2:8.2e}")
