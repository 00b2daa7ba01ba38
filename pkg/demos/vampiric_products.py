"""Odd convolutions against plane-times-time products, with and without a defect.

A product of a vertical line with a time measure is annihilated by every
spatially odd test function at its own atoms.  Sampling noise leaves a
residual that shrinks with the mesh; a small extra cluster off the line
does not go away.

    python demos/vampiric_products.py
"""

import numpy as np

from rectilab.czo import default_family
from rectilab.group import GroupModel, Region, VerticalPlane
from rectilab.measures import TimeMeasure, make_plane_with_defect, make_vertical_plane_measure
from rectilab.vampiric import vampiric_residual

model = GroupModel.parabolic(2, 1)
line = VerticalPlane.coordinate(2, [0])
box = Region.cube(np.zeros(3), 0.95)
family = default_family(radii=(1.0, 1.25))

print("     h   clean product   defect")
for h in (1 / 8, 1 / 16, 1 / 32):
    time = TimeMeasure.lebesgue(-3, 3, h * h)
    clean = make_vertical_plane_measure(line, time, box, h, model, jitter=0.5, seed=2)
    r = vampiric_residual(clean, family, lam=0.5, floor=2, sample=48)

    bad = make_plane_with_defect(model, line, time, box, h, [0.0, 0.3], 0.3, jitter=0.5, seed=2)
    near = np.flatnonzero(model.dist(bad.points, np.zeros(3)) < 0.5)
    d = vampiric_residual(bad, family, lam=0.5, floor=2, at=near[:: max(1, len(near) // 48)])
    print(f"{h:6.4f}   {r.max_residual:12.2e}   {d.max_residual:6.3f}")
