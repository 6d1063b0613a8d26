"""
Scattered spaces: extensions with index at most 2
=================================================

On spaces whose derived-set filtration empties, the component recursion
produces extensions that stay continuous at the carrier set and never need
more than two derivation peels.
"""

import numpy as np

from oscext import AdaptiveScale, gap_step, index_profile, ordinal_instance, scattered_extension
from oscext.instances import scaled_position_field

GRID = [2.0**-j for j in range(1, 9)]

space = ordinal_instance(2, 6)
f_full = scaled_position_field(space)

rng = np.random.default_rng(3)
ids = np.flatnonzero(rng.uniform(size=space.n) < 0.4)
Y = space.mask_from_ids(ids)
f = f_full.restrict(Y)

rep = scattered_extension(space, Y, f)
print(f"carrier |Y| = {Y.size} of {space.n}; components visited:",
      rep.diagnostics["components"])

profile = index_profile(rep.field, space.full_mask(), AdaptiveScale(3.0), GRID)
print("indices over the grid:", [e.index for e in profile.entries])

still = [eps for eps in GRID
         if np.any(gap_step(rep.field, eps, space.full_mask(), AdaptiveScale(3.0)).mask[Y.mask])]
print("grid epsilons where some Y point oscillates:", still or "none")
