"""
Finite metric spaces and derived-set filtrations
================================================

Build the truncated convergent sequence {0} u {1/n}, query balls, and watch
the adaptive filtration separate the limit point from the sequence.
"""

import numpy as np

from oscext import AdaptiveScale, ball, cb_filtration, local_scale, ordinal_instance, sequence_space

space = sequence_space(10)
coords = space.metric.coords[:, 0]
print("points:", np.round(coords, 4))
print("resolution (smallest gap):", space.resolution)

# the open ball of radius 0.15 around the limit point
members = ball(space, 0, 0.15, space.full_mask())
print("ball(0, 0.15):", np.round(coords[members.ids()], 4))

# local scale = distance to the nearest other point
print("local scale at 0:", local_scale(space, 0, space.full_mask()))

# the adaptive filtration peels the sequence, then the limit point
dec = cb_filtration(space, space.full_mask(), AdaptiveScale(3.0))
print("filtration sizes:", [lvl.size for lvl in dec.filtration], dec.terminal)
print("rank of the limit point:", dec.rank_of(0))

# nested ladders realize any prescribed finite depth
for k in (1, 2, 3):
    oi = ordinal_instance(k, 5)
    dec = cb_filtration(oi, oi.full_mask(), AdaptiveScale(3.0))
    print(f"ordinal depth {k}: {oi.n} points, filtration length {len(dec.filtration)}")
