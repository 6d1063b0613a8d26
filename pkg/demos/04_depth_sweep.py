"""
Layered vs limsup on binary-sequence spaces
===========================================

The block-parity function is continuous on the dense tail-0 subset but
oscillates near the all-ones tails.  The layered construction keeps the
measured index small at every epsilon; the upper envelope saturates, the
finite shadow of an unbounded index.
"""

from oscext import AdaptiveScale, block_parity_field, cantor_instance, index_profile
from oscext.extend import layered_extension, limsup_extension

GRID = sorted({3.0**-j for j in range(1, 5)} | {2.0**-j for j in range(1, 9)}, reverse=True)
MEASURE = AdaptiveScale(1.5)  # resolves one dyadic scale at a time

for depth in (6, 8):
    space = cantor_instance(depth)
    Y = space.subsets["Y"]
    f = block_parity_field(space)
    layered = layered_extension(space, Y, f)
    upper = limsup_extension(space, Y, f)
    pl = index_profile(layered.field, space.full_mask(), MEASURE, GRID)
    pu = index_profile(upper.field, space.full_mask(), MEASURE, GRID)
    print(f"depth {depth}: {space.n} points, {layered.diagnostics['layers']} layers")
    print(f"  {'epsilon':>10}  layered  limsup")
    for a, b in zip(pl.entries, pu.entries):
        la = "SAT" if a.index is None else a.index
        lb = "SAT" if b.index is None else b.index
        print(f"  {a.epsilon:>10.4f}  {la!s:>7}  {lb!s:>6}")
