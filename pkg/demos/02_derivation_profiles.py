"""
Oscillation derivations and index profiles
==========================================

The pair step keeps points whose neighbourhood holds an epsilon-sized value
pair; iterating it measures how many peels a function needs.  The gap step
is the single-witness variant, and the two satisfy exact inclusion laws.
"""

from oscext import (
    AdaptiveScale,
    FixedScale,
    ScalarField,
    adversarial_union_fixture,
    inclusion_check,
    index_profile,
    indicator_field,
    iterate,
    random_field,
    random_instance,
    sequence_space,
)

space = sequence_space(10)
f = indicator_field(space, [0])

trace = iterate("pair", f, 0.5, space.full_mask(), AdaptiveScale(2.0))
print("indicator trace sizes:", trace.level_sizes(), trace.terminal)

profile = index_profile(f, space.full_mask(), AdaptiveScale(2.0), [0.5, 0.25])
for entry in profile.entries:
    print(f"  eps={entry.epsilon:<6} index={entry.index}")

# the hard inclusion laws hold exactly on seeded instances
ri = random_instance(7, 60, 2)
rep = inclusion_check(random_field(ri, 8), random_field(ri, 9), 0.5,
                      ri.full_mask(), FixedScale(0.18), depth=ri.n + 1)
print("one-step sum law holds:", rep.sum_split_ok)
print("bracket holds at every level:", rep.bracket_ok)

# the union law is soft: a three-point split loses its only witness
space, f, P, Q, eps, delta = adversarial_union_fixture()
rep = inclusion_check(f, ScalarField.constant(space.full_mask(), 0.0),
                      eps, P, FixedScale(delta), depth=2, q=Q)
print("union-law violations on the adversarial fixture:", rep.union_violations)
