"""
Extension constructions, side by side
=====================================

Every method returns a field on the whole space restricting exactly to the
input on Y, plus the evidence: norms, residual chains, patch magnitudes.
"""

import numpy as np

from oscext import (
    AdaptiveScale,
    ScalarField,
    glue_extension,
    indicator_field,
    iterated_extension,
    limsup_extension,
    retract_extension,
    sequence_space,
)

space = sequence_space(10)
Y = space.full_mask()
f = indicator_field(space, [0])
policy = AdaptiveScale(2.0)

glue = glue_extension(space, Y, f, 0.5, policy)
print("glue: levels =", glue.diagnostics["alpha"],
      "| pre-patch error =", glue.diagnostics["prepatch_error_on_Y"],
      "| ||F|| <= ||f||:", glue.diagnostics["norm_prepatch"] <= glue.diagnostics["norm_f"])

series = iterated_extension(space, Y, f, policy, rounds=8)
print("iterated residual chain:", ["%.0e" % r for r in series.diagnostics["residual_norms"]])

upper = limsup_extension(space, Y, f)
print("limsup restriction error:", upper.restriction_error)

# retraction through the nearest point of a closed set
g = ScalarField.on_ids(space, [0, 1], [0.0, 1.0])
pulled = retract_extension(space, g)
print("retract of a two-point field:", np.round(pulled.field.values, 2))
