"""Oscillation-index derivations and low-index extension constructions on
finite metric spaces."""

from .errors import InvariantError, OscextError, PreconditionError, ValidationError
from .space import (
    AdaptiveScale,
    FixedScale,
    ScalarField,
    ScatteredDecomposition,
    SpaceInstance,
    SubsetMask,
    ball,
    cb_filtration,
    delta_limit_points,
    load_space,
    load_space_file,
    local_scale,
    parse_policy,
    space_to_document,
)
from .derive import (
    DerivationTrace,
    IndexProfile,
    InclusionReport,
    gap_step,
    inclusion_check,
    index_profile,
    iterate,
    osc_at_point,
    osc_on_set,
    pair_step,
)
from .unity import BallCover, PartitionOfUnity, blend, cover_for_piece, partition
from .extend import (
    ExtensionReport,
    glue_extension,
    iterated_extension,
    layered_extension,
    limsup_extension,
    retract_extension,
    scattered_extension,
    visibility_components,
)
from .instances import (
    CantorPoint,
    adversarial_union_fixture,
    block_parity_field,
    cantor_instance,
    generate_from_spec,
    indicator_field,
    ordinal_instance,
    random_field,
    random_instance,
    rank_parity_field,
    sequence_space,
)

__version__ = "0.1.0"
