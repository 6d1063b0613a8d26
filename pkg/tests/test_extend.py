import numpy as np
import pytest

from oscext import (
    AdaptiveScale,
    FixedScale,
    ScalarField,
    block_parity_field,
    glue_extension,
    index_profile,
    iterate,
    iterated_extension,
    layered_extension,
    limsup_extension,
    random_field,
    random_instance,
    retract_extension,
    scattered_extension,
    visibility_components,
)
from oscext.errors import PreconditionError, ValidationError
from oscext.instances import cantor_point_id, scaled_position_field


class TestGlue:
    def test_full_domain_restriction(self, rand60):
        f = random_field(rand60, 16)
        eps = 2 * f.norm() + 0.5  # the one-step set is empty at this epsilon
        rep = glue_extension(rand60, rand60.full_mask(), f, eps, AdaptiveScale(1.5))
        assert rep.restriction_error == 0.0
        assert rep.diagnostics["prepatch_error_on_Y"] <= eps

    def test_constant_on_proper_subset(self, seq10):
        Y = seq10.mask_from_ids([0, 3, 5])
        f = ScalarField.constant(Y, 2.5)
        rep = glue_extension(seq10, Y, f, 0.5, AdaptiveScale(2.0))
        vals = rep.field.values
        covered = vals == 2.5
        assert covered[[0, 3, 5]].all()
        assert set(np.unique(vals)) <= {0.0, 2.5}
        assert rep.diagnostics["norm_prepatch"] == 2.5

    def test_indicator_fixture_alpha2(self, seq10, seq_indicator):
        rep = glue_extension(seq10, seq10.full_mask(), seq_indicator, 0.5, AdaptiveScale(2.0))
        assert rep.diagnostics["alpha"] == 2
        assert rep.diagnostics["prepatch_error_on_Y"] <= 0.5
        assert rep.diagnostics["norm_prepatch"] <= 1.0

    def test_saturated_trace_is_clean_error(self, seq10, seq_indicator):
        with pytest.raises(PreconditionError, match="saturated"):
            glue_extension(seq10, seq10.full_mask(), seq_indicator, 0.5, AdaptiveScale(3.0))

    def test_prop1_contracts_on_seeds(self):
        for seed in range(8):
            space = random_instance(seed + 300, 50, 2)
            f = random_field(space, seed + 400)
            eps = None
            for cand in (0.9, 0.8, 0.7, 0.6, 0.5):
                tr = iterate("pair", f, cand, space.full_mask(), AdaptiveScale(1.5))
                if tr.terminal[0] == "emptied":
                    eps = cand
                    break
            if eps is None:
                continue
            rep = glue_extension(space, space.full_mask(), f, eps, AdaptiveScale(1.5))
            assert rep.diagnostics["norm_prepatch"] <= rep.diagnostics["norm_f"]
            assert rep.diagnostics["prepatch_error_on_Y"] <= eps


class TestIterated:
    def test_constant_first_round(self, seq10):
        f = ScalarField.constant(seq10.full_mask(), 0.8)
        rep = iterated_extension(seq10, seq10.full_mask(), f, AdaptiveScale(2.0), 3)
        assert rep.diagnostics["residual_norms"][0] <= 0.5

    def test_indicator_ten_rounds(self, seq10, seq_indicator):
        rep = iterated_extension(seq10, seq10.full_mask(), seq_indicator, AdaptiveScale(2.0), 10)
        for n, r in enumerate(rep.diagnostics["residual_norms"], start=1):
            assert r <= 2.0**-n
        assert rep.restriction_error == 0.0

    def test_single_round_equals_glue_plus_patch(self, seq10, seq_indicator):
        rep1 = iterated_extension(seq10, seq10.full_mask(), seq_indicator, AdaptiveScale(2.0), 1)
        rep2 = glue_extension(seq10, seq10.full_mask(), seq_indicator, 0.5, AdaptiveScale(2.0))
        assert np.array_equal(rep1.field.values, rep2.field.values)

    def test_saturation_reports_round(self, rand60):
        f = random_field(rand60, 17)
        with pytest.raises(PreconditionError, match="round"):
            iterated_extension(rand60, rand60.full_mask(), f, AdaptiveScale(3.0), 5)

    def test_rounds_validated(self, seq10, seq_indicator):
        with pytest.raises(ValidationError):
            iterated_extension(seq10, seq10.full_mask(), seq_indicator, AdaptiveScale(2.0), 0)


class TestLimsup:
    def test_patch_on_y(self, seq10, seq_indicator):
        rep = limsup_extension(seq10, seq10.full_mask(), seq_indicator)
        assert rep.restriction_error == 0.0
        assert np.array_equal(rep.field.values, seq_indicator.values)

    def test_constant(self, rand60):
        Y = rand60.mask_from_ids(list(range(0, 60, 2)))
        f = ScalarField.constant(Y, -1.5)
        rep = limsup_extension(rand60, Y, f)
        assert np.all(rep.field.values == -1.5)

    def test_range_bound(self, rand60):
        Y = rand60.mask_from_ids(list(range(0, 60, 3)))
        f = random_field(rand60, 18).restrict(Y)
        rep = limsup_extension(rand60, Y, f)
        vals = f.values[Y.mask]
        assert rep.field.values.min() >= vals.min()
        assert rep.field.values.max() <= vals.max()

    def test_cantor_shell_value(self, cantor6):
        # F at the all-ones point is the max of f over the coarsest shell
        # above the resolution floor: both parities appear, so the value
        # is 2/3 regardless of the depth parity.
        f = block_parity_field(cantor6)
        rep = limsup_extension(cantor6, cantor6.subsets["Y"], f)
        w = cantor_point_id(cantor6, "", 1)
        shell = [cantor_point_id(cantor6, "1" * 6, 0), cantor_point_id(cantor6, "1" * 5, 0)]
        assert rep.field.values[w] == max(f.values[i] for i in shell)


class TestRetract:
    def test_identity_on_full_domain(self, seq10, seq_indicator):
        rep = retract_extension(seq10, seq_indicator)
        assert np.array_equal(rep.field.values, seq_indicator.values)

    def test_single_point_domain(self, seq10):
        f = ScalarField.on_ids(seq10, [3], [7.0])
        rep = retract_extension(seq10, f)
        assert np.all(rep.field.values == 7.0)

    def test_threshold_by_proximity(self, seq10):
        f = ScalarField.on_ids(seq10, [0, 1], [0.0, 1.0])
        rep = retract_extension(seq10, f)
        coords = seq10.metric.coords[:, 0]
        expect = np.where(np.abs(coords - 0.0) <= np.abs(coords - 1.0), 0.0, 1.0)
        # ties break to the smaller id (the point 0)
        assert np.array_equal(rep.field.values, expect)

    def test_open_domain_rejected(self, cantor6):
        # a lone non-isolated point: its twin lies within the resolution
        f = ScalarField.on_ids(cantor6, [0], [1.0])
        with pytest.raises(PreconditionError, match="closed at resolution"):
            retract_extension(cantor6, f)


class TestLayered:
    def test_dense_precondition(self, seq10, seq_indicator):
        Y = seq10.mask_from_ids([0, 1])
        with pytest.raises(PreconditionError, match="dense"):
            layered_extension(seq10, Y, seq_indicator.restrict(Y))

    def test_full_domain_small_euclid(self, rand60):
        f = scaled_position_field(rand60)
        rep = layered_extension(rand60, rand60.full_mask(), f)
        assert rep.restriction_error == 0.0
        assert rep.assertion_log == []

    def test_cantor_depth6_pipeline(self, cantor6):
        f = block_parity_field(cantor6)
        rep = layered_extension(cantor6, cantor6.subsets["Y"], f)
        assert rep.restriction_error == 0.0
        assert rep.assertion_log == []
        assert rep.patch_magnitude <= 2.0 ** (1 - rep.diagnostics["k_star"])
        prof = index_profile(rep.field, cantor6.full_mask(), AdaptiveScale(1.5),
                             [3.0**-j for j in range(1, 5)])
        assert all(e.index is not None and e.index <= 3 for e in prof.entries)

    def test_layer_carriers_nest(self, cantor6):
        f = block_parity_field(cantor6)
        rep = layered_extension(cantor6, cantor6.subsets["Y"], f)
        sizes = rep.diagnostics["carrier_sizes"]
        assert all(b <= a for a, b in zip(sizes, sizes[1:]))

    def test_jump_field_exits_after_first_layer(self):
        # indicator of one interleaved grid: every point fails the
        # oscillation test immediately, so only layer 0 exists
        from oscext.space import EuclideanMetric, SpaceInstance

        xs = np.arange(0, 16) * 0.01
        space = SpaceInstance("grids", EuclideanMetric(xs), resolution=0.011, family="euclidean")
        vals = np.where(np.arange(16) % 2 == 0, 0.0, 1.0)
        f = ScalarField(space.full_mask(), vals)
        rep = layered_extension(space, space.full_mask(), f)
        assert rep.diagnostics["layers"] == 1
        assert rep.restriction_error == 0.0


class TestScattered:
    def test_family_gate(self, rand60):
        f = random_field(rand60, 19)
        with pytest.raises(PreconditionError, match="clopen"):
            scattered_extension(rand60, rand60.full_mask(), f)

    def test_full_y_is_identity(self, ordinal1):
        f = scaled_position_field(ordinal1)
        rep = scattered_extension(ordinal1, ordinal1.full_mask(), f)
        assert np.array_equal(rep.field.values, f.values)
        assert rep.patch_magnitude == 0.0

    def test_apex_outside_closure_gets_zero(self, ordinal2):
        # Y collects only the outermost cluster, far from the apex
        coords = ordinal2.metric.coords[:, 0]
        ids = np.flatnonzero(coords > 0.7)
        Y = ordinal2.mask_from_ids(ids)
        f = scaled_position_field(ordinal2).restrict(Y)
        rep = scattered_extension(ordinal2, Y, f)
        assert rep.field.values[0] == 0.0

    def test_random_subsets_low_index(self, ordinal2):
        grid = [2.0**-j for j in range(1, 9)]
        f_full = scaled_position_field(ordinal2)
        for seed in range(5):
            rng = np.random.default_rng(seed)
            ids = np.flatnonzero(rng.uniform(size=ordinal2.n) < 0.4)
            if ids.size == 0:
                ids = np.array([1])
            Y = ordinal2.mask_from_ids(ids)
            rep = scattered_extension(ordinal2, Y, f_full.restrict(Y))
            prof = index_profile(rep.field, ordinal2.full_mask(), AdaptiveScale(3.0), grid)
            assert all(e.index is not None and e.index <= 2 for e in prof.entries)

    def test_saturating_fixed_policy_refused(self, ordinal1):
        f = scaled_position_field(ordinal1)
        with pytest.raises(PreconditionError, match="scattered"):
            scattered_extension(ordinal1, ordinal1.full_mask(), f, FixedScale(10.0))

    def test_components_partition_region(self, ordinal2):
        comps = visibility_components(ordinal2, ordinal2.full_mask(), 3.0)
        total = np.zeros(ordinal2.n, dtype=int)
        for comp in comps:
            total[comp.mask] += 1
        assert np.all(total == 1)


class TestRestrictionIdentityEverywhere:
    def test_all_methods_restrict_exactly(self, seq10, seq_indicator, ordinal2, cantor6):
        runs = []
        runs.append(glue_extension(seq10, seq10.full_mask(), seq_indicator, 0.5, AdaptiveScale(2.0)))
        runs.append(iterated_extension(seq10, seq10.full_mask(), seq_indicator, AdaptiveScale(2.0), 5))
        runs.append(limsup_extension(seq10, seq10.full_mask(), seq_indicator))
        f2 = block_parity_field(cantor6)
        runs.append(layered_extension(cantor6, cantor6.subsets["Y"], f2))
        runs.append(limsup_extension(cantor6, cantor6.subsets["Y"], f2))
        f3 = scaled_position_field(ordinal2)
        runs.append(scattered_extension(ordinal2, ordinal2.full_mask(), f3))
        for rep in runs:
            assert rep.restriction_error == 0.0

    def test_determinism(self, cantor6):
        f = block_parity_field(cantor6)
        a = layered_extension(cantor6, cantor6.subsets["Y"], f)
        b = layered_extension(cantor6, cantor6.subsets["Y"], f)
        assert np.array_equal(a.field.values, b.field.values)


class TestLimsupRegression:
    def test_depth8_ternary_profile_frozen(self, cantor8):
        # frozen at first computation: the envelope's trace never empties at
        # any ternary epsilon, at either measurement multiplier
        f = block_parity_field(cantor8)
        rep = limsup_extension(cantor8, cantor8.subsets["Y"], f)
        for mult in (1.5, 3.0):
            prof = index_profile(rep.field, cantor8.full_mask(), AdaptiveScale(mult),
                                 [1 / 3, 1 / 9, 1 / 27])
            assert [e.index for e in prof.entries] == [None, None, None]


class TestLayeredInvariants:
    def test_carriers_nest_and_level_numbers_grow(self, cantor6):
        from oscext.extend import _layered_cantor

        f = block_parity_field(cantor6)
        layers = _layered_cantor(cantor6, cantor6.subsets["Y"], f.restrict(cantor6.subsets["Y"]),
                                 max_layers=24, n_max=10)
        for a, b in zip(layers, layers[1:]):
            assert b.carrier.issubset(a.carrier)
        for st in layers:
            centers = st.centers
            lv = st.level_numbers[centers]
            assert np.all(lv >= st.k + 1)
