from fractions import Fraction

import numpy as np
import pytest

from oscext import (
    AdaptiveScale,
    ValidationError,
    cantor_instance,
    cb_filtration,
    ordinal_instance,
    random_instance,
    rank_parity_field,
)
from oscext.derive import osc_at_point
from oscext.errors import PreconditionError
from oscext.instances import (
    CantorPoint,
    block_parity_field,
    block_parity_value,
    cantor_point_id,
    head_from_blocks,
    parse_blocks,
    scaled_position_field,
)

from oracles import o_adaptive_filtration


class TestCantorPoints:
    def test_canonicalization_strips_tail_bits(self):
        assert CantorPoint("10", 0) == CantorPoint("1", 0)
        assert CantorPoint("0111", 1) == CantorPoint("0", 1)
        assert CantorPoint("", 0).label == "+0"

    def test_canonicalization_idempotent(self):
        p = CantorPoint("1101000", 0)
        q = CantorPoint(p.head, p.tail)
        assert p == q

    def test_coordinates(self):
        p = CantorPoint("10", 1)
        assert [p.coordinate(j) for j in range(1, 6)] == [1, 0, 1, 1, 1]


class TestCantorInstance:
    def test_point_count(self):
        for depth in (2, 4, 6):
            assert cantor_instance(depth).n == 2 ** (depth + 1)

    def test_depth_below_two_rejected(self):
        with pytest.raises(ValidationError):
            cantor_instance(1)

    def test_prefix_metric_examples(self, cantor6):
        # (tail1) vs (1, tail0): sequences 111... and 1000...: differ at 2
        a = cantor_point_id(cantor6, "", 1)
        b = cantor_point_id(cantor6, "1", 0)
        assert cantor6.dist(a, b) == 2.0**-2
        # canonical equality: head "10"+tail0 is the same point as "1"+tail0
        assert cantor_point_id(cantor6, "10", 0) == cantor_point_id(cantor6, "1", 0)

    def test_distinct_points_have_positive_distance(self, cantor6):
        codes = cantor6.metric.codes[cantor6.metric.width]
        assert np.unique(codes).size == cantor6.n

    def test_y_is_dense_at_resolution(self, cantor6):
        from oscext.extend import nearest_in_set

        _ids, dist = nearest_in_set(cantor6, cantor6.subsets["Y"])
        assert float(dist.max()) < cantor6.resolution


class TestBlockParityField:
    def test_all_zero_sequence(self, cantor6):
        f = block_parity_field(cantor6)
        assert f.value(cantor_point_id(cantor6, "", 0)) == 0.0

    def test_alternating_pattern_value(self, cantor6):
        # j complete "10" blocks then tail 0: value 1 - 3^-j
        f = block_parity_field(cantor6)
        for j in (1, 2, 3):
            head = "10" * j
            expect = float(1 - Fraction(1, 3**j))
            assert f.value(cantor_point_id(cantor6, head, 0)) == expect

    def test_parse_blocks(self):
        assert parse_blocks("") == [0]
        assert parse_blocks("110") == [2, 0]
        assert parse_blocks("101") == [1, 1]
        assert head_from_blocks([2, 0, 1]) == "110010"

    def test_undefined_off_y(self, cantor6):
        f = block_parity_field(cantor6)
        w = cantor_point_id(cantor6, "", 1)
        with pytest.raises(PreconditionError):
            f.value(w)

    def test_oscillation_pair_identity(self):
        # |f(1^{n1},0,...,1^{nk},0,1^{2n},0^w) - f(...,1^{2n-1},0,(10)^j...)|
        # equals (1 - 3^-(j+1)) / 3^k exactly on the truncations.
        space = cantor_instance(12)
        f = block_parity_field(space)
        n1, k, n = 2, 1, 2
        head_a = head_from_blocks([n1, 2 * n])
        ja = cantor_point_id(space, head_a, 0)
        fill = 12 - len(head_from_blocks([n1, 2 * n - 1]))
        j = fill // 2  # complete "10" blocks that fit before the depth
        head_b = head_from_blocks([n1, 2 * n - 1]) + "10" * j
        jb = cantor_point_id(space, head_b, 0)
        got = abs(f.value(ja) - f.value(jb))
        pa = block_parity_value(head_a)
        pb = block_parity_value(head_b)
        assert abs(pa - pb) == (1 - Fraction(1, 3 ** (j + 1))) / Fraction(3**k)
        assert got == pytest.approx(float((1 - Fraction(1, 3 ** (j + 1))) / 3**k))
        assert abs(got - 3.0**-k) <= 3.0 ** -(k + j)

    def test_continuity_at_resolution_on_y(self, cantor6):
        # osc over the m-cylinder is bounded by 3 * 3^-(completed blocks)
        f = block_parity_field(cantor6)
        Y = cantor6.subsets["Y"]
        points = cantor6.meta["points"]
        for y in Y.ids()[:40]:
            head = points[int(y)].head
            for m in (3, 5, 6):
                blocks = head[: m - 1].count("0") if head else 0
                got = osc_at_point(f, int(y), Y, 2.0**-m)
                assert got <= 3.0 * 3.0**-blocks + 1e-12


class TestOrdinalInstance:
    def test_filtration_length_exactly_k_plus_1(self):
        for k, branching in ((1, 10), (2, 6), (3, 5)):
            space = ordinal_instance(k, branching)
            dec = cb_filtration(space, space.full_mask(), AdaptiveScale(3.0))
            assert dec.emptied
            assert len(dec.filtration) == k + 1
            assert list(dec.filtration[-1].ids()) == [space.meta["apex"]]

    def test_matches_generator_ranks(self, ordinal2):
        dec = cb_filtration(ordinal2, ordinal2.full_mask(), AdaptiveScale(3.0))
        assert np.array_equal(dec.ranks, ordinal2.meta["true_ranks"])

    def test_oracle_agreement_k1(self, ordinal1):
        levels, terminal = o_adaptive_filtration(ordinal1, list(range(ordinal1.n)), 3.0)
        dec = cb_filtration(ordinal1, ordinal1.full_mask(), AdaptiveScale(3.0))
        assert [sorted(l.ids()) for l in dec.filtration] == [sorted(l) for l in levels]

    def test_parameter_bounds(self):
        with pytest.raises(ValidationError):
            ordinal_instance(0)
        with pytest.raises(ValidationError):
            ordinal_instance(1, 2)

    def test_parity_field_is_apex_indicator_at_k1(self, ordinal1):
        f = rank_parity_field(ordinal1)
        assert f.value(0) == 1.0
        assert all(f.value(i) == 0.0 for i in range(1, ordinal1.n))


class TestSequenceSpace:
    def test_geometry(self, seq10):
        coords = np.sort(seq10.metric.coords[:, 0])
        assert coords[0] == 0.0 and coords[-1] == 1.0
        assert seq10.resolution == pytest.approx(1 / 90)

    def test_limit_point_id(self, seq10):
        assert seq10.meta["limit"] == 0


class TestRandomInstance:
    def test_determinism(self):
        a = random_instance(7, 50, 3)
        b = random_instance(7, 50, 3)
        assert np.array_equal(a.metric.coords, b.metric.coords)
        assert a.resolution == b.resolution

    def test_minimal_size(self):
        with pytest.raises(ValidationError):
            random_instance(1, 1)
        two = random_instance(1, 2)
        assert two.dist(0, 1) > 0

    def test_triangle_exhaustive_small(self):
        space = random_instance(3, 40, 2)
        D = np.array([[space.dist(i, j) for j in range(40)] for i in range(40)])
        for i in range(40):
            assert np.all(D <= D[:, [i]] + D[[i], :] + 1e-12)


class TestScaledPositionField:
    def test_visible_gaps_below_bound(self, ordinal2):
        from oscext.derive import gap_step

        f = scaled_position_field(ordinal2)
        for eps in (2.0**-8, 2.0**-6):
            assert gap_step(f, eps, ordinal2.full_mask(), AdaptiveScale(3.0)).is_empty()
