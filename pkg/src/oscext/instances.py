"""Instance generators: binary-sequence spaces, ordinal ladders, random clouds.

The binary-sequence family stores eventually constant words exactly (head +
repeated tail bit) under the prefix metric 2^-(first difference).  The
ordinal family realises a prescribed finite derived-set depth with geometric
ladders whose decay ratio sits in the window where the adaptive filtration
separates ladder points from their accumulation point.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import PreconditionError, ValidationError
from .space import (
    CantorMetric,
    EuclideanMetric,
    ScalarField,
    SpaceInstance,
    SubsetMask,
)

# Ladder decay per step.  The adaptive filtration separates an accumulation
# point from its ladder exactly when 3*(1-ratio)/ratio < 1 < 3*ratio, i.e.
# ratio in (3/4, 1); 4/5 keeps all gaps dyadic-rational friendly.
LADDER_RATIO = 0.8
CLUSTER_SHRINK = 1.0 / 64.0


# ---------------------------------------------------------------------------
# Eventually constant binary sequences
# ---------------------------------------------------------------------------

class CantorPoint:
    """Canonical form of an eventually constant 0/1 sequence."""

    __slots__ = ("head", "tail")

    def __init__(self, head: str, tail: int):
        tail = int(tail)
        if tail not in (0, 1):
            raise ValidationError("tail bit must be 0 or 1")
        if any(ch not in "01" for ch in head):
            raise ValidationError("head must be a 0/1 word")
        head = head.rstrip(str(tail))  # canonical: head never ends in the tail bit
        self.head = head
        self.tail = tail

    def coordinate(self, j: int) -> int:
        """1-indexed coordinate of the represented sequence."""
        if j < 1:
            raise ValidationError("coordinates are numbered from 1")
        return int(self.head[j - 1]) if j <= len(self.head) else self.tail

    @property
    def label(self) -> str:
        return f"{self.head}+{self.tail}"

    @classmethod
    def from_label(cls, label: str) -> "CantorPoint":
        head, _, tail = label.rpartition("+")
        return cls(head, int(tail))

    def __eq__(self, other):
        return isinstance(other, CantorPoint) and self.head == other.head and self.tail == other.tail

    def __hash__(self):
        return hash((self.head, self.tail))

    def __repr__(self):
        return f"CantorPoint({self.label!r})"


def cantor_prefix_bits(depth: int):
    """Enumerate canonical points of head length <= depth; bits + labels.

    Points are ordered by (tail, head length, head value), so the tail-0
    half occupies ids 0 .. 2^depth - 1.  Width depth+1 suffices: distinct
    canonical points always differ within the first depth+1 coordinates.
    """
    if depth < 2:
        raise ValidationError("depth must be >= 2")
    points = []
    for tail in (0, 1):
        avoid = str(tail)
        for length in range(depth + 1):
            for value in range(1 << length):
                head = format(value, f"0{length}b") if length else ""
                if head and head.endswith(avoid):
                    continue
                points.append(CantorPoint(head, tail))
    width = depth + 1
    bits = np.zeros((len(points), width), dtype=np.uint8)
    for i, p in enumerate(points):
        for c in range(width):
            bits[i, c] = p.coordinate(c + 1)
    labels = [p.label for p in points]
    return bits, labels


def cantor_instance(depth: int) -> SpaceInstance:
    """Truncated binary-sequence space with the dense tail-0 subset Y."""
    bits, labels = cantor_prefix_bits(depth)
    metric = CantorMetric(bits)
    space = SpaceInstance(
        f"cantor_depth_{depth}", metric, resolution=2.0 ** -depth,
        labels=labels, family="cantor",
    )
    n0 = 1 << depth  # tail-0 block comes first in the enumeration
    y = np.zeros(space.n, dtype=bool)
    y[:n0] = True
    space.subsets["Y"] = SubsetMask(space, y)
    space.meta["depth"] = depth
    space.meta["points"] = [CantorPoint.from_label(lb) for lb in labels]
    space.meta["id_by_label"] = {lb: i for i, lb in enumerate(labels)}
    return space


def cantor_point_id(space: SpaceInstance, head: str, tail: int) -> int:
    """Id of the canonical point for (head, tail); errors if outside the space."""
    p = CantorPoint(head, tail)
    try:
        return space.meta["id_by_label"][p.label]
    except KeyError:
        raise ValidationError(f"point {p.label!r} is not in {space.name}") from None


def head_from_blocks(blocks) -> str:
    """Head word 1^{n_1} 0 1^{n_2} 0 ... for the given run lengths."""
    return "".join("1" * int(n) + "0" for n in blocks)


def parse_blocks(head: str) -> list:
    """Run lengths of ones in head followed by the infinite 0 tail.

    Appending one 0 closes the final run; the all-zero remainder contributes
    empty blocks only, which the weight function maps to 0.
    """
    runs = []
    count = 0
    for ch in head + "0":
        if ch == "1":
            count += 1
        else:
            runs.append(count)
            count = 0
    return runs


def block_parity_value(head: str) -> Fraction:
    """Exact weight sum(2 * (n_i mod 2) / 3^i) over the parsed blocks."""
    total = Fraction(0)
    for i, n in enumerate(parse_blocks(head), start=1):
        if n % 2:
            total += Fraction(2, 3**i)
    return total


def block_parity_field(space: SpaceInstance) -> ScalarField:
    """The continuous block-parity function on the tail-0 subset Y.

    Values are computed in exact ternary rationals and rounded once to
    floats.  Evaluation is undefined off Y (tail-1 points).
    """
    if space.family != "cantor" or "Y" not in space.subsets:
        raise PreconditionError("block_parity_field requires a cantor_instance space")
    y_mask = space.subsets["Y"]
    ids = y_mask.ids()
    points = space.meta["points"]
    vals = np.empty(ids.size)
    for k, i in enumerate(ids):
        p = points[int(i)]
        if p.tail != 0:
            raise PreconditionError("block-parity function is undefined on tail-1 points")
        vals[k] = float(block_parity_value(p.head))
    return ScalarField.on_ids(space, ids, vals)


# ---------------------------------------------------------------------------
# Ordinal ladders on the real line
# ---------------------------------------------------------------------------

def _build_cluster(rank, center, size, branching, positions, ranks):
    positions.append(center)
    ranks.append(rank)
    if rank == 0:
        return
    for j in range(1, branching + 1):
        offset = size * LADDER_RATIO**j
        _build_cluster(rank - 1, center + offset, offset * CLUSTER_SHRINK,
                       branching, positions, ranks)


def ordinal_instance(k: int, branching: int = 10) -> SpaceInstance:
    """Nested geometric ladders with derived-set depth exactly k.

    A rank-r cluster is its centre plus `branching` rank-(r-1) clusters
    accumulating at it geometrically.  The apex (rank k) has id 0.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if branching < 3:
        raise ValidationError("branching must be >= 3")
    positions: list = []
    ranks: list = []
    _build_cluster(k, 0.0, 1.0, branching, positions, ranks)
    coords = np.asarray(positions)
    order = np.argsort(coords)
    gaps = np.diff(coords[order])
    if np.any(gaps <= 0):
        raise ValidationError("ordinal ladder parameters collapse two points")
    space = SpaceInstance(
        f"ordinal_k{k}_b{branching}", EuclideanMetric(coords),
        resolution=float(gaps.min()), family="ordinal",
    )
    space.meta["true_ranks"] = np.asarray(ranks, dtype=np.int64)
    space.meta["apex"] = 0
    space.meta["k"] = k
    return space


def rank_parity_field(space: SpaceInstance) -> ScalarField:
    """Indicator-style calibration field: rank parity per point.

    For depth-1 instances this is exactly the apex indicator; deeper
    instances alternate so every rank level oscillates against the next.
    """
    ranks = space.meta.get("true_ranks")
    if ranks is None:
        raise PreconditionError("rank_parity_field requires an ordinal_instance space")
    return ScalarField(space.full_mask(), (ranks % 2).astype(np.float64))


def indicator_field(space: SpaceInstance, ones, domain: SubsetMask | None = None) -> ScalarField:
    """Field that is 1 on the given ids and 0 elsewhere on the domain."""
    domain = domain if domain is not None else space.full_mask()
    vals = np.zeros(space.n)
    for i in np.atleast_1d(np.asarray(ones, dtype=np.int64)):
        vals[space.check_id(int(i))] = 1.0
    return ScalarField(domain, np.where(domain.mask, vals, np.nan))


def scaled_position_field(space: SpaceInstance, gap_bound: float = 2.0**-9,
                          domain: SubsetMask | None = None) -> ScalarField:
    """Affine-in-position field scaled continuous at resolution.

    The scale is chosen so the largest value gap across a mutually visible
    pair (either point's 3x-nearest-neighbour ball reaching the other)
    stays below ``gap_bound``; the field then shows no oscillation at any
    epsilon above that, which is the working rendering of a continuous
    function on a truncated instance.
    """
    if space.metric.kind != "euclidean":
        raise PreconditionError("scaled_position_field requires a euclidean-backed space")
    domain = domain if domain is not None else space.full_mask()
    coords = space.metric.coords[:, 0]
    members = domain.ids()
    from .space import dists_among, local_scales

    ls, _ = local_scales(space, members)
    sub = dists_among(space, members)
    visible = sub < 3.0 * np.maximum(ls[:, None], ls[None, :])
    np.fill_diagonal(visible, False)
    gaps = np.abs(coords[members][:, None] - coords[members][None, :])
    worst = float(gaps[visible].max()) if visible.any() else 0.0
    scale = gap_bound / (2.0 * worst) if worst > 0 else 1.0
    return ScalarField(domain, np.where(domain.mask, coords * scale, np.nan))


# ---------------------------------------------------------------------------
# Small fixture spaces
# ---------------------------------------------------------------------------

def sequence_space(count: int = 10) -> SpaceInstance:
    """The truncated convergent sequence {0} union {1/n : n <= count}."""
    if count < 2:
        raise ValidationError("count must be >= 2")
    coords = np.array([0.0] + [1.0 / n for n in range(1, count + 1)])
    gaps = np.diff(np.sort(coords))
    space = SpaceInstance(
        f"sequence_{count}", EuclideanMetric(coords),
        resolution=float(gaps.min()), family="sequence",
    )
    space.meta["limit"] = 0
    return space


def adversarial_union_fixture():
    """Three points where the union law loses its only witness across the split.

    P = {y, far}, Q = {w}: w is y's only close witness, so the gap step on
    P union Q keeps y (and w) while the steps on P and on Q are both empty.
    Returns (space, f, P, Q, epsilon, policy_delta).
    """
    coords = np.array([0.0, 0.1, 10.0])  # y, w, far
    space = SpaceInstance("adversarial_union", EuclideanMetric(coords),
                          resolution=0.1, family="euclidean")
    space.subsets["P"] = space.mask_from_ids([0, 2])
    space.subsets["Q"] = space.mask_from_ids([1])
    f = ScalarField(space.full_mask(), np.array([0.0, 1.0, 0.0]))
    space.fields["f"] = f
    return space, f, space.subsets["P"], space.subsets["Q"], 0.5, 1.0


def random_instance(seed: int, n: int, dim: int = 2) -> SpaceInstance:
    """Seeded uniform points in the unit cube; resolution = smallest gap."""
    if n < 2:
        raise ValidationError("n must be >= 2")
    if dim < 1:
        raise ValidationError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    coords = rng.uniform(size=(n, dim))
    metric = EuclideanMetric(coords)
    if n <= 2048:
        best = np.inf
        for i in range(n):
            row = metric.dist_row(i)
            row[i] = np.inf
            best = min(best, float(row.min()))
    else:
        d, _ = metric.tree.query(coords, k=2, workers=-1)
        best = float(d[:, 1].min())
    return SpaceInstance(f"random_s{seed}_n{n}_d{dim}", metric,
                         resolution=best, family="euclidean")


def random_field(space: SpaceInstance, seed: int, domain: SubsetMask | None = None) -> ScalarField:
    """Seeded uniform values on the domain (default: all points)."""
    domain = domain if domain is not None else space.full_mask()
    rng = np.random.default_rng(seed)
    vals = rng.uniform(size=space.n)
    return ScalarField(domain, np.where(domain.mask, vals, np.nan))


# ---------------------------------------------------------------------------
# Generator specs ("cantor:8", "ordinal:2:5", "random:7:200:2", ...)
# ---------------------------------------------------------------------------

def generate_from_spec(spec: str) -> SpaceInstance:
    parts = spec.split(":")
    kind, args = parts[0], parts[1:]
    try:
        if kind == "cantor":
            space = cantor_instance(int(args[0]))
            space.fields["f"] = block_parity_field(space)
            return space
        if kind == "ordinal":
            k = int(args[0])
            branching = int(args[1]) if len(args) > 1 else 10
            space = ordinal_instance(k, branching)
            space.subsets["Y"] = space.full_mask()
            space.fields["f"] = rank_parity_field(space)
            space.fields["pos"] = scaled_position_field(space)
            return space
        if kind == "random":
            seed, n = int(args[0]), int(args[1])
            dim = int(args[2]) if len(args) > 2 else 2
            space = random_instance(seed, n, dim)
            space.subsets["Y"] = space.full_mask()
            space.fields["f"] = random_field(space, seed + 1)
            return space
        if kind == "sequence":
            count = int(args[0]) if args else 10
            space = sequence_space(count)
            space.subsets["Y"] = space.full_mask()
            space.fields["f"] = indicator_field(space, [space.meta["limit"]])
            return space
        if kind == "adversarial":
            space, _f, _p, _q, _eps, _delta = adversarial_union_fixture()
            return space
    except (IndexError, ValueError) as exc:
        raise ValidationError(f"bad generator spec {spec!r}: {exc}") from None
    raise ValidationError(f"unknown generator kind {kind!r}")
