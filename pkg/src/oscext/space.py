"""Finite metric spaces, point-set masks, scalar fields, and derived-set filtrations.

A space is a finite point set with a total metric given either as a dense
matrix, as Euclidean coordinates, or as the prefix metric on eventually
constant binary sequences.  All balls are open (strict inequality); ties at
exactly the radius are excluded.  Distances are ordinary 64-bit floats and
are compared exactly, so fixtures are built from dyadic or triadic rationals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import PreconditionError, ValidationError

EXHAUSTIVE_TRIANGLE_LIMIT = 500
TRIANGLE_SAMPLES_PER_POINT = 10
_EXACT_DIAMETER_LIMIT = 4096


# ---------------------------------------------------------------------------
# Metric backends
# ---------------------------------------------------------------------------

class MatrixMetric:
    """Dense pairwise distance matrix."""

    kind = "matrix"

    def __init__(self, data: np.ndarray):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.n = self.data.shape[0]

    def dist(self, i: int, j: int) -> float:
        return float(self.data[i, j])

    def dist_row(self, i: int) -> np.ndarray:
        return self.data[i]

    def ball_ids(self, center: int, radius: float) -> np.ndarray:
        return np.flatnonzero(self.data[center] < radius)

    def diameter(self) -> float:
        return float(self.data.max()) if self.n else 0.0


class EuclideanMetric:
    """Points in R^dim; ball queries go through a kd-tree."""

    kind = "euclidean"

    def __init__(self, coords: np.ndarray):
        self.coords = np.ascontiguousarray(coords, dtype=np.float64)
        if self.coords.ndim == 1:
            self.coords = self.coords[:, None]
        self.n = self.coords.shape[0]
        self._tree = None
        self._diameter = None

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.coords)
        return self._tree

    def dist(self, i: int, j: int) -> float:
        return float(np.sqrt(np.sum((self.coords[i] - self.coords[j]) ** 2)))

    def dist_row(self, i: int) -> np.ndarray:
        d = self.coords - self.coords[i]
        return np.sqrt(np.einsum("ij,ij->i", d, d))

    def ball_ids(self, center: int, radius: float) -> np.ndarray:
        # kd-tree queries are closed; re-filter for the open ball.
        cand = np.asarray(self.tree.query_ball_point(self.coords[center], radius), dtype=np.int64)
        if cand.size == 0:
            return cand
        d = self.coords[cand] - self.coords[center]
        dist = np.sqrt(np.einsum("ij,ij->i", d, d))
        return np.sort(cand[dist < radius])

    def diameter(self) -> float:
        if self._diameter is None:
            if self.n <= _EXACT_DIAMETER_LIMIT:
                best = 0.0
                for i in range(self.n):
                    best = max(best, float(self.dist_row(i).max()))
                self._diameter = best
            else:
                # Bounding-box diagonal: an upper bound, used only as the
                # finite stand-in for "infinite" caps on large instances.
                span = self.coords.max(axis=0) - self.coords.min(axis=0)
                self._diameter = float(np.sqrt(np.sum(span**2)))
        return self._diameter


class CantorMetric:
    """Prefix metric 2^-(first differing coordinate) on binary sequences.

    Each point is an eventually constant sequence stored as its first
    ``width`` coordinates; distinct points always differ within that window,
    so the metric is total.  Balls are prefix cylinders.
    """

    kind = "cantor"

    def __init__(self, prefix_bits: np.ndarray):
        self.bits = np.ascontiguousarray(prefix_bits, dtype=np.uint8)
        self.n, self.width = self.bits.shape
        # codes[c][i] packs the first c coordinates of point i.
        codes = np.zeros((self.width + 1, self.n), dtype=np.uint64)
        for c in range(1, self.width + 1):
            codes[c] = codes[c - 1] * np.uint64(2) + self.bits[:, c - 1]
        self.codes = codes

    def lcp_row(self, i: int) -> np.ndarray:
        """Length of the longest common prefix with every point."""
        diff = self.bits != self.bits[i]
        any_diff = diff.any(axis=1)
        first = diff.argmax(axis=1)
        return np.where(any_diff, first, self.width)

    def dist(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        diff = np.flatnonzero(self.bits[i] != self.bits[j])
        if diff.size == 0:
            return 0.0
        return float(2.0 ** -(diff[0] + 1.0))

    def dist_row(self, i: int) -> np.ndarray:
        lcp = self.lcp_row(i)
        d = 2.0 ** -(lcp + 1.0)
        d[i] = 0.0
        return d

    @staticmethod
    def cylinder_length(radius: float) -> int:
        """Smallest c with 2^-(c+1) < radius: the open ball is the c-cylinder."""
        if radius > 0.5:
            return 0
        c = int(np.ceil(-np.log2(radius))) - 1
        c = max(c, 0)
        while 2.0 ** -(c + 1) >= radius:
            c += 1
        while c > 0 and 2.0 ** -c < radius:
            c -= 1
        return c

    def ball_ids(self, center: int, radius: float) -> np.ndarray:
        c = self.cylinder_length(radius)
        if c == 0:
            return np.arange(self.n, dtype=np.int64)
        if c > self.width:
            c = self.width
        return np.flatnonzero(self.codes[c] == self.codes[c][center])

    def diameter(self) -> float:
        for c in range(self.width + 1):
            if np.unique(self.codes[min(c + 1, self.width)]).size > 1:
                return float(2.0 ** -(c + 1))
        return 0.0


# ---------------------------------------------------------------------------
# Space, masks, fields
# ---------------------------------------------------------------------------

class SpaceInstance:
    """A finite metric space with a resolution floor.

    ``family`` records how the instance was generated ('cantor', 'ordinal',
    'sequence', 'euclidean', 'matrix'); the scattered construction uses it to
    recognise the clopen-at-resolution families.
    """

    def __init__(self, name, metric, resolution, labels=None, family=None, validate=True):
        if resolution <= 0 or not np.isfinite(resolution):
            raise ValidationError(f"resolution must be a positive real, got {resolution}")
        self.name = str(name)
        self.metric = metric
        self.resolution = float(resolution)
        self.n = metric.n
        self.labels = list(labels) if labels is not None else None
        self.family = family or metric.kind
        self.subsets: dict[str, SubsetMask] = {}
        self.fields: dict[str, ScalarField] = {}
        self.meta: dict = {}
        if validate and metric.kind == "matrix":
            _validate_matrix(self.metric.data)

    def check_id(self, i: int) -> int:
        i = int(i)
        if not 0 <= i < self.n:
            raise ValidationError(f"unknown point id {i} (space has {self.n} points)")
        return i

    def dist(self, i: int, j: int) -> float:
        return self.metric.dist(self.check_id(i), self.check_id(j))

    def diameter(self) -> float:
        return self.metric.diameter()

    def full_mask(self) -> "SubsetMask":
        return SubsetMask(self, np.ones(self.n, dtype=bool))

    def empty_mask(self) -> "SubsetMask":
        return SubsetMask(self, np.zeros(self.n, dtype=bool))

    def mask_from_ids(self, ids) -> "SubsetMask":
        m = np.zeros(self.n, dtype=bool)
        for i in np.asarray(ids, dtype=np.int64).ravel():
            m[self.check_id(i)] = True
        return SubsetMask(self, m)

    def __repr__(self):
        return f"SpaceInstance({self.name!r}, n={self.n}, metric={self.metric.kind}, resolution={self.resolution})"


class SubsetMask:
    """An immutable subset of the points of one space."""

    __slots__ = ("space", "mask", "_ids")

    def __init__(self, space: SpaceInstance, mask: np.ndarray):
        self.space = space
        m = np.asarray(mask, dtype=bool)
        if m.shape != (space.n,):
            raise ValidationError(f"mask length {m.shape} does not match space size {space.n}")
        m = m.copy()
        m.setflags(write=False)
        self.mask = m
        self._ids = None

    def ids(self) -> np.ndarray:
        if self._ids is None:
            self._ids = np.flatnonzero(self.mask)
        return self._ids

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    def __len__(self):
        return self.size

    def __contains__(self, i):
        return bool(self.mask[int(i)])

    def is_empty(self) -> bool:
        return not self.mask.any()

    def same_space(self, other: "SubsetMask"):
        if self.space is not other.space:
            raise ValidationError("masks are bound to different spaces")

    def __eq__(self, other):
        if not isinstance(other, SubsetMask):
            return NotImplemented
        return self.space is other.space and bool(np.array_equal(self.mask, other.mask))

    def __hash__(self):
        return hash((id(self.space), self.mask.tobytes()))

    def issubset(self, other: "SubsetMask") -> bool:
        self.same_space(other)
        return bool(np.all(~self.mask | other.mask))

    def __and__(self, other):
        self.same_space(other)
        return SubsetMask(self.space, self.mask & other.mask)

    def __or__(self, other):
        self.same_space(other)
        return SubsetMask(self.space, self.mask | other.mask)

    def __sub__(self, other):
        self.same_space(other)
        return SubsetMask(self.space, self.mask & ~other.mask)

    def __repr__(self):
        return f"SubsetMask({self.size}/{self.space.n} points of {self.space.name!r})"


class ScalarField:
    """A finite real value per point of a domain mask.

    Values are stored in a full-length array with NaN off the domain, which
    keeps arithmetic and restriction cheap.
    """

    __slots__ = ("space", "domain", "values")

    def __init__(self, domain: SubsetMask, values: np.ndarray):
        self.space = domain.space
        self.domain = domain
        v = np.asarray(values, dtype=np.float64)
        if v.shape != (self.space.n,):
            raise ValidationError("field values must be a full-length array")
        if not np.all(np.isfinite(v[domain.mask])):
            raise ValidationError("field has a non-finite value on its domain")
        v = v.copy()
        v[~domain.mask] = np.nan
        v.setflags(write=False)
        self.values = v

    @classmethod
    def on_ids(cls, space: SpaceInstance, ids, values) -> "ScalarField":
        ids = np.asarray(ids, dtype=np.int64)
        vals = np.asarray(values, dtype=np.float64)
        if ids.shape != vals.shape:
            raise ValidationError("domain ids and values must align")
        full = np.full(space.n, np.nan)
        full[ids] = vals
        return cls(space.mask_from_ids(ids), full)

    @classmethod
    def constant(cls, domain: SubsetMask, value: float) -> "ScalarField":
        full = np.full(domain.space.n, np.nan)
        full[domain.mask] = float(value)
        return cls(domain, full)

    def value(self, i: int) -> float:
        i = self.space.check_id(i)
        if not self.domain.mask[i]:
            raise PreconditionError(f"point {i} is outside the field domain")
        return float(self.values[i])

    def on(self, mask: SubsetMask) -> np.ndarray:
        """Values over the members of ``mask`` (which must lie in the domain)."""
        if not mask.issubset(self.domain):
            raise PreconditionError("mask is not contained in the field domain")
        return self.values[mask.mask]

    def restrict(self, mask: SubsetMask) -> "ScalarField":
        if not mask.issubset(self.domain):
            raise PreconditionError("restriction target is not contained in the domain")
        return ScalarField(mask, self.values)

    def norm(self) -> float:
        if self.domain.is_empty():
            return 0.0
        return float(np.max(np.abs(self.values[self.domain.mask])))

    def __add__(self, other: "ScalarField") -> "ScalarField":
        self.domain.same_space(other.domain)
        dom = self.domain & other.domain
        return ScalarField(dom, np.where(dom.mask, self.values + other.values, np.nan))

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        self.domain.same_space(other.domain)
        dom = self.domain & other.domain
        return ScalarField(dom, np.where(dom.mask, self.values - other.values, np.nan))

    def __repr__(self):
        return f"ScalarField(on {self.domain.size} points of {self.space.name!r})"


# ---------------------------------------------------------------------------
# Scale policies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedScale:
    """One global ball radius."""

    delta: float

    def __post_init__(self):
        if self.delta <= 0:
            raise ValidationError("fixed scale must be positive")

    def radii(self, space: SpaceInstance, members: np.ndarray) -> np.ndarray:
        return np.full(members.size, self.delta)

    def describe(self) -> str:
        return f"fixed:{self.delta}"


@dataclass(frozen=True)
class AdaptiveScale:
    """Per-point radius: multiplier times the nearest-neighbour distance."""

    multiplier: float = 3.0

    def __post_init__(self):
        if self.multiplier < 1:
            raise ValidationError("adaptive multiplier must be >= 1")

    def radii(self, space: SpaceInstance, members: np.ndarray) -> np.ndarray:
        ls, _ = local_scales(space, members)
        return self.multiplier * ls

    def describe(self) -> str:
        return f"adaptive:{self.multiplier}"


def parse_policy(text: str):
    try:
        kind, _, arg = text.partition(":")
        if kind == "fixed":
            return FixedScale(float(arg))
        if kind == "adaptive":
            return AdaptiveScale(float(arg) if arg else 3.0)
    except ValidationError:
        raise
    except Exception as exc:
        raise ValidationError(f"bad scale policy {text!r}: {exc}") from None
    raise ValidationError(f"bad scale policy {text!r} (expected fixed:DELTA or adaptive:MULT)")


# ---------------------------------------------------------------------------
# Core point operations
# ---------------------------------------------------------------------------

def ball(space: SpaceInstance, center: int, radius: float, within: SubsetMask) -> SubsetMask:
    """Open ball around ``center`` intersected with ``within``."""
    if within.space is not space:
        raise ValidationError("mask is bound to a different space")
    center = space.check_id(center)
    if radius <= 0:
        return space.empty_mask()
    ids = space.metric.ball_ids(center, radius)
    out = np.zeros(space.n, dtype=bool)
    out[ids] = within.mask[ids]
    return SubsetMask(space, out)


def local_scales(space: SpaceInstance, members: np.ndarray):
    """Nearest-other-member distance and the neighbour's id, per member.

    Isolated members (a singleton set) get scale 0 and neighbour -1.
    Nearest-neighbour ties break to the smallest id, so results are
    reproducible across backends.
    """
    m = np.asarray(members, dtype=np.int64)
    k = m.size
    ls = np.zeros(k)
    nn = np.full(k, -1, dtype=np.int64)
    if k < 2:
        return ls, nn
    metric = space.metric
    if metric.kind == "cantor":
        best_c = np.full(k, -1, dtype=np.int64)
        width = metric.width
        for c in range(width, 0, -1):
            codes = metric.codes[c][m]
            _, inv, counts = np.unique(codes, return_inverse=True, return_counts=True)
            shared = counts[inv] >= 2
            fill = shared & (best_c < 0)
            best_c[fill] = c
        # Companions exist for every member once c = 0 is reached.
        best_c[best_c < 0] = 0
        ls = 2.0 ** -(best_c + 1.0)
        for idx in range(k):
            c = int(best_c[idx])
            codes = metric.codes[c][m] if c > 0 else np.zeros(k, dtype=np.uint64)
            mates = np.flatnonzero(codes == codes[idx])
            mates = mates[mates != idx]
            nn[idx] = int(m[mates].min())
        return ls, nn
    if metric.kind == "euclidean" and k > 2048:
        tree = cKDTree(metric.coords[m])
        kq = min(4, k)
        d, j = tree.query(metric.coords[m], k=kq, workers=-1)
        ls = d[:, 1].copy()
        nn_local = j[:, 1].copy()
        # Resolve exact-distance ties to the smallest id.
        for col in range(2, kq):
            tie = d[:, col] == ls
            better = tie & (m[j[:, col]] < m[nn_local])
            nn_local[better] = j[better, col]
        nn = m[nn_local]
        return ls, nn
    sub = dists_among(space, m)
    np.fill_diagonal(sub, np.inf)
    ls = sub.min(axis=1)
    tie = sub == ls[:, None]
    nn = np.where(tie, m[None, :], np.iinfo(np.int64).max).min(axis=1)
    return ls, nn


def dists_among(space: SpaceInstance, members: np.ndarray) -> np.ndarray:
    """Dense pairwise distances among a (smallish) member set."""
    m = np.asarray(members, dtype=np.int64)
    metric = space.metric
    if metric.kind == "matrix":
        return metric.data[np.ix_(m, m)].copy()
    if metric.kind == "euclidean":
        c = metric.coords[m]
        diff = c[:, None, :] - c[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    out = np.empty((m.size, m.size))
    for idx, i in enumerate(m):
        out[idx] = metric.dist_row(int(i))[m]
    return out


def local_scale(space: SpaceInstance, x: int, within: SubsetMask) -> float:
    """Distance from ``x`` to the nearest other member of ``within`` (0 if none)."""
    x = space.check_id(x)
    if x not in within:
        raise PreconditionError(f"point {x} is not a member of the mask")
    members = within.ids()
    if members.size < 2:
        return 0.0
    row = space.metric.dist_row(x)[members]
    row[members == x] = np.inf
    return float(row.min())


def nearest_in(space: SpaceInstance, x: int, target: SubsetMask):
    """Nearest member of ``target`` to ``x`` (ties to smallest id); (id, dist)."""
    ids = target.ids()
    if ids.size == 0:
        return -1, np.inf
    row = space.metric.dist_row(space.check_id(x))[ids]
    j = int(np.argmin(row))
    return int(ids[j]), float(row[j])


def delta_limit_points(space: SpaceInstance, A: SubsetMask, scale: float) -> SubsetMask:
    """Members of A having another member strictly within ``scale``."""
    if scale <= 0:
        raise ValidationError("scale must be positive")
    members = A.ids()
    if members.size == 0:
        return space.empty_mask()
    ls, _ = local_scales(space, members)
    keep = members[(ls > 0) & (ls < scale)]
    return space.mask_from_ids(keep)


# ---------------------------------------------------------------------------
# Derived-set filtration
# ---------------------------------------------------------------------------

@dataclass
class ScatteredDecomposition:
    """Iterated derived-set structure: per-point depth and isolation radius."""

    space: SpaceInstance
    filtration: list  # decreasing list of SubsetMask, first level = A
    ranks: np.ndarray  # -1 outside A
    iso_radius: np.ndarray  # delta_x; +inf when a level is a singleton
    terminal: tuple  # ("emptied" | "saturated", step)

    @property
    def emptied(self) -> bool:
        return self.terminal[0] == "emptied"

    def rank_of(self, i: int) -> int:
        return int(self.ranks[i])


def _adaptive_survivors(space, members, multiplier):
    """Members whose nearest neighbour lives at a strictly finer scale.

    x survives when its nearest neighbour y satisfies
    multiplier * local_scale(y) < d(x, y): y's own adaptive ball has moved
    on past x, so structure keeps refining towards x.  Companion points at
    comparable scale eliminate each other, which makes the iteration
    strictly decreasing.
    """
    ls, nn = local_scales(space, members)
    if members.size < 2:
        return members[:0]
    pos = {int(p): idx for idx, p in enumerate(members)}
    nn_ls = np.array([ls[pos[int(y)]] for y in nn])
    keep = multiplier * nn_ls < ls
    return members[keep]


def cb_filtration(space: SpaceInstance, A: SubsetMask, policy) -> ScatteredDecomposition:
    """Iterate the derived-set surrogate until empty or a fixed point.

    Fixed policy: keep points with another member strictly within delta.
    Adaptive policy: keep points whose nearest neighbour is strictly finer
    scaled (see _adaptive_survivors); this recovers the ranks of the shipped
    truncated-convergence fixtures where a fixed radius saturates.
    """
    if A.is_empty():
        raise PreconditionError("cb_filtration requires a nonempty starting set")
    ranks = np.full(space.n, -1, dtype=np.int64)
    iso = np.full(space.n, np.nan)
    levels = [A]
    current = A
    terminal = None
    for step in range(space.n + 1):
        members = current.ids()
        if isinstance(policy, FixedScale):
            nxt_ids = delta_limit_points(space, current, policy.delta).ids()
        else:
            nxt_ids = _adaptive_survivors(space, members, policy.multiplier)
        nxt = space.mask_from_ids(nxt_ids)
        if nxt == current:
            terminal = ("saturated", step)
            break
        dropped = np.setdiff1d(members, nxt_ids, assume_unique=True)
        ls, _ = local_scales(space, members)
        pos = {int(p): idx for idx, p in enumerate(members)}
        for p in dropped:
            ranks[p] = step
            d = ls[pos[int(p)]]
            iso[p] = d if d > 0 else np.inf
        if nxt.is_empty():
            terminal = ("emptied", step + 1)
            break
        levels.append(nxt)
        current = nxt
    if terminal is None:  # strictly decreasing loop must have ended already
        terminal = ("saturated", len(levels) - 1)
    return ScatteredDecomposition(space, levels, ranks, iso, terminal)


# ---------------------------------------------------------------------------
# Instance documents (JSON schema)
# ---------------------------------------------------------------------------

def _validate_matrix(data: np.ndarray):
    n = data.shape[0]
    if data.shape != (n, n):
        raise ValidationError("metric matrix must be square")
    if not np.all(np.isfinite(data)):
        raise ValidationError("metric matrix has non-finite entries")
    if np.any(np.diag(data) != 0):
        i = int(np.flatnonzero(np.diag(data))[0])
        raise ValidationError(f"metric({i},{i}) must be 0")
    if not np.array_equal(data, data.T):
        i, j = np.argwhere(data != data.T)[0]
        raise ValidationError(f"metric is not symmetric at ({i},{j})")
    off = data + np.eye(n)  # lift the diagonal so the positivity scan skips it
    if np.any(off <= 0):
        i, j = np.argwhere(off <= 0)[0]
        raise ValidationError(f"metric({i},{j}) must be positive for distinct points")
    if n <= EXHAUSTIVE_TRIANGLE_LIMIT:
        for i in range(n):
            slack = data[:, [i]] + data[[i], :]
            bad = np.argwhere(data > slack + 0.0)
            if bad.size:
                j, k = bad[0]
                raise ValidationError(
                    f"triangle inequality fails for triple ({j},{i},{k}): "
                    f"d({j},{k})={data[j,k]} > d({j},{i})+d({i},{k})={slack[j,k]}"
                )
    else:
        rng = np.random.default_rng(20260808)
        trips = rng.integers(0, n, size=(TRIANGLE_SAMPLES_PER_POINT * n, 3))
        d_jk = data[trips[:, 0], trips[:, 2]]
        d_ji = data[trips[:, 0], trips[:, 1]]
        d_ik = data[trips[:, 1], trips[:, 2]]
        bad = np.flatnonzero(d_jk > d_ji + d_ik)
        if bad.size:
            j, i, k = trips[bad[0]]
            raise ValidationError(f"triangle inequality fails for sampled triple ({j},{i},{k})")


def _require(cond, msg):
    if not cond:
        raise ValidationError(msg)


def load_space(doc: dict) -> SpaceInstance:
    """Build a validated SpaceInstance from an instance document."""
    _require(isinstance(doc, dict), "instance document must be an object")
    for key in ("name", "resolution", "points", "metric"):
        _require(key in doc, f"instance document is missing {key!r}")
    points = doc["points"]
    _require(isinstance(points, list) and points, "points must be a nonempty list")
    n = len(points)
    ids = [p.get("id") for p in points]
    _require(sorted(ids) == list(range(n)), "point ids must be dense 0..n-1")
    labels = None
    if any("label" in p for p in points):
        by_id = sorted(points, key=lambda p: p["id"])
        labels = [str(p.get("label", "")) for p in by_id]

    spec = doc["metric"]
    _require(isinstance(spec, dict) and "type" in spec, "metric must declare a type")
    mtype = spec["type"]
    if mtype == "matrix":
        data = np.asarray(spec.get("data"), dtype=np.float64)
        _require(data.shape == (n, n), "metric matrix shape must match the point count")
        metric = MatrixMetric(data)
        family = "matrix"
    elif mtype == "euclidean":
        coords = np.asarray(spec.get("coords"), dtype=np.float64)
        _require(coords.shape[0] == n, "coordinate count must match the point count")
        _require(np.all(np.isfinite(coords)), "coordinates must be finite")
        metric = EuclideanMetric(coords)
        family = "euclidean"
    elif mtype == "cantor":
        depth = spec.get("depth")
        _require(isinstance(depth, int) and depth >= 2, "cantor depth must be an integer >= 2")
        from .instances import cantor_prefix_bits  # local import to avoid a cycle

        bits, canon_labels = cantor_prefix_bits(depth)
        _require(bits.shape[0] == n, f"cantor depth {depth} has {bits.shape[0]} points, document lists {n}")
        metric = CantorMetric(bits)
        if labels is None:
            labels = canon_labels
        family = "cantor"
    else:
        raise ValidationError(f"unknown metric type {mtype!r}")

    space = SpaceInstance(doc["name"], metric, doc["resolution"], labels=labels, family=family)
    if mtype == "cantor":
        from .instances import CantorPoint

        space.meta["depth"] = spec["depth"]
        space.meta["points"] = [CantorPoint.from_label(lb) for lb in labels]
        space.meta["id_by_label"] = {lb: i for i, lb in enumerate(labels)}

    for name, id_list in (doc.get("subsets") or {}).items():
        space.subsets[name] = space.mask_from_ids(id_list)
    for name, fdoc in (doc.get("fields") or {}).items():
        _require(isinstance(fdoc, dict) and "domain" in fdoc and "values" in fdoc,
                 f"field {name!r} must carry domain and values")
        _require(len(fdoc["domain"]) == len(fdoc["values"]),
                 f"field {name!r} domain/values length mismatch")
        space.fields[name] = ScalarField.on_ids(space, fdoc["domain"], fdoc["values"])
    return space


def load_space_file(path) -> SpaceInstance:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read instance file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"instance file {path} is not valid JSON: {exc}") from None
    return load_space(doc)


def space_to_document(space: SpaceInstance, subsets=None, fields=None) -> dict:
    """Serialize back to the instance schema (metric emitted per backend)."""
    points = []
    for i in range(space.n):
        p = {"id": i}
        if space.labels is not None:
            p["label"] = space.labels[i]
        points.append(p)
    metric = space.metric
    if metric.kind == "matrix":
        mdoc = {"type": "matrix", "data": metric.data.tolist()}
    elif metric.kind == "euclidean":
        mdoc = {"type": "euclidean", "coords": metric.coords.tolist()}
    else:
        mdoc = {"type": "cantor", "depth": metric.width - 1}
    doc = {
        "name": space.name,
        "resolution": space.resolution,
        "points": points,
        "metric": mdoc,
    }
    subsets = subsets if subsets is not None else space.subsets
    fields = fields if fields is not None else space.fields
    if subsets:
        doc["subsets"] = {name: [int(i) for i in m.ids()] for name, m in subsets.items()}
    if fields:
        doc["fields"] = {
            name: {
                "domain": [int(i) for i in f.domain.ids()],
                "values": [float(v) for v in f.values[f.domain.mask]],
            }
            for name, f in fields.items()
        }
    return doc
