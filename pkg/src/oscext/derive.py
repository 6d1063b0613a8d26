"""Oscillation quantities and the iterated derivation operators.

Two one-step operators act on a subset P of the domain of a field f, both
reading one open ball per point whose radius comes from the scale policy:

* pair_step keeps x when some pair inside its ball differs by >= epsilon
  (the two-witness derivation behind the oscillation index);
* gap_step keeps y when some ball member differs from f(y) by >= epsilon
  (the single-witness variant; its closure step is the identity here since
  finite sets are closed).

Iterating either operator yields a decreasing trace that either empties or
reaches a fixed point (saturates).  Index profiles record, per epsilon, the
step at which the pair-step trace empties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import PreconditionError, ValidationError
from .space import (
    AdaptiveScale,
    FixedScale,
    ScalarField,
    SubsetMask,
    ball,
    dists_among,
)

_DENSE_MEMBER_LIMIT = 3000
_ENGINE_MIN_MEMBERS = 4096


# ---------------------------------------------------------------------------
# Oscillation
# ---------------------------------------------------------------------------

def osc_on_set(f: ScalarField, A: SubsetMask) -> float:
    """Largest pairwise |f difference| over A; 0 when |A| <= 1."""
    vals = f.on(A)
    if vals.size <= 1:
        return 0.0
    return float(vals.max() - vals.min())


def osc_at_point(f: ScalarField, x: int, Y: SubsetMask, scale: float) -> float:
    """Oscillation of f over the open ball around x within Y.

    The resolution surrogate of the shrinking-ball limit; 0 when the ball
    misses Y.  x itself need not belong to Y.
    """
    if scale <= 0:
        raise ValidationError("scale must be positive")
    if not Y.issubset(f.domain):
        raise PreconditionError("Y is not contained in the field domain")
    return osc_on_set(f, ball(Y.space, x, scale, Y))


# ---------------------------------------------------------------------------
# One-step operators
# ---------------------------------------------------------------------------

def _ball_extremes(space, members, radii, fvals):
    """Per member: max and min of f over its open ball among the members.

    Empty balls yield max < min so every gap test fails for them.
    """
    k = members.size
    metric = space.metric
    if metric.kind == "cantor":
        width = metric.width
        maxv = np.full(k, -np.inf)
        minv = np.full(k, np.inf)
        creq = np.empty(k, dtype=np.int64)
        for i in range(k):
            if radii[i] <= 0:
                creq[i] = width + 1  # empty ball sentinel
            else:
                creq[i] = min(metric.cylinder_length(radii[i]), width)
        for c in np.unique(creq):
            sel = creq == c
            if c > width:
                continue
            codes = metric.codes[int(c)][members]
            _, inv = np.unique(codes, return_inverse=True)
            gmax = np.full(inv.max() + 1, -np.inf)
            gmin = np.full(inv.max() + 1, np.inf)
            np.maximum.at(gmax, inv, fvals)
            np.minimum.at(gmin, inv, fvals)
            maxv[sel] = gmax[inv[sel]]
            minv[sel] = gmin[inv[sel]]
        return maxv, minv
    if metric.kind == "euclidean" and k > _DENSE_MEMBER_LIMIT:
        coords = metric.coords[members]
        tree = cKDTree(coords)
        lists = tree.query_ball_point(coords, r=np.maximum(radii, 0.0), workers=-1)
        lengths = np.fromiter((len(l) for l in lists), dtype=np.int64, count=k)
        flat = np.concatenate([np.asarray(l, dtype=np.int64) for l in lists]) if lengths.sum() else np.empty(0, dtype=np.int64)
        seg = np.repeat(np.arange(k), lengths)
        diff = coords[flat] - coords[seg]
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        keep = dist < radii[seg]  # kd queries are closed; re-filter strictly
        maxv = np.full(k, -np.inf)
        minv = np.full(k, np.inf)
        np.maximum.at(maxv, seg[keep], fvals[flat[keep]])
        np.minimum.at(minv, seg[keep], fvals[flat[keep]])
        return maxv, minv
    sub = dists_among(space, members)
    inside = sub < radii[:, None]
    maxv = np.where(inside, fvals[None, :], -np.inf).max(axis=1)
    minv = np.where(inside, fvals[None, :], np.inf).min(axis=1)
    return maxv, minv


def _step_keep(space, members, radii, fvals, epsilon, kind):
    maxv, minv = _ball_extremes(space, members, radii, fvals)
    if kind == "pair":
        return (maxv - minv) >= epsilon
    gap = np.maximum(maxv - fvals, fvals - minv)
    return gap >= epsilon


def _check_step_args(f, epsilon, P):
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    if not P.issubset(f.domain):
        raise PreconditionError("P is not contained in the field domain")


def pair_step(f: ScalarField, epsilon: float, P: SubsetMask, policy) -> SubsetMask:
    """Members of P whose policy ball contains a pair with f-gap >= epsilon.

    Isolated members get radius 0 under the adaptive policy and never
    qualify.
    """
    _check_step_args(f, epsilon, P)
    space = P.space
    members = P.ids()
    if members.size == 0:
        return space.empty_mask()
    radii = policy.radii(space, members)
    keep = _step_keep(space, members, radii, f.values[members], epsilon, "pair")
    return space.mask_from_ids(members[keep])


def gap_step(f: ScalarField, epsilon: float, P: SubsetMask, policy) -> SubsetMask:
    """Members of P with a single ball witness at f-gap >= epsilon from them."""
    _check_step_args(f, epsilon, P)
    space = P.space
    members = P.ids()
    if members.size == 0:
        return space.empty_mask()
    radii = policy.radii(space, members)
    keep = _step_keep(space, members, radii, f.values[members], epsilon, "gap")
    return space.mask_from_ids(members[keep])


_STEPS = {"pair": pair_step, "gap": gap_step}


# ---------------------------------------------------------------------------
# Iteration
# ---------------------------------------------------------------------------

@dataclass
class DerivationTrace:
    """Record of an iterated derivation: every level, down to the terminal.

    terminal is ("emptied", n) with levels[n] empty, ("saturated", n) when
    levels[n] is a nonempty fixed point, or ("truncated", n) when a caller
    supplied max_steps cut the run short.
    """

    kind: str
    epsilon: float
    policy: object
    levels: list
    terminal: tuple

    @property
    def index(self):
        """The finite emptying step, or None when saturated/truncated."""
        return self.terminal[1] if self.terminal[0] == "emptied" else None

    def level(self, n: int) -> SubsetMask:
        """Level n, with levels past the end frozen at the terminal set."""
        if n < len(self.levels):
            return self.levels[n]
        return self.levels[-1]

    def level_sizes(self):
        return [lvl.size for lvl in self.levels]


def iterate(kind: str, f: ScalarField, epsilon: float, P: SubsetMask, policy,
            max_steps: int | None = None) -> DerivationTrace:
    """Apply the chosen step until empty, a fixed point, or max_steps.

    max_steps defaults to |P| + 1, which the strictly decreasing levels can
    never exhaust; smaller values may truncate.
    """
    if kind not in _STEPS:
        raise ValidationError(f"unknown derivation kind {kind!r}")
    _check_step_args(f, epsilon, P)
    if max_steps is None:
        max_steps = P.size + 1
    if max_steps < 1:
        raise ValidationError("max_steps must be >= 1")
    if P.is_empty():
        return DerivationTrace(kind, epsilon, policy, [P], ("emptied", 0))
    space = P.space
    if (
        kind == "pair"
        and space.metric.kind == "euclidean"
        and P.size >= _ENGINE_MIN_MEMBERS
        and (isinstance(policy, FixedScale)
             or (isinstance(policy, AdaptiveScale) and policy.multiplier > 1))
    ):
        return _iterate_engine(f, epsilon, P, policy, max_steps)
    step = _STEPS[kind]
    levels = [P]
    current = P
    terminal = None
    for n in range(max_steps):
        nxt = step(f, epsilon, current, policy)
        if nxt == current:
            terminal = ("saturated", n)
            break
        levels.append(nxt)
        current = nxt
        if nxt.is_empty():
            terminal = ("emptied", n + 1)
            break
    if terminal is None:
        terminal = ("truncated", len(levels) - 1)
    return DerivationTrace(kind, epsilon, policy, levels, terminal)


def _iterate_engine(f, epsilon, P, policy, max_steps):
    """Incremental pair-step iteration for large Euclidean member sets.

    A member's verdict can only change when its ball loses a member; under
    an adaptive multiplier > 1 the nearest neighbour always lies inside the
    ball, so a radius change is also triggered by a ball removal.  Only
    those dirty members are re-evaluated each level, against a static
    kd-tree filtered by the alive mask.
    """
    space = P.space
    members = P.ids()
    nm = members.size
    coords = space.metric.coords[members]
    tree = cKDTree(coords)
    fvals = f.values[members]
    adaptive = isinstance(policy, AdaptiveScale)
    if adaptive:
        kq = min(32, nm)
        knn_d, knn_j = tree.query(coords, k=kq, workers=-1)

    alive = np.ones(nm, dtype=bool)
    verdict = np.zeros(nm, dtype=bool)
    ball_of = [None] * nm
    rev: list = [[] for _ in range(nm)]

    def local_scale_of(i):
        row_j = knn_j[i]
        row_d = knn_d[i]
        for col in range(1, row_j.shape[0]):
            j = row_j[col]
            if alive[j]:
                return row_d[col]
        cand = np.flatnonzero(alive)
        cand = cand[cand != i]
        if cand.size == 0:
            return 0.0
        diff = coords[cand] - coords[i]
        return float(np.sqrt(np.einsum("ij,ij->i", diff, diff)).min())

    def refresh(idx):
        if idx.size == 0:
            return
        if adaptive:
            radii = np.array([policy.multiplier * local_scale_of(int(i)) for i in idx])
        else:
            radii = np.full(idx.size, policy.delta)
        lists = tree.query_ball_point(coords[idx], r=np.maximum(radii, 0.0), workers=-1)
        for pos, i in enumerate(idx):
            cand = np.asarray(lists[pos], dtype=np.int64)
            cand = cand[alive[cand]]
            if cand.size:
                diff = coords[cand] - coords[i]
                dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
                cand = cand[dist < radii[pos]]
            ball_of[i] = cand
            for y in cand:
                rev[y].append(i)
            if cand.size:
                bv = fvals[cand]
                verdict[i] = (bv.max() - bv.min()) >= epsilon
            else:
                verdict[i] = False

    levels = [P]
    dirty = np.flatnonzero(alive)
    terminal = None
    for n in range(max_steps):
        refresh(dirty)
        removed = np.flatnonzero(alive & ~verdict)
        if removed.size == 0:
            terminal = ("saturated", n)
            break
        alive[removed] = False
        levels.append(space.mask_from_ids(members[np.flatnonzero(alive)]))
        if not alive.any():
            terminal = ("emptied", n + 1)
            break
        touched = set()
        for y in removed:
            stale = rev[y]
            rev[y] = []
            for x in stale:
                if alive[x]:
                    touched.add(int(x))
        dirty = np.fromiter(touched, dtype=np.int64, count=len(touched))
        dirty.sort()
    if terminal is None:
        terminal = ("truncated", len(levels) - 1)
    return DerivationTrace("pair", epsilon, policy, levels, terminal)


# ---------------------------------------------------------------------------
# Index profiles
# ---------------------------------------------------------------------------

@dataclass
class ProfileEntry:
    epsilon: float
    index: int | None  # None means SATURATED at this epsilon
    level_sizes: list

    @property
    def saturated(self) -> bool:
        return self.index is None


@dataclass
class IndexProfile:
    entries: list
    policy: object

    def index_at(self, epsilon: float):
        for e in self.entries:
            if e.epsilon == epsilon:
                return e.index
        raise KeyError(epsilon)

    def csv_rows(self):
        rows = []
        for e in self.entries:
            label = "SATURATED" if e.saturated else str(e.index)
            rows.append((repr(e.epsilon), label, ";".join(str(s) for s in e.level_sizes)))
        return rows


def index_profile(f: ScalarField, P: SubsetMask, policy, epsilon_grid) -> IndexProfile:
    """Emptying step of the pair-step trace for every epsilon in the grid."""
    grid = [float(e) for e in epsilon_grid]
    if not grid:
        raise ValidationError("epsilon grid must be nonempty")
    if any(b >= a for a, b in zip(grid, grid[1:])) or any(e <= 0 for e in grid):
        raise ValidationError("epsilon grid must be positive and strictly decreasing")
    entries = []
    for eps in grid:
        tr = iterate("pair", f, eps, P, policy)
        entries.append(ProfileEntry(eps, tr.index, tr.level_sizes()))
    return IndexProfile(entries, policy)


# ---------------------------------------------------------------------------
# Inclusion laws
# ---------------------------------------------------------------------------

@dataclass
class InclusionReport:
    """Level-by-level verdicts for the derivation inclusion laws.

    sum_split (one step) and the bracket chain (every level) are the hard
    laws; the union law and the doubled-step sum law are soft: with one
    ball per point they can genuinely fail, so violations are counted and
    reported, never raised.
    """

    epsilon: float
    depth: int
    policy: object
    sum_split_ok: bool
    sum_split_violations: list
    bracket_levels: list  # per level n: (lower_ok, upper_ok)
    union_violations: int | None
    union_violating_ids: list
    doubled_sum_violations: list  # (n, count)

    @property
    def bracket_ok(self) -> bool:
        return all(lo and up for lo, up in self.bracket_levels)

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "depth": self.depth,
            "policy": self.policy.describe(),
            "sum_split_ok": self.sum_split_ok,
            "sum_split_violations": [int(i) for i in self.sum_split_violations],
            "bracket_levels": [[bool(a), bool(b)] for a, b in self.bracket_levels],
            "bracket_ok": self.bracket_ok,
            "union_violations": self.union_violations,
            "union_violating_ids": [int(i) for i in self.union_violating_ids],
            "doubled_sum_violations": [[int(n), int(c)] for n, c in self.doubled_sum_violations],
        }


def inclusion_check(f: ScalarField, g: ScalarField, epsilon: float, P: SubsetMask,
                    policy, depth: int, q: SubsetMask | None = None) -> InclusionReport:
    """Check the inclusion laws relating the two operators and field sums.

    Hard laws: gap_step(f+g, eps) inside the union of the half-epsilon gap
    steps (one step, shared balls), and the bracket pair-at-2eps subset
    gap-at-eps subset pair-at-eps at every level to ``depth``.  The bracket
    holds exactly at all levels under a fixed policy; under the adaptive
    policy only the first step is guaranteed (deeper levels lose the
    set-monotonicity the induction needs).

    Soft laws: the union law over P and q (checked when q is given), and
    the doubled-step sum law comparing level 2n of the summed field with
    level n of the halves.
    """
    if depth < 1:
        raise ValidationError("depth must be >= 1")
    _check_step_args(f, epsilon, P)
    _check_step_args(g, epsilon, P)
    space = P.space
    total = f + g

    a_lhs = gap_step(total, epsilon, P, policy)
    a_rhs = gap_step(f, epsilon / 2, P, policy) | gap_step(g, epsilon / 2, P, policy)
    a_bad = (a_lhs - a_rhs).ids()

    t_pair2 = iterate("pair", f, 2 * epsilon, P, policy, max_steps=depth + 1)
    t_gap = iterate("gap", f, epsilon, P, policy, max_steps=depth + 1)
    t_pair1 = iterate("pair", f, epsilon, P, policy, max_steps=depth + 1)
    bracket = []
    for n in range(1, depth + 1):
        lo = t_pair2.level(n).issubset(t_gap.level(n))
        up = t_gap.level(n).issubset(t_pair1.level(n))
        bracket.append((lo, up))

    union_violations = None
    union_ids: list = []
    if q is not None:
        u_lhs = gap_step(f, epsilon, P | q, policy)
        u_rhs = gap_step(f, epsilon, P, policy) | gap_step(f, epsilon, q, policy)
        union_ids = list((u_lhs - u_rhs).ids())
        union_violations = len(union_ids)

    t_sum = iterate("gap", total, epsilon, P, policy, max_steps=depth + 1)
    t_f = iterate("gap", f, epsilon / 2, P, policy, max_steps=depth + 1)
    t_g = iterate("gap", g, epsilon / 2, P, policy, max_steps=depth + 1)
    doubled = []
    for n in range(1, depth // 2 + 1):
        lhs = t_sum.level(2 * n)
        rhs = t_f.level(n) | t_g.level(n)
        doubled.append((n, (lhs - rhs).size))

    return InclusionReport(
        epsilon=epsilon,
        depth=depth,
        policy=policy,
        sum_split_ok=a_bad.size == 0,
        sum_split_violations=list(a_bad),
        bracket_levels=bracket,
        union_violations=union_violations,
        union_violating_ids=union_ids,
        doubled_sum_violations=doubled,
    )


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def trace_to_dict(trace: DerivationTrace) -> dict:
    return {
        "kind": trace.kind,
        "epsilon": trace.epsilon,
        "policy": trace.policy.describe(),
        "levels": [[int(i) for i in lvl.ids()] for lvl in trace.levels],
        "terminal": {"state": trace.terminal[0], "step": trace.terminal[1]},
    }
