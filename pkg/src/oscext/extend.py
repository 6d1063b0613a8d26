"""Extension constructions: every method takes a field on a subset Y and
returns a field on the whole space that restricts to it exactly.

All methods finish with an exact patch on Y (the construction value is
overwritten by f and the largest overwrite magnitude is logged), so the
restriction identity is a hard invariant rather than a limit statement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import InvariantError, PreconditionError, ValidationError
from .space import (
    AdaptiveScale,
    ScalarField,
    SpaceInstance,
    SubsetMask,
    ball,
    cb_filtration,
    dists_among,
    local_scales,
)
from .derive import iterate, osc_at_point
from .unity import blend, cover_for_piece, partition

CLOPEN_FAMILIES = ("cantor", "ordinal", "sequence")


@dataclass
class ExtensionReport:
    """Output field plus the evidence that the construction behaved."""

    method: str
    field: ScalarField  # patched: restricts to f on Y exactly
    prepatch: ScalarField | None
    restriction_error: float  # exact max |F - f| on Y after patching (0)
    patch_magnitude: float  # max overwrite applied on Y
    diagnostics: dict = dc_field(default_factory=dict)
    assertion_log: list = dc_field(default_factory=list)

    def to_dict(self):
        return {
            "method": self.method,
            "restriction_error": self.restriction_error,
            "patch_magnitude": self.patch_magnitude,
            "diagnostics": _plain(self.diagnostics),
            "assertion_log": list(self.assertion_log),
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _check_subset_field(Y: SubsetMask, f: ScalarField):
    if Y.space is not f.space:
        raise ValidationError("Y and f are bound to different spaces")
    if not Y.issubset(f.domain):
        raise PreconditionError("Y is not contained in the field domain")


def _patched(space, Y, f, pre_values, method, diagnostics, assertion_log=None):
    pre = ScalarField(space.full_mask(), pre_values)
    patched_values = pre_values.copy()
    patch = 0.0
    if not Y.is_empty():
        patch = float(np.max(np.abs(pre_values[Y.mask] - f.values[Y.mask])))
        patched_values[Y.mask] = f.values[Y.mask]
    out = ScalarField(space.full_mask(), patched_values)
    err = float(np.max(np.abs(out.values[Y.mask] - f.values[Y.mask]))) if not Y.is_empty() else 0.0
    return ExtensionReport(
        method=method,
        field=out,
        prepatch=pre,
        restriction_error=err,
        patch_magnitude=patch,
        diagnostics=diagnostics,
        assertion_log=assertion_log or [],
    )


def nearest_in_set(space: SpaceInstance, target: SubsetMask):
    """Per point: (nearest target id, distance); ties go to the smallest id."""
    tids = target.ids()
    if tids.size == 0:
        raise PreconditionError("target set is empty")
    metric = space.metric
    n = space.n
    if metric.kind == "cantor":
        width = metric.width
        nearest = np.full(n, -1, dtype=np.int64)
        dist = np.full(n, np.inf)
        t_in = target.mask
        for c in range(width, -1, -1):
            codes = metric.codes[c]
            tcodes = codes[tids]
            order = np.argsort(tcodes, kind="stable")  # stable: min id first per code
            sc = tcodes[order]
            starts = np.flatnonzero(np.r_[True, sc[1:] != sc[:-1]])
            group_codes = sc[starts]
            group_min_ids = tids[order][starts]
            unset = nearest < 0
            pos = np.searchsorted(group_codes, codes[unset])
            pos_ok = (pos < group_codes.size)
            hit = np.zeros(unset.sum(), dtype=bool)
            hit[pos_ok] = group_codes[pos[pos_ok]] == codes[unset][pos_ok]
            ids_unset = np.flatnonzero(unset)
            chosen = ids_unset[hit]
            nearest[chosen] = group_min_ids[pos[hit]]
            d = 2.0 ** -(c + 1.0)
            dist[chosen] = np.where(t_in[chosen] & (nearest[chosen] == chosen), 0.0, d)
            # a target point is its own nearest at depth = width
            own = chosen[t_in[chosen]]
            nearest[own] = own
            dist[own] = 0.0
        return nearest, dist
    out_id = np.empty(n, dtype=np.int64)
    out_d = np.empty(n)
    chunk = max(1, int(2_000_000 // max(tids.size, 1)))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        block = np.empty((hi - lo, tids.size))
        for r, i in enumerate(range(lo, hi)):
            block[r] = metric.dist_row(i)[tids]
        j = np.argmin(block, axis=1)  # first minimum = smallest target id
        out_id[lo:hi] = tids[j]
        out_d[lo:hi] = block[np.arange(hi - lo), j]
    return out_id, out_d


# ---------------------------------------------------------------------------
# Glue (piecewise cover) extension
# ---------------------------------------------------------------------------

def glue_extension(space: SpaceInstance, Y: SubsetMask, f: ScalarField,
                   epsilon: float, policy) -> ExtensionReport:
    """Extend f by blending over one cover per derivation level.

    Requires the pair-step trace of f on Y to empty at this epsilon.  Each
    level-beta piece gets a cover avoiding the next level, a hat partition,
    and the blend of the piece's own f values; pieces are pasted first-come
    and the rest of the space gets 0.  Pre-patch, the result is bounded by
    ||f|| and stays within epsilon of f on Y; both are verified.
    """
    _check_subset_field(Y, f)
    if Y.is_empty():
        raise PreconditionError("Y must be nonempty")
    fY = f.restrict(Y)
    trace = iterate("pair", fY, epsilon, Y, policy)
    if trace.terminal[0] != "emptied":
        raise PreconditionError(
            f"derivation trace {trace.terminal[0]} at epsilon={epsilon}; "
            "the glue construction needs a finite index"
        )
    alpha = trace.index
    pre = np.zeros(space.n)
    assigned = np.zeros(space.n, dtype=bool)
    piece_sizes = []
    for beta in range(alpha):
        ybeta = trace.levels[beta]
        ynext = trace.levels[beta + 1]
        cover = cover_for_piece(space, ybeta, ynext, fY, epsilon)
        pou = partition(space, cover)
        anchors = [fY.values[c] for c, _r in cover.elements]
        fbeta = blend(pou, anchors)
        sel = fbeta.domain.mask & ~assigned
        pre[sel] = fbeta.values[sel]
        assigned |= fbeta.domain.mask
        piece_sizes.append((ybeta - ynext).size)
    norm_f = fY.norm()
    norm_pre = float(np.max(np.abs(pre))) if space.n else 0.0
    if norm_pre > norm_f:
        raise InvariantError(f"pre-patch norm {norm_pre} exceeds ||f|| = {norm_f}")
    pre_err = float(np.max(np.abs(pre[Y.mask] - fY.values[Y.mask])))
    if pre_err > epsilon:
        raise InvariantError(f"pre-patch error {pre_err} on Y exceeds epsilon={epsilon}")
    diagnostics = {
        "alpha": alpha,
        "epsilon": epsilon,
        "policy": policy.describe(),
        "piece_sizes": piece_sizes,
        "norm_f": norm_f,
        "norm_prepatch": norm_pre,
        "prepatch_error_on_Y": pre_err,
        "covered_points": int(assigned.sum()),
    }
    return _patched(space, Y, fY, pre, "glue", diagnostics)


# ---------------------------------------------------------------------------
# Iterated (geometric series) extension
# ---------------------------------------------------------------------------

def iterated_extension(space: SpaceInstance, Y: SubsetMask, f: ScalarField,
                       policy, rounds: int) -> ExtensionReport:
    """Sum of glue extensions of the running residual at epsilon = 2^-n.

    Round n extends the residual f - sum(g_i) with the unpatched glue
    output, which keeps the norm chain
    ||g_{n+1}|| <= ||f - sum_{i<=n} g_i||_Y <= 2^-n exact; the chain is
    asserted every round.
    """
    if rounds < 1:
        raise ValidationError("rounds must be >= 1")
    _check_subset_field(Y, f)
    fY = f.restrict(Y)
    total = np.zeros(space.n)
    residual_norms = []
    residual = fY
    for nround in range(1, rounds + 1):
        eps = 2.0**-nround
        try:
            rep = glue_extension(space, Y, residual, eps, policy)
        except PreconditionError as exc:
            raise PreconditionError(f"round {nround}: {exc}") from None
        g = rep.prepatch
        if g.norm() > residual.norm():
            raise InvariantError(f"round {nround}: ||g|| exceeds the residual norm")
        total = total + g.values
        residual = ScalarField(Y, np.where(Y.mask, fY.values - total, np.nan))
        rnorm = residual.norm()
        residual_norms.append(rnorm)
        if rnorm > eps:
            raise InvariantError(
                f"round {nround}: residual norm {rnorm} exceeds 2^-{nround}"
            )
    diagnostics = {
        "rounds": rounds,
        "policy": policy.describe(),
        "residual_norms": residual_norms,
    }
    return _patched(space, Y, fY, total, "iterated", diagnostics)


# ---------------------------------------------------------------------------
# Limsup baseline
# ---------------------------------------------------------------------------

def limsup_extension(space: SpaceInstance, Y: SubsetMask, f: ScalarField) -> ExtensionReport:
    """Upper envelope over the smallest dyadic ball that meets Y.

    The radius grid stops strictly above the resolution floor: balls at or
    below the floor see single points, which would collapse the envelope
    into a nearest-anchor map and lose the sup semantics.
    """
    _check_subset_field(Y, f)
    if Y.is_empty():
        raise PreconditionError("Y must be nonempty")
    fY = f.restrict(Y)
    diam = max(space.diameter(), space.resolution)
    j_top = -int(math.ceil(math.log2(diam))) - 1  # radius 2**-j_top > diameter
    j_bot = int(math.floor(math.log2(1.0 / space.resolution)))
    if 2.0**-j_bot <= space.resolution:
        j_bot -= 1  # smallest grid radius stays strictly above the floor
    if j_bot < j_top:
        j_bot = j_top
    _nearest, dY = nearest_in_set(space, Y)
    pre = np.empty(space.n)
    radii_used = np.empty(space.n)
    for x in range(space.n):
        j = j_bot
        while j > j_top and not (2.0**-j > dY[x]):
            j -= 1
        r = 2.0**-j
        members = ball(space, x, r, Y)
        vals = fY.values[members.mask]
        pre[x] = float(vals.max())
        radii_used[x] = r
    diagnostics = {
        "radius_grid": [2.0**-j for j in range(j_top, j_bot + 1)],
        "max_radius_used": float(radii_used.max()),
    }
    return _patched(space, Y, fY, pre, "limsup", diagnostics)


# ---------------------------------------------------------------------------
# Nearest-point retraction
# ---------------------------------------------------------------------------

def retract_extension(space: SpaceInstance, f_on_closed: ScalarField) -> ExtensionReport:
    """Compose with the nearest-point map onto a domain closed at resolution."""
    D = f_on_closed.domain
    if D.is_empty():
        raise PreconditionError("the field domain is empty")
    nearest, dist = nearest_in_set(space, D)
    outside = ~D.mask
    if np.any(dist[outside] < space.resolution):
        i = int(np.flatnonzero(outside & (dist < space.resolution))[0])
        raise PreconditionError(
            f"domain is not closed at resolution: point {i} lies within "
            f"{space.resolution} of the domain"
        )
    pre = f_on_closed.values[nearest]
    diagnostics = {"domain_size": D.size}
    return _patched(space, D, f_on_closed, pre, "retract", diagnostics)


# ---------------------------------------------------------------------------
# Layered extension
# ---------------------------------------------------------------------------

@dataclass
class LayerState:
    """One layer of the shrinking-ball construction."""

    k: int
    centers: np.ndarray  # S_k
    depths: np.ndarray  # n_k per center (ball radius 2^-n)
    carrier: SubsetMask  # X_k
    values: np.ndarray  # F_k over the space, NaN off the carrier
    level_numbers: np.ndarray  # l_k per carrier point
    min_prev_level: np.ndarray | None  # min l_{k-1} over covering elements


def _dist_to_set(space, target: SubsetMask):
    return nearest_in_set(space, target)[1]


def layered_extension(space: SpaceInstance, Y: SubsetMask, f: ScalarField,
                      policy=None, max_layers: int = 24) -> ExtensionReport:
    """Layered shrinking-ball extension of a function continuous on dense Y.

    Builds successive ball covers B(s, 2^-n_k(s)) with hat partitions and
    nearest-Y anchors; a point proceeds to the next layer while its local
    oscillation (at resolution, over Y) beats 2^-l and a deeper admissible
    ball exists.  The two-layer difference bounds are asserted during
    construction and abort on failure.  ``policy`` is recorded for
    provenance; the construction itself uses the dyadic radii.
    """
    _check_subset_field(Y, f)
    if Y.is_empty():
        raise PreconditionError("Y must be nonempty")
    if max_layers < 1:
        raise ValidationError("max_layers must be >= 1")
    fY = f.restrict(Y)
    dY = _dist_to_set(space, Y)
    worst = int(np.argmax(dY))
    if dY[worst] > space.resolution:
        raise PreconditionError(
            f"Y is not dense at resolution: point {worst} is at distance "
            f"{dY[worst]} > {space.resolution}; compose with retract_extension instead"
        )
    # Anchors live in the doubled element ball (the one the oscillation
    # condition controls); at the resolution floor the single-radius rule
    # deadlocks against that condition and strands points in coarse layers.
    n_max = int(math.ceil(math.log2(1.0 / space.resolution))) + 4
    if space.metric.kind == "cantor":
        layers = _layered_cantor(space, Y, fY, max_layers, n_max)
    else:
        layers = _layered_generic(space, Y, fY, max_layers, n_max)

    log = _assert_layer_bounds(space, Y, fY, layers)

    deepest = np.zeros(space.n, dtype=np.int64)
    for st in layers[1:]:
        deepest[st.carrier.mask] = st.k
    pre = np.empty(space.n)
    for k, st in enumerate(layers):
        sel = deepest == k
        pre[sel] = st.values[sel]
    k_star = int(deepest[Y.mask].min())
    diagnostics = {
        "layers": len(layers),
        "layer_sizes": [int(st.centers.size) for st in layers],
        "carrier_sizes": [st.carrier.size for st in layers],
        "k_star": k_star,
        "n_max": n_max,
        "policy": policy.describe() if policy is not None else None,
    }
    report = _patched(space, Y, fY, pre, "layered", diagnostics, log)
    if report.patch_magnitude > 2.0 ** (1 - k_star):
        raise InvariantError(
            f"patch magnitude {report.patch_magnitude} exceeds the geometric "
            f"bound 2^(1-{k_star})"
        )
    return report


def _assert_layer_bounds(space, Y, fY, layers):
    """Two-layer difference bounds; a failure is an implementation bug."""
    log = []
    for j in range(1, len(layers)):
        sj = layers[j]
        if sj.min_prev_level is None:
            continue
        bound_pair = 2.0 ** (1.0 - sj.min_prev_level)
        bound_y = 2.0 ** (-sj.min_prev_level)
        for m in range(j + 1, len(layers)):
            sm = layers[m]
            sel = sm.carrier.mask
            diff = np.abs(sj.values[sel] - sm.values[sel])
            bad = diff >= bound_pair[sel]
            if np.any(bad):
                idx = int(np.flatnonzero(sel)[np.flatnonzero(bad)[0]])
                log.append(f"layer pair ({j},{m}): |F_{j}-F_{m}| bound fails at point {idx}")
        if j + 1 < len(layers):
            sel = Y.mask & layers[j + 1].carrier.mask
            if np.any(sel):
                diff = np.abs(sj.values[sel] - fY.values[sel])
                bad = diff >= bound_y[sel]
                if np.any(bad):
                    idx = int(np.flatnonzero(sel)[np.flatnonzero(bad)[0]])
                    log.append(f"layer {j}: |F_{j}-f| bound fails on Y at point {idx}")
    if log:
        raise InvariantError("layer difference bounds failed: " + "; ".join(log))
    return log


def _layered_generic(space, Y, fY, max_layers, n_max):
    """Mask-based layered construction for small, general metric spaces."""
    n = space.n
    nearest_y, _dy = nearest_in_set(space, Y)
    osc_res = np.array([osc_at_point(fY, x, Y, space.resolution) for x in range(n)])
    centers = np.arange(n)
    depths = np.zeros(n, dtype=np.int64)
    layers = []
    l_prev = None
    for k in range(max_layers):
        radii = 2.0 ** -depths.astype(float)
        supports = []
        anchors = np.empty(centers.size, dtype=np.int64)
        for pos, s in enumerate(centers):
            ids = space.metric.ball_ids(int(s), radii[pos])
            supports.append(ids)
            wide = space.metric.ball_ids(int(s), 2.0 * radii[pos])
            y_in = Y.mask[wide]
            if not y_in.any():
                raise InvariantError(f"layer {k}: no anchor candidate near {int(s)}")
            cand = wide[y_in]
            cd = space.metric.dist_row(int(s))[cand]
            best = cand[cd == cd.min()]
            anchors[pos] = int(best.min())
        num = np.zeros(n)
        den = np.zeros(n)
        lmax = np.full(n, -1, dtype=np.int64)
        minlp = np.full(n, np.inf)
        covering = np.zeros((n, centers.size), dtype=bool)
        for pos, s in enumerate(centers):
            ids = supports[pos]
            w = radii[pos] - space.metric.dist_row(int(s))[ids]
            num[ids] += w * fY.values[anchors[pos]]
            den[ids] += w
            np.maximum.at(lmax, ids, depths[pos])
            if l_prev is not None:
                np.minimum.at(minlp, ids, l_prev[s])
            covering[ids, pos] = True
        carrier_mask = den > 0
        carrier = SubsetMask(space, carrier_mask)
        values = np.where(carrier_mask, num / np.where(carrier_mask, den, 1.0), np.nan)
        lvl = np.where(carrier_mask, lmax + 1, 0).astype(np.int64)
        layers.append(LayerState(k, centers.copy(), depths.copy(), carrier,
                                 values, lvl, None if l_prev is None else minlp))
        members = np.flatnonzero(carrier_mask)
        cand = members[osc_res[members] < 2.0 ** -lvl[members].astype(float)]
        next_centers = []
        next_depths = []
        for x in cand:
            lx = int(lvl[x])
            cov_x = covering[x]
            found = None
            for nn in range(lx, n_max + 1):
                small = space.metric.ball_ids(x, 2.0**-nn)
                wide = space.metric.ball_ids(x, 2.0 ** (1 - nn))
                y_wide = wide[Y.mask[wide]]
                if y_wide.size == 0:
                    continue  # anchors live in the doubled ball
                vals = fY.values[y_wide]
                if vals.max() - vals.min() >= 2.0**-lx:
                    continue
                if not np.all(covering[small][:, cov_x]):
                    continue  # condition: the small ball must stay inside every covering ball
                if np.any(covering[wide][:, ~cov_x]):
                    continue  # condition: the doubled ball must miss all other supports
                found = nn
                break
            if found is not None:
                next_centers.append(x)
                next_depths.append(found)
        if not next_centers or k + 1 >= max_layers:
            break
        centers = np.asarray(next_centers, dtype=np.int64)
        nd = np.zeros(n, dtype=np.int64)
        nd[centers] = next_depths
        depths = nd[centers]
        l_prev_full = np.zeros(n, dtype=np.int64)
        l_prev_full[carrier_mask] = lvl[carrier_mask]
        l_prev = l_prev_full
    return layers


def _layered_cantor(space, Y, fY, max_layers, n_max):
    """Cylinder-arithmetic layered construction for the prefix metric.

    Balls are prefix cylinders, so supports are contiguous ranges of the
    code-sorted order, the ball-nesting condition holds automatically once
    n >= l, and the support-disjointness condition reduces to comparing
    counts of deep elements inside the candidate window against those
    covering the point.
    """
    metric = space.metric
    n = space.n
    width = metric.width
    order = np.argsort(metric.codes[width], kind="stable")
    sorted_codes = [metric.codes[c][order] for c in range(width + 1)]

    def code_at(c):
        return metric.codes[min(c, width)]

    def cyl_range(i, c):
        c = min(c, width)
        sc = sorted_codes[c]
        code = metric.codes[c][i]
        return np.searchsorted(sc, code, side="left"), np.searchsorted(sc, code, side="right")

    # Per-depth Y tables: count, min/max of f over Y in each cylinder.
    y_sorted = Y.mask[order]
    fv_sorted = np.where(Y.mask, fY.values, np.nan)[order]
    ycnt = np.zeros((width + 1, n), dtype=np.int64)
    yosc = np.zeros((width + 1, n))
    for c in range(width + 1):
        sc = sorted_codes[c]
        starts = np.flatnonzero(np.r_[True, sc[1:] != sc[:-1]])
        gidx = np.cumsum(np.r_[False, sc[1:] != sc[:-1]])
        cnt = np.add.reduceat(y_sorted.astype(np.int64), starts)
        fmax = np.maximum.reduceat(np.where(y_sorted, fv_sorted, -np.inf), starts)
        fmin = np.minimum.reduceat(np.where(y_sorted, fv_sorted, np.inf), starts)
        osc = np.where(cnt >= 2, fmax - fmin, 0.0)
        per_sorted_cnt = cnt[gidx]
        per_sorted_osc = osc[gidx]
        ycnt[c][order] = per_sorted_cnt
        yosc[c][order] = per_sorted_osc

    def ycnt_at(ids, c):
        if c >= width:
            extra = Y.mask[ids].astype(np.int64)
            return extra if c > width else ycnt[width][ids]
        return ycnt[c][ids]

    def yosc_at(ids, c):
        if c > width:
            return np.zeros(len(ids))
        return yosc[min(c, width)][ids]

    nearest_y, _dy = nearest_in_set(space, Y)
    osc_res = yosc_at(np.arange(n), metric.cylinder_length(space.resolution))

    centers = np.arange(n)
    depths = np.zeros(n, dtype=np.int64)
    layers = []
    l_prev = None
    for k in range(max_layers):
        num = np.zeros(n)
        den = np.zeros(n)
        lmax = np.full(n, -1, dtype=np.int64)
        minlp = np.full(n, np.inf)
        for pos in range(centers.size):
            s = int(centers[pos])
            nu = int(depths[pos])
            r = 2.0**-nu
            lo, hi = cyl_range(s, nu)
            mem = order[lo:hi]
            lcp = np.full(mem.size, min(nu, width), dtype=np.int64)
            for c in range(min(nu, width) + 1, width + 1):
                clo, chi = cyl_range(s, c)
                if clo == lo and chi == hi:
                    lcp[:] = c
                    continue
                lcp[clo - lo: chi - lo] = c
            d = 2.0 ** -(lcp + 1.0)
            d[lcp == width] = np.where(mem[lcp == width] == s, 0.0, 2.0 ** -(width + 1.0))
            w = r - d
            a = fY.values[nearest_y[s]]
            if ycnt_at(np.array([s]), max(nu - 1, 0))[0] == 0:
                raise InvariantError(f"layer {k}: no anchor candidate near {s}")
            num[mem] += w * a
            den[mem] += w
            np.maximum.at(lmax, mem, nu)
            if l_prev is not None:
                np.minimum.at(minlp, mem, l_prev[s])
        carrier_mask = den > 0
        carrier = SubsetMask(space, carrier_mask)
        values = np.where(carrier_mask, num / np.where(carrier_mask, den, 1.0), np.nan)
        lvl = np.where(carrier_mask, lmax + 1, 0).astype(np.int64)
        layers.append(LayerState(k, centers.copy(), depths.copy(), carrier, values, lvl,
                                 None if l_prev is None else minlp))

        members = np.flatnonzero(carrier_mask)
        cand = members[osc_res[members] < 2.0 ** -lvl[members].astype(float)]
        if cand.size == 0 or k + 1 >= max_layers:
            break
        # Candidate depths are searched jointly per n; counting tables make
        # the disjointness condition O(|S_k|) per depth.
        pending = cand.copy()
        lx = lvl[cand].astype(np.int64)
        chosen = np.full(n, -1, dtype=np.int64)
        for nn in range(int(lx.min()), n_max + 1):
            if pending.size == 0:
                break
            active = pending[lx[np.searchsorted(cand, pending)] <= nn]
            if active.size == 0:
                continue
            ok = ycnt_at(active, nn - 1) > 0  # anchors live in the doubled ball
            lact = lvl[active].astype(float)
            ok &= yosc_at(active, nn - 1) < 2.0**-lact
            deep = depths >= nn
            if deep.any():
                deep_centers = centers[deep]
                deep_depths = depths[deep]
                c1 = _match_counts(code_at(nn - 1), deep_centers, active)
                c2 = np.zeros(active.size, dtype=np.int64)
                for m in np.unique(deep_depths):
                    sel = deep_centers[deep_depths == m]
                    c2 += _match_counts(code_at(int(m)), sel, active)
                ok &= c1 == c2
            taken = active[ok]
            chosen[taken] = nn
            keep = chosen[pending] < 0
            pending = pending[keep]
        next_centers = np.flatnonzero(chosen >= 0)
        if next_centers.size == 0:
            break
        centers = next_centers
        depths = chosen[next_centers]
        l_prev_full = np.zeros(n, dtype=np.int64)
        l_prev_full[carrier_mask] = lvl[carrier_mask]
        l_prev = l_prev_full
    return layers


def _match_counts(codes, group_members, queries):
    """How many of group_members share their ``codes`` value with each query."""
    if group_members.size == 0:
        return np.zeros(queries.size, dtype=np.int64)
    gcodes = np.sort(codes[group_members])
    lo = np.searchsorted(gcodes, codes[queries], side="left")
    hi = np.searchsorted(gcodes, codes[queries], side="right")
    return (hi - lo).astype(np.int64)


# ---------------------------------------------------------------------------
# Scattered (derived-set recursion) extension
# ---------------------------------------------------------------------------

def visibility_components(space: SpaceInstance, region: SubsetMask, multiplier: float):
    """Partition a region into components of the mutual-visibility graph.

    Two members are adjacent when their distance is below multiplier times
    the larger of their in-region nearest-neighbour scales, i.e. when either
    point's adaptive ball can reach the other.  Distinct components cannot
    interact at resolution: the finite rendering of a disjoint clopen cover.
    """
    members = region.ids()
    if members.size <= 1:
        return [region]
    ls, _ = local_scales(space, members)
    sub = dists_among(space, members)
    thresh = multiplier * np.maximum(ls[:, None], ls[None, :])
    adj = sub < thresh
    np.fill_diagonal(adj, False)
    from scipy.sparse.csgraph import connected_components

    count, labels = connected_components(adj, directed=False)
    return [space.mask_from_ids(members[labels == i]) for i in range(count)]


def scattered_extension(space: SpaceInstance, Y: SubsetMask, f: ScalarField,
                        policy=None) -> ExtensionReport:
    """Recursive extension over the derived-set structure of the space.

    Only the shipped clopen-at-resolution metric families are accepted, and
    the filtration of the whole space must empty.  The recursion splits a
    region into mutual-visibility components (the finite form of a disjoint
    clopen refinement), anchors the top-depth points of each component (own
    f value on Y; the nearest carrier value when the point sits inside the
    Y-closure at its own scale; 0 otherwise), and recurses on the component
    minus its top points.  Components whose Y part is empty are filled
    with 0.
    """
    _check_subset_field(Y, f)
    if space.family not in CLOPEN_FAMILIES:
        raise PreconditionError(
            f"metric family {space.family!r} is not clopen at resolution; "
            "the scattered construction is restricted to the shipped families"
        )
    policy = policy or AdaptiveScale(3.0)
    mult = policy.multiplier if isinstance(policy, AdaptiveScale) else 3.0
    probe = cb_filtration(space, space.full_mask(), policy)
    if not probe.emptied:
        raise PreconditionError("filtration saturates: space is not scattered at resolution")
    fY = f.restrict(Y)
    pre = np.zeros(space.n)
    stats = {"components": 0, "anchored_tops": 0, "default_zero_regions": 0}
    _scatter_region(space, space.full_mask(), Y, fY, policy, mult, pre, stats)
    diagnostics = {
        "filtration_depth": len(probe.filtration),
        "policy": policy.describe(),
        **stats,
    }
    return _patched(space, Y, fY, pre, "scattered", diagnostics)


def _scatter_region(space, region, Y, fY, policy, mult, out, stats):
    if region.is_empty():
        return
    comps = visibility_components(space, region, mult)
    if len(comps) > 1:
        for comp in comps:
            _scatter_region(space, comp, Y, fY, policy, mult, out, stats)
        return
    comp = comps[0]
    stats["components"] += 1
    members = comp.ids()
    y_comp = Y & comp
    if y_comp.is_empty():
        out[comp.mask] = 0.0
        stats["default_zero_regions"] += 1
        return
    if members.size == 1:
        i = int(members[0])
        out[i] = fY.values[i] if Y.mask[i] else 0.0
        return
    dec = cb_filtration(space, comp, policy)
    if not dec.emptied:
        raise PreconditionError("a recursion region is not scattered at resolution")
    if len(dec.filtration) == 1:
        nearest, _d = nearest_in_set(space, y_comp)
        out[members] = fY.values[nearest[members]]
        return
    tops = dec.filtration[-1]
    ls_comp, _nn = local_scales(space, members)
    scale_of = dict(zip((int(i) for i in members), ls_comp))
    nearest_y, dist_y = nearest_in_set(space, y_comp)
    for x in tops.ids():
        x = int(x)
        if Y.mask[x]:
            out[x] = fY.values[x]
        elif dist_y[x] <= mult * scale_of[x]:
            out[x] = fY.values[nearest_y[x]]  # inside the Y-closure at its scale
        else:
            out[x] = 0.0
        stats["anchored_tops"] += 1
    rest = comp - tops
    _scatter_region(space, rest, Y, fY, policy, mult, out, stats)
