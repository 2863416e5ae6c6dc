"""Band partitioning: CLODD block search plus BG-Mean and hierarchical baselines.

CLODD scores a contiguous block partition of an enhanced dissimilarity
matrix by a squareness term (between-block minus within-block average
dissimilarity) mixed with an edginess term (intensity jumps across block
boundaries), gated by a smooth minimum-size penalty, and searches for the
maximizing partition either exhaustively or with seeded simulated
annealing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage as scipy_linkage
from scipy.spatial.distance import squareform

from .errors import ConfigError, DataError, NoFeasiblePartition
from .ordering import EnhancedDm, ivat_enhance, vat_order
from .proximity import DissimilarityMatrix

CONTIGUOUS = "contiguous"
NONCONTIGUOUS = "noncontiguous"


@dataclass(eq=False)
class BandPartition:
    """Ordered list of disjoint band groups covering all bands.

    Groups hold 0-based column indices of the dataset the partition was
    built for. In noncontiguous mode each group is an interval of
    VAT-ordered positions; `ordering` records that permutation.
    """

    groups: list[np.ndarray]
    mode: str
    ordering: np.ndarray
    objective_value: float | None = None
    params: dict = field(default_factory=dict)
    feasible: bool = True

    def __post_init__(self):
        self.groups = [np.asarray(g, dtype=np.int64) for g in self.groups]
        self.ordering = np.asarray(self.ordering, dtype=np.int64)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def n_bands(self) -> int:
        return sum(g.size for g in self.groups)

    def sizes(self) -> list[int]:
        return [int(g.size) for g in self.groups]

    def validate_cover(self) -> None:
        allidx = np.concatenate(self.groups) if self.groups else np.array([], dtype=np.int64)
        if np.unique(allidx).size != allidx.size:
            raise DataError("partition groups overlap")
        if not np.array_equal(np.sort(allidx), np.arange(self.n_bands)):
            raise DataError("partition groups do not cover 0..b-1")


@dataclass(frozen=True)
class CloddParams:
    """Objective and search parameters for CLODD.

    alpha mixes squareness vs edginess; the spline gate threshold is
    max(gamma, min_size). c_range=None derives candidate group counts from
    the size bounds. Annealing knobs follow the defaults used throughout.
    """

    alpha: float
    gamma: float = 3.0
    min_size: int = 5
    max_size: int = 20
    c_range: tuple[int, ...] | None = None
    search: str = "annealed"
    seed: int = 0
    restarts: int = 20
    proposals_per_band: int = 200

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if not 1 <= self.min_size <= self.max_size:
            raise ConfigError("need 1 <= min_size <= max_size")
        if self.search not in ("exhaustive", "annealed"):
            raise ConfigError(f"unknown search strategy {self.search!r}")


def smoothstep(x: float, threshold: float) -> float:
    """Cubic ramp: 0 at x<=0, 1 at x>=threshold, C1 in between."""
    if threshold <= 0:
        return 1.0
    u = min(max(x / threshold, 0.0), 1.0)
    return u * u * (3.0 - 2.0 * u)


def _groups_as_position_intervals(part: BandPartition) -> list[tuple[int, int]]:
    """Each group must be a run of consecutive positions; returns (start, end)."""
    intervals = []
    for g in part.groups:
        g = np.sort(g)
        if g.size == 0:
            raise DataError("empty group in partition")
        if g[-1] - g[0] != g.size - 1:
            raise DataError("group is not a contiguous interval of positions")
        intervals.append((int(g[0]), int(g[-1]) + 1))
    return intervals


def squareness(part: BandPartition, de: EnhancedDm) -> float:
    """Average between-group dissimilarity minus average within-group one.

    With a single group the between term is 0 by convention; with all
    singleton groups the within term is 0.
    """
    d = de.values
    b = d.shape[0]
    between_num = within_num = 0.0
    between_den = within_den = 0
    for g in part.groups:
        mask = np.zeros(b, dtype=bool)
        mask[g] = True
        sub = d[np.ix_(g, g)]
        within_num += float(sub.sum())  # diagonal is zero
        within_den += g.size * g.size - g.size
        between_num += float(d[np.ix_(g, np.flatnonzero(~mask))].sum())
        between_den += g.size * (b - g.size)
    first = between_num / between_den if between_den else 0.0
    second = within_num / within_den if within_den else 0.0
    return first - second


def edginess(part: BandPartition, de: EnhancedDm) -> float:
    """Mean boundary contrast: per boundary, the absolute difference of the
    two columns flanking it, summed over the rows of both flanking groups
    and normalized by their combined size. Zero for a single group."""
    intervals = _groups_as_position_intervals(part)
    if len(intervals) < 2:
        return 0.0
    d = de.values
    total = 0.0
    for (s1, e1), (s2, e2) in zip(intervals[:-1], intervals[1:]):
        if e1 != s2:
            raise DataError("edginess needs adjacent position intervals")
        rows = np.arange(s1, e2)
        jump = np.abs(d[rows, e1 - 1] - d[rows, e1]).sum()
        total += float(jump) / (e2 - s1)
    return total / (len(intervals) - 1)


def clodd_objective(part: BandPartition, de: EnhancedDm, params: CloddParams) -> float:
    gate = smoothstep(min(part.sizes()), max(params.gamma, params.min_size))
    mix = params.alpha * squareness(part, de) + (1.0 - params.alpha) * edginess(part, de)
    return gate * mix


class _Evaluator:
    """O(c) objective evaluation from prefix sums, for the partition search.

    Boundary vectors are tuples of group end positions (exclusive), e.g.
    (10, 20) splits b=30 into [0,10), [10,20), [20,30).
    """

    def __init__(self, de: EnhancedDm, params: CloddParams):
        d = de.values
        b = d.shape[0]
        self.b = b
        self.alpha = params.alpha
        self.threshold = max(params.gamma, params.min_size)
        sat = np.zeros((b + 1, b + 1))
        sat[1:, 1:] = d.cumsum(axis=0).cumsum(axis=1)
        self._sat = sat.tolist()
        self.total = float(d.sum())
        edge = np.zeros((max(b - 1, 1), b + 1))
        if b > 1:
            edge[:, 1:] = np.abs(d[:, :-1] - d[:, 1:]).T.cumsum(axis=1)
        self._edge = edge.tolist()

    def objective(self, bounds: tuple[int, ...]) -> float:
        b = self.b
        sat = self._sat
        within = 0.0
        within_den = 0
        between_den = 0
        min_size = b
        prev = 0
        for cut in bounds + (b,):
            sz = cut - prev
            if sz < min_size:
                min_size = sz
            row_hi, row_lo = sat[cut], sat[prev]
            within += row_hi[cut] - 2.0 * row_lo[cut] + row_lo[prev]
            within_den += sz * sz - sz
            between_den += sz * (b - sz)
            prev = cut
        first = (self.total - within) / between_den if between_den else 0.0
        second = within / within_den if within_den else 0.0
        e_sq = first - second

        e_edge = 0.0
        if bounds:
            edge = self._edge
            edges = (0,) + bounds + (b,)
            for k in range(1, len(edges) - 1):
                pre = edge[edges[k] - 1]
                e_edge += (pre[edges[k + 1]] - pre[edges[k - 1]]) / (edges[k + 1] - edges[k - 1])
            e_edge /= len(bounds)

        u = min_size / self.threshold
        if u > 1.0:
            u = 1.0
        gate = u * u * (3.0 - 2.0 * u)
        return gate * (self.alpha * e_sq + (1.0 - self.alpha) * e_edge)


def _candidate_counts(b: int, params: CloddParams) -> list[int]:
    if params.c_range is not None:
        counts = [c for c in params.c_range if c >= 1 and c * params.min_size <= b <= c * params.max_size]
    else:
        counts = [
            c
            for c in range(2, b + 1)
            if c * params.min_size <= b <= c * params.max_size
        ]
        if not counts and params.min_size <= b <= params.max_size:
            counts = [1]
    if not counts:
        raise NoFeasiblePartition(
            f"no group count can split {b} bands into sizes "
            f"[{params.min_size}, {params.max_size}]"
        )
    return sorted(counts)


def _compositions(b: int, c: int, lo: int, hi: int, prefix=()):
    """All boundary vectors for c groups of sizes in [lo, hi], lexicographic."""
    if c == 1:
        if lo <= b <= hi:
            yield prefix
        return
    start = prefix[-1] if prefix else 0
    first = max(lo, b - (c - 1) * hi)
    last = min(hi, b - (c - 1) * lo)
    for sz in range(first, last + 1):
        yield from _compositions(b - sz, c - 1, lo, hi, prefix + (start + sz,))


def _random_bounds(b: int, c: int, lo: int, hi: int, rng: np.random.Generator) -> tuple[int, ...]:
    sizes = []
    remaining = b
    for k in range(c):
        left = c - k - 1
        s_lo = max(lo, remaining - left * hi)
        s_hi = min(hi, remaining - left * lo)
        sz = int(rng.integers(s_lo, s_hi + 1))
        sizes.append(sz)
        remaining -= sz
    bounds = tuple(np.cumsum(sizes[:-1]).tolist())
    return bounds


def _better(obj: float, bounds, best_obj: float, best_bounds) -> bool:
    if best_bounds is None or obj > best_obj:
        return True
    return obj == best_obj and bounds < best_bounds


def _polish(ev: _Evaluator, bounds: tuple[int, ...], obj: float, lo: int, hi: int):
    """Greedy single-boundary moves to a local optimum."""
    b = ev.b
    while True:
        best_val, best_cand = obj, None
        edges = (0,) + bounds + (b,)
        for t in range(len(bounds)):
            for step in (-1, 1):
                cut = bounds[t] + step
                if not (lo <= cut - edges[t] <= hi and lo <= edges[t + 2] - cut <= hi):
                    continue
                cand = bounds[:t] + (cut,) + bounds[t + 1 :]
                val = ev.objective(cand)
                if val > best_val or (val == best_val and best_cand is not None and cand < best_cand):
                    best_val, best_cand = val, cand
        if best_cand is None:
            return bounds, obj
        bounds, obj = best_cand, best_val


def _anneal_restart(
    ev: _Evaluator,
    counts: list[int],
    params: CloddParams,
    rng: np.random.Generator,
    t0: float,
):
    b = ev.b
    lo, hi = params.min_size, params.max_size
    c = counts[int(rng.integers(len(counts)))]
    bounds = _random_bounds(b, c, lo, hi, rng)
    obj = ev.objective(bounds)
    best_bounds, best_obj = bounds, obj
    temp = t0
    steps = params.proposals_per_band * b
    count_set = set(counts)
    objective = ev.objective

    # draws batched up front: per-step generator calls dominate otherwise
    kinds = rng.integers(0, 3, size=steps).tolist()
    sel = rng.random(size=steps).tolist()
    aux = rng.random(size=steps).tolist()
    accept = rng.random(size=steps).tolist()

    for s in range(steps):
        temp *= 0.995
        kind = kinds[s]
        edges = (0,) + bounds + (b,)
        n_groups = len(bounds) + 1
        cand = None
        if kind == 1:  # split a group
            if n_groups + 1 in count_set:
                splittable = [
                    k for k in range(n_groups) if edges[k + 1] - edges[k] >= 2 * lo
                ]
                if splittable:
                    g = splittable[int(sel[s] * len(splittable))]
                    left, right = edges[g], edges[g + 1]
                    cut = left + lo + int(aux[s] * (right - left - 2 * lo + 1))
                    if right - cut <= hi and cut - left <= hi:
                        cand = tuple(sorted(bounds + (cut,)))
        elif kind == 2:  # merge two adjacent groups
            if n_groups - 1 in count_set and bounds:
                mergeable = [
                    t for t in range(len(bounds)) if edges[t + 2] - edges[t] <= hi
                ]
                if mergeable:
                    t = mergeable[int(sel[s] * len(mergeable))]
                    cand = bounds[:t] + bounds[t + 1 :]
        if cand is None and bounds:  # move one boundary
            t = int(sel[s] * len(bounds))
            cut = bounds[t] + (-1 if aux[s] < 0.5 else 1)
            if lo <= cut - edges[t] <= hi and lo <= edges[t + 2] - cut <= hi:
                cand = bounds[:t] + (cut,) + bounds[t + 1 :]
        if cand is None:
            continue
        val = objective(cand)
        delta = val - obj
        if delta >= 0 or (temp > 0 and accept[s] < math.exp(delta / temp)):
            bounds, obj = cand, val
            if _better(obj, bounds, best_obj, best_bounds):
                best_bounds, best_obj = bounds, obj

    best_bounds, best_obj = _polish(ev, best_bounds, best_obj, lo, hi)
    return best_bounds, best_obj


def _bounds_to_groups(bounds: tuple[int, ...], b: int) -> list[np.ndarray]:
    edges = (0,) + bounds + (b,)
    return [np.arange(edges[k], edges[k + 1]) for k in range(len(edges) - 1)]


def clodd_partition(de: EnhancedDm, params: CloddParams) -> BandPartition:
    """Size-feasible contiguous partition maximizing the CLODD objective.

    Exhaustive search enumerates every boundary placement; annealed search
    runs seeded restarts of boundary-move/split/merge proposals with a
    greedy polish. Equal objectives break to the lexicographically
    smallest boundary vector, so results do not depend on evaluation
    order.
    """
    b = de.n_bands
    counts = _candidate_counts(b, params)
    ev = _Evaluator(de, params)
    lo, hi = params.min_size, params.max_size

    best_bounds = None
    best_obj = -math.inf
    if params.search == "exhaustive":
        for c in counts:
            for bounds in _compositions(b, c, lo, hi):
                obj = ev.objective(bounds)
                if _better(obj, bounds, best_obj, best_bounds):
                    best_bounds, best_obj = bounds, obj
    else:
        spread_rng = np.random.default_rng([params.seed, 0])
        sample = []
        for _ in range(50):
            c = int(spread_rng.choice(counts))
            sample.append(ev.objective(_random_bounds(b, c, lo, hi, spread_rng)))
        spread = max(sample) - min(sample)
        t0 = 0.1 * spread if spread > 0 else 1e-3
        for k in range(params.restarts):
            rng = np.random.default_rng([params.seed, k + 1])
            bounds, obj = _anneal_restart(ev, counts, params, rng, t0)
            if _better(obj, bounds, best_obj, best_bounds):
                best_bounds, best_obj = bounds, obj

    if best_bounds is None:
        raise NoFeasiblePartition("search produced no feasible partition")
    return BandPartition(
        groups=_bounds_to_groups(best_bounds, b),
        mode=CONTIGUOUS,
        ordering=np.arange(b),
        objective_value=float(best_obj),
        params={
            "alpha": params.alpha,
            "gamma": params.gamma,
            "min_size": params.min_size,
            "max_size": params.max_size,
            "search": params.search,
            "seed": params.seed,
        },
    )


def clodd_c(dm: DissimilarityMatrix, params: CloddParams) -> BandPartition:
    """Contiguous CLODD: enhance the raw matrix (no reordering) and search."""
    enhanced = ivat_enhance(dm, source="raw")
    return clodd_partition(enhanced, params)


def clodd_n(dm: DissimilarityMatrix, params: CloddParams) -> BandPartition:
    """Non-contiguous CLODD: VAT-order, enhance, search, then map the interval
    groups back through the permutation."""
    vat = vat_order(dm)
    enhanced = ivat_enhance(vat.ordered_dm, source="vat_ordered")
    part = clodd_partition(enhanced, params)
    groups = [np.sort(vat.permutation[g]) for g in part.groups]
    return BandPartition(
        groups=groups,
        mode=NONCONTIGUOUS,
        ordering=vat.permutation,
        objective_value=part.objective_value,
        params=part.params,
    )


def bg_mean_partition(
    dm: DissimilarityMatrix, threshold: float, max_size: int
) -> BandPartition:
    """Greedy left-to-right contiguous grouping on block-mean similarity.

    A group absorbs the next band while the mean similarity (1 - normalized
    dissimilarity) over all distinct pairs of the extended group stays at or
    above the threshold and the size cap is not hit.
    """
    if not dm.normalized:
        raise DataError("BG-Mean expects a normalized dissimilarity matrix")
    if not 0.0 < threshold < 1.0:
        raise ConfigError("threshold must lie in (0, 1)")
    if max_size < 1:
        raise ConfigError("max_size must be >= 1")
    d = dm.values
    b = d.shape[0]
    groups = []
    start = 0
    pair_sum = 0.0
    pair_count = 0
    for nxt in range(1, b):
        size = nxt - start
        new_sum = pair_sum + float((1.0 - d[start:nxt, nxt]).sum())
        new_count = pair_count + size
        if size + 1 <= max_size and new_sum / new_count >= threshold:
            pair_sum, pair_count = new_sum, new_count
        else:
            groups.append(np.arange(start, nxt))
            start = nxt
            pair_sum, pair_count = 0.0, 0
    groups.append(np.arange(start, b))
    return BandPartition(
        groups=groups,
        mode=CONTIGUOUS,
        ordering=np.arange(b),
        params={"threshold": threshold, "max_size": max_size},
    )


def hierarchical_partition(
    dm: DissimilarityMatrix,
    linkage: str,
    c: int,
    min_size: int = 1,
    max_size: int | None = None,
) -> BandPartition:
    """Agglomerative clustering on the dissimilarity matrix cut at c clusters.

    Partitions whose group sizes violate [min_size, max_size] are returned
    with feasible=False so parameter scans can skip them.
    """
    if linkage not in ("single", "ward"):
        raise ConfigError(f"unsupported linkage {linkage!r}")
    b = dm.n_bands
    if not 1 <= c <= b:
        raise ConfigError(f"cluster count {c} infeasible for {b} bands")
    condensed = squareform(dm.values, checks=False)
    if b == 1:
        labels = np.array([1])
    else:
        tree = scipy_linkage(condensed, method=linkage)
        labels = fcluster(tree, t=c, criterion="maxclust")
    ids = []
    seen = {}
    for pos, lab in enumerate(labels):
        if lab not in seen:
            seen[lab] = len(ids)
            ids.append(lab)
    groups = [np.flatnonzero(labels == lab) for lab in ids]
    cap = max_size if max_size is not None else b
    feasible = all(min_size <= g.size <= cap for g in groups)
    return BandPartition(
        groups=groups,
        mode=NONCONTIGUOUS,
        ordering=np.arange(b),
        params={"linkage": linkage, "c": c, "min_size": min_size, "max_size": cap},
        feasible=feasible,
    )
