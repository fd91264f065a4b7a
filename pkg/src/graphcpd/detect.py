"""Permutation-calibrated change point tests and binary segmentation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .edgestats import (
    ALL_STATS,
    MomentTable,
    ScanResult,
    StatKind,
    argmax_smallest,
    check_window,
    default_window,
    statistic_traces,
    within_counts,
)
from .errors import InvalidParameterError, NoEvaluableSplitError, SegmentTooShortError
from .fdata import DEFAULT_P, FunctionalSample, distance_matrix
from .graphs import SimilarityGraph, TreeKind, build_capped_k_graph, build_k_graph

# permutations are evaluated in blocks of this many rows to bound memory
_CHUNK = 256


@dataclass(frozen=True)
class DetectionConfig:
    statistic: StatKind = StatKind.MAXTYPE
    tree: TreeKind = TreeKind.MST
    k_trees: int = 15
    p: float = DEFAULT_P
    alpha: float = 0.05
    shuffles: int = 1000
    seed: int | None = None
    min_segment: int = 10
    window: tuple = (0.05, 0.95)
    neighbors: int = 1

    def __post_init__(self):
        object.__setattr__(self, "statistic", StatKind.parse(self.statistic))
        object.__setattr__(self, "tree", TreeKind.parse(self.tree))
        object.__setattr__(self, "window", tuple(float(w) for w in self.window))
        if not 0 < self.alpha < 1:
            raise InvalidParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if int(self.shuffles) != self.shuffles or self.shuffles < 1:
            raise InvalidParameterError(f"shuffles must be a positive integer, got {self.shuffles}")
        if int(self.k_trees) != self.k_trees or self.k_trees < 1:
            raise InvalidParameterError(f"k_trees must be a positive integer, got {self.k_trees}")
        if int(self.min_segment) != self.min_segment or self.min_segment < 4:
            raise InvalidParameterError(f"min_segment must be an integer >= 4, got {self.min_segment}")
        if not math.isfinite(self.p) or self.p < 1:
            raise InvalidParameterError(f"norm order must satisfy 1 <= p < inf, got {self.p}")
        lo, hi = self.window
        if len(self.window) != 2 or not 0 <= lo < hi <= 1:
            raise InvalidParameterError(f"window fractions must satisfy 0 <= lo < hi <= 1, got {self.window}")
        if self.neighbors < 1:
            raise InvalidParameterError("neighbors must be at least 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["statistic"] = self.statistic.value
        d["tree"] = self.tree.value
        d["window"] = list(self.window)
        return d


@dataclass(frozen=True)
class AmocResult:
    """Outcome of one at-most-one-change test.

    ``k_hat`` is a global index: the change lies between observations
    ``k_hat`` and ``k_hat + 1`` (1-based) of the full sample.
    """

    k_hat: int
    t_n: float
    threshold: float
    p_value: float
    significant: bool
    trace: ScanResult
    alpha: float
    shuffles: int
    k_trees_used: int
    start: int = 0
    stop: int | None = None
    seed: int | None = None
    notes: tuple = ()

    def to_dict(self) -> dict:
        return {
            "k_hat": int(self.k_hat),
            "t_n": float(self.t_n),
            "threshold": float(self.threshold),
            "p_value": float(self.p_value),
            "significant": bool(self.significant),
            "alpha": self.alpha,
            "shuffles": int(self.shuffles),
            "k_trees_used": int(self.k_trees_used),
            "segment": [int(self.start) + 1, int(self.stop)],
            "notes": list(self.notes),
            "scan": self.trace.to_dict(),
        }


@dataclass(frozen=True)
class ChangePoint:
    k: int
    p_value: float
    order: int
    statistic: float
    threshold: float


@dataclass(frozen=True)
class SegmentationResult:
    n: int
    change_points: tuple
    tests: tuple
    seed: int | None
    min_segment: int
    notes: tuple = ()
    threshold_policy: str = "recalibrated per segment"

    @property
    def locations(self) -> list[int]:
        return [c.k for c in self.change_points]

    @property
    def segments(self) -> list[tuple[int, int]]:
        """Homogeneous intervals as 1-based inclusive ``(first, last)`` pairs."""
        bounds = [0] + self.locations + [self.n]
        return [(a + 1, b) for a, b in zip(bounds[:-1], bounds[1:])]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "change_points": [
                {"k": c.k, "p_value": c.p_value, "order": c.order,
                 "statistic": c.statistic, "threshold": c.threshold}
                for c in self.change_points
            ],
            "segments": [list(s) for s in self.segments],
            "threshold_policy": self.threshold_policy,
            "min_segment": self.min_segment,
            "notes": list(self.notes),
            "tests": [t.to_dict() for t in self.tests],
        }


def permutation_threshold(null_stats, alpha: float) -> float:
    """Smallest q whose empirical CDF over ``null_stats`` exceeds ``1 - alpha``."""
    s = np.sort(np.asarray(null_stats, dtype=float))
    M = s.size
    # count(T <= q) > (1 - alpha) M  first holds at the order statistic below
    idx = math.floor((1 - alpha) * M + 1e-9)
    return float(s[min(idx, M - 1)])


def permutation_pvalue(t_obs: float, null_stats) -> float:
    null_stats = np.asarray(null_stats, dtype=float)
    return (1 + int(np.sum(null_stats >= t_obs))) / (null_stats.size + 1)


def random_orders(n: int, shuffles: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permuted(np.tile(np.arange(n), (shuffles, 1)), axis=1)


def scan_maxima(graph: SimilarityGraph, kinds, ks, orders=None) -> dict:
    """Observed-style scan maxima for each row of ``orders``.

    Returns ``{kind: (B,) array}`` where entry ``b`` is the maximum over
    ``ks`` of the statistic computed on the sample reordered by
    ``orders[b]`` (identity when ``orders`` is None).
    """
    table = MomentTable.for_graph(graph)
    ks = np.asarray(ks)
    out = {StatKind.parse(kd): [] for kd in kinds}
    blocks = [None] if orders is None else [
        orders[i:i + _CHUNK] for i in range(0, len(orders), _CHUNK)
    ]
    for block in blocks:
        r1, r2 = within_counts(graph, block)
        r1, r2 = r1[:, ks - 1], r2[:, ks - 1]
        for kind in out:
            tr = statistic_traces(r1, r2, table, kind, ks)
            out[kind].append(np.nanmax(tr, axis=1))
    return {kind: np.concatenate(v) for kind, v in out.items()}


def _observed_scan(graph: SimilarityGraph, kind: StatKind, ks: np.ndarray) -> ScanResult:
    table = MomentTable.for_graph(graph)
    r1, r2 = within_counts(graph)
    trace = statistic_traces(r1[0, ks - 1], r2[0, ks - 1], table, kind, ks)
    i = argmax_smallest(trace)
    return ScanResult(kind, ks, trace, int(ks[i]), float(trace[i]))


def permutation_scan(graph: SimilarityGraph, kinds, ks, shuffles: int, rng) -> dict:
    """Observed scans and permutation null maxima for several statistics at once.

    All statistics share the same label permutations; the graph is fixed
    because pairwise distances are invariant to relabeling.
    """
    kinds = [StatKind.parse(k) for k in kinds]
    ks = np.asarray(ks)
    observed = {kind: _observed_scan(graph, kind, ks) for kind in kinds}
    orders = random_orders(graph.n, shuffles, rng)
    null = scan_maxima(graph, kinds, ks, orders)
    return {kind: (observed[kind], null[kind]) for kind in kinds}


def _decide(scan_res: ScanResult, null, alpha: float):
    threshold = permutation_threshold(null, alpha)
    p = permutation_pvalue(scan_res.t_n, null)
    return threshold, p, bool(scan_res.t_n > threshold)


def _resolve_seed(seed) -> int:
    return int(np.random.SeedSequence().entropy) if seed is None else int(seed)


def _rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def amoc_test(sample: FunctionalSample, cfg: DetectionConfig | None = None,
              graph: SimilarityGraph | None = None) -> AmocResult:
    """Single change point test calibrated by random shuffling.

    Builds the distance matrix and K-graph once, scans the observed
    labeling, then rescans ``cfg.shuffles`` random relabelings of the same
    graph.
    """
    cfg = cfg or DetectionConfig()
    if sample.n < cfg.min_segment:
        raise SegmentTooShortError(
            f"sample of length {sample.n} is shorter than min_segment={cfg.min_segment}"
        )
    seed = _resolve_seed(cfg.seed)
    if graph is None:
        d = distance_matrix(sample, cfg.p)
        graph = build_k_graph(d, cfg.tree, cfg.k_trees, cfg.neighbors)
    n0, n1 = default_window(sample.n, *cfg.window)
    check_window(sample.n, n0, n1)
    ks = np.arange(n0, n1 + 1)
    res = permutation_scan(graph, [cfg.statistic], ks, cfg.shuffles, _rng_for(seed))
    observed, null = res[cfg.statistic]
    threshold, p, sig = _decide(observed, null, cfg.alpha)
    return AmocResult(
        k_hat=observed.k_hat, t_n=observed.t_n, threshold=threshold, p_value=p,
        significant=sig, trace=observed, alpha=cfg.alpha, shuffles=cfg.shuffles,
        k_trees_used=graph.k_trees, start=0, stop=sample.n, seed=seed,
    )


def _segment_window(length: int, cfg: DetectionConfig) -> tuple[int, int] | None:
    n0, n1 = default_window(length, *cfg.window)
    n0 = max(n0, cfg.min_segment)
    n1 = min(n1, length - cfg.min_segment)
    return (n0, n1) if n0 <= n1 else None


def binary_segmentation(sample: FunctionalSample,
                        cfg: DetectionConfig | None = None) -> SegmentationResult:
    """Multiple change points by recursive AMOC testing.

    Each tested segment gets its own distance matrix, K-graph and fresh
    permutations (seeded from ``(seed, start, stop)``), so its threshold is
    recalibrated rather than inherited. Candidate splits are restricted so
    that both children keep at least ``cfg.min_segment`` observations.
    """
    cfg = cfg or DetectionConfig()
    if sample.n < cfg.min_segment:
        raise SegmentTooShortError(
            f"sample of length {sample.n} is shorter than min_segment={cfg.min_segment}"
        )
    seed = _resolve_seed(cfg.seed)
    found: list[ChangePoint] = []
    tests: list[AmocResult] = []
    notes: list[str] = []

    def visit(start: int, stop: int) -> None:
        length = stop - start
        if length < cfg.min_segment:
            return
        window = _segment_window(length, cfg)
        if window is None:
            return
        sub = sample.segment(start, stop)
        d = distance_matrix(sub, cfg.p)
        graph, k_used = build_capped_k_graph(d, cfg.tree, cfg.k_trees, cfg.neighbors)
        seg_notes = ()
        if k_used < cfg.k_trees:
            msg = (f"segment [{start + 1}, {stop}]: K capped from {cfg.k_trees} "
                   f"to {k_used} for length {length}")
            notes.append(msg)
            seg_notes = (msg,)
        ks = np.arange(window[0], window[1] + 1)
        rng = _rng_for(seed, start, stop)
        try:
            res = permutation_scan(graph, [cfg.statistic], ks, cfg.shuffles, rng)
        except NoEvaluableSplitError:
            return
        observed, null = res[cfg.statistic]
        threshold, p, sig = _decide(observed, null, cfg.alpha)
        k_global = start + observed.k_hat
        tests.append(AmocResult(
            k_hat=k_global, t_n=observed.t_n, threshold=threshold, p_value=p,
            significant=sig, trace=observed, alpha=cfg.alpha, shuffles=cfg.shuffles,
            k_trees_used=k_used, start=start, stop=stop, seed=seed, notes=seg_notes,
        ))
        if not sig:
            return
        found.append(ChangePoint(k_global, p, len(found) + 1, observed.t_n, threshold))
        visit(start, k_global)
        visit(k_global, stop)

    visit(0, sample.n)
    return SegmentationResult(
        n=sample.n,
        change_points=tuple(sorted(found, key=lambda c: c.k)),
        tests=tuple(tests),
        seed=seed,
        min_segment=cfg.min_segment,
        notes=tuple(notes),
    )


def amoc_all_statistics(sample: FunctionalSample, cfg: DetectionConfig,
                        graph: SimilarityGraph | None = None, kinds=ALL_STATS) -> dict:
    """Run the test for several statistics on one graph and one permutation draw.

    Used by the simulation harness; returns ``{kind: AmocResult}``.
    """
    seed = _resolve_seed(cfg.seed)
    if graph is None:
        graph = build_k_graph(distance_matrix(sample, cfg.p), cfg.tree, cfg.k_trees, cfg.neighbors)
    n0, n1 = default_window(sample.n, *cfg.window)
    check_window(sample.n, n0, n1)
    ks = np.arange(n0, n1 + 1)
    res = permutation_scan(graph, kinds, ks, cfg.shuffles, _rng_for(seed))
    out = {}
    for kind, (observed, null) in res.items():
        threshold, p, sig = _decide(observed, null, cfg.alpha)
        out[kind] = AmocResult(
            k_hat=observed.k_hat, t_n=observed.t_n, threshold=threshold, p_value=p,
            significant=sig, trace=observed, alpha=cfg.alpha, shuffles=cfg.shuffles,
            k_trees_used=graph.k_trees, start=0, stop=sample.n, seed=seed,
        )
    return out
