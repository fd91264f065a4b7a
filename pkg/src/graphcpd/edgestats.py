"""Edge-count scan statistics and their exact permutation-null moments.

For a split ``k`` the first group is observations ``1..k`` (vertices
``0..k-1``). Moments are taken over a uniformly random relabeling of the
vertices with the edge set held fixed; they depend on the graph only
through ``n``, the edge count and the number of edge pairs that share a
vertex. They are computed in exact rational arithmetic, so a variance that
is zero is exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import InvalidParameterError, NoEvaluableSplitError
from .graphs import SimilarityGraph

PINV_RTOL = 1e-12


class StatKind(str, Enum):
    ORIGINAL = "original"
    WEIGHTED = "weighted"
    GENERALIZED = "generalized"
    MAXTYPE = "maxtype"

    @classmethod
    def parse(cls, value) -> "StatKind":
        if isinstance(value, cls):
            return value
        aliases = {"o": "original", "w": "weighted", "g": "generalized", "m": "maxtype",
                   "max-type": "maxtype", "max": "maxtype"}
        key = str(value).lower()
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise InvalidParameterError(
                f"unknown statistic {value!r}; expected original, weighted, generalized or maxtype"
            ) from None


ALL_STATS = tuple(StatKind)


@dataclass(frozen=True)
class EdgeCounts:
    k: int
    r0: int
    r1: int
    r2: int


@dataclass(frozen=True)
class NullMoments:
    k: int
    n: int
    n_edges: int
    mean_r0: float
    var_r0: float
    mean_r1: float
    mean_r2: float
    var_r1: float
    var_r2: float
    cov_r1r2: float
    mean_rw: float
    var_rw: float
    mean_rd: float
    var_rd: float
    sigma_R: np.ndarray

    @property
    def weights(self) -> tuple[float, float]:
        """Coefficients of ``R_1`` and ``R_2`` in ``R_w``."""
        return _rw_weights(self.n, self.k)


@dataclass(frozen=True)
class ScanResult:
    kind: StatKind
    ks: np.ndarray
    trace: np.ndarray
    k_hat: int
    t_n: float

    @property
    def n0(self) -> int:
        return int(self.ks[0])

    @property
    def n1(self) -> int:
        return int(self.ks[-1])

    def to_dict(self) -> dict:
        return {
            "statistic": self.kind.value,
            "k": [int(k) for k in self.ks],
            "trace": [None if not np.isfinite(v) else float(v) for v in self.trace],
            "k_hat": int(self.k_hat),
            "t_n": float(self.t_n),
        }


def _check_k(n: int, k: int) -> None:
    if not 1 <= k < n:
        raise InvalidParameterError(f"split index must satisfy 1 <= k < n={n}, got {k}")


def _rw_weights(n: int, k: int) -> tuple[float, float]:
    if n <= 2:
        return (math.nan, math.nan)
    return ((n - k - 1) / (n - 2), (k - 1) / (n - 2))


def shared_vertex_pairs(g: SimilarityGraph) -> int:
    """Number of unordered edge pairs with a common endpoint."""
    deg = g.degrees().astype(np.int64)
    return int((deg * (deg - 1) // 2).sum())


def _falling(x: int, r: int) -> int:
    out = 1
    for i in range(r):
        out *= x - i
    return out


def _ratio(num: int, den: int) -> Fraction:
    return Fraction(num, den) if den else Fraction(0)


@lru_cache(maxsize=4096)
def _exact_moments(n: int, n_edges: int, shared: int, k: int) -> dict:
    E = n_edges
    disjoint = E * (E - 1) // 2 - shared
    nn2, nn3, nn4 = _falling(n, 2), _falling(n, 3), _falling(n, 4)
    m = n - k
    p1 = _ratio(_falling(k, 2), nn2)
    p2 = _ratio(_falling(m, 2), nn2)
    p1_3 = _ratio(_falling(k, 3), nn3)
    p2_3 = _ratio(_falling(m, 3), nn3)
    p1_4 = _ratio(_falling(k, 4), nn4)
    p2_4 = _ratio(_falling(m, 4), nn4)
    q = _ratio(_falling(k, 2) * _falling(m, 2), nn4)

    mean1, mean2 = E * p1, E * p2
    var1 = E * p1 + 2 * shared * p1_3 + 2 * disjoint * p1_4 - mean1 ** 2
    var2 = E * p2 + 2 * shared * p2_3 + 2 * disjoint * p2_4 - mean2 ** 2
    cov = 2 * disjoint * q - mean1 * mean2
    out = {
        "mean_r1": mean1, "mean_r2": mean2,
        "var_r1": var1, "var_r2": var2, "cov_r1r2": cov,
        "mean_r0": E - mean1 - mean2,
        "var_r0": var1 + var2 + 2 * cov,
        "mean_rd": mean1 - mean2,
        "var_rd": var1 + var2 - 2 * cov,
    }
    if n > 2:
        a, b = Fraction(n - k - 1, n - 2), Fraction(k - 1, n - 2)
        out["mean_rw"] = a * mean1 + b * mean2
        out["var_rw"] = a * a * var1 + b * b * var2 + 2 * a * b * cov
    return out


def edge_counts(g: SimilarityGraph, k: int) -> EdgeCounts:
    _check_k(g.n, k)
    e = g.edges
    in1 = e < k
    r1 = int(np.sum(in1[:, 0] & in1[:, 1]))
    r2 = int(np.sum(~in1[:, 0] & ~in1[:, 1]))
    return EdgeCounts(k, g.n_edges - r1 - r2, r1, r2)


def null_moments(g: SimilarityGraph, k: int) -> NullMoments:
    _check_k(g.n, k)
    ex = _exact_moments(g.n, g.n_edges, shared_vertex_pairs(g), k)
    f = {key: float(v) for key, v in ex.items()}
    sigma = np.array([[f["var_r1"], f["cov_r1r2"]], [f["cov_r1r2"], f["var_r2"]]])
    return NullMoments(
        k=k, n=g.n, n_edges=g.n_edges,
        mean_r0=f["mean_r0"], var_r0=f["var_r0"],
        mean_r1=f["mean_r1"], mean_r2=f["mean_r2"],
        var_r1=f["var_r1"], var_r2=f["var_r2"], cov_r1r2=f["cov_r1r2"],
        mean_rw=f.get("mean_rw", math.nan), var_rw=f.get("var_rw", math.nan),
        mean_rd=f["mean_rd"], var_rd=f["var_rd"],
        sigma_R=sigma,
    )


def _inv_sd(var: float) -> float:
    return 1.0 / math.sqrt(var) if var > 0 else math.nan


def _sigma_inverse(sigma: np.ndarray) -> np.ndarray:
    """Inverse of the 2x2 covariance, or its pseudo-inverse when singular.

    Rank zero yields NaNs so that the split is treated as non-evaluable.
    """
    s = np.linalg.svd(sigma, compute_uv=False)
    if s[0] <= 0:
        return np.full((2, 2), math.nan)
    return np.linalg.pinv(sigma, rcond=PINV_RTOL)


def stat_original(counts: EdgeCounts, moments: NullMoments) -> float:
    return -(counts.r0 - moments.mean_r0) * _inv_sd(moments.var_r0)


def stat_weighted(counts: EdgeCounts, moments: NullMoments) -> float:
    a, b = moments.weights
    rw = a * counts.r1 + b * counts.r2
    return (rw - moments.mean_rw) * _inv_sd(moments.var_rw)


def stat_diff(counts: EdgeCounts, moments: NullMoments) -> float:
    rd = counts.r1 - counts.r2
    return (rd - moments.mean_rd) * _inv_sd(moments.var_rd)


def stat_generalized(counts: EdgeCounts, moments: NullMoments) -> float:
    x = np.array([counts.r1 - moments.mean_r1, counts.r2 - moments.mean_r2])
    return float(x @ _sigma_inverse(moments.sigma_R) @ x)


def stat_maxtype(counts: EdgeCounts, moments: NullMoments) -> float:
    """``max(Z_w, |Z_diff|)``.

    A component whose null variance is exactly zero is a constant equal to
    its mean, so it contributes 0 (e.g. ``R_1 - R_2`` on a perfect
    matching). The split is non-evaluable only if both are constant.
    """
    zw = 0.0 if moments.var_rw == 0 else stat_weighted(counts, moments)
    zd = 0.0 if moments.var_rd == 0 else stat_diff(counts, moments)
    if (moments.var_rw == 0 and moments.var_rd == 0) or math.isnan(zw) or math.isnan(zd):
        return math.nan
    return max(zw, abs(zd))


STAT_FUNCTIONS = {
    StatKind.ORIGINAL: stat_original,
    StatKind.WEIGHTED: stat_weighted,
    StatKind.GENERALIZED: stat_generalized,
    StatKind.MAXTYPE: stat_maxtype,
}


# ---------------------------------------------------------------------------
# vectorised sweep over all splits


@dataclass(frozen=True)
class MomentTable:
    """Null moments for every split ``k = 1..n-1`` (row ``k - 1``).

    Standard deviations are stored as reciprocals; non-evaluable splits
    carry NaN.
    """

    n: int
    n_edges: int
    mean_r0: np.ndarray
    inv_sd_r0: np.ndarray
    mean_r1: np.ndarray
    mean_r2: np.ndarray
    a_w: np.ndarray
    b_w: np.ndarray
    mean_rw: np.ndarray
    inv_sd_rw: np.ndarray
    mean_rd: np.ndarray
    inv_sd_rd: np.ndarray
    sigma_inv: np.ndarray  # (n-1, 2, 2)
    rw_constant: np.ndarray
    rd_constant: np.ndarray

    @classmethod
    def for_graph(cls, g: SimilarityGraph) -> "MomentTable":
        return _moment_table(g.n, g.n_edges, shared_vertex_pairs(g))


@lru_cache(maxsize=256)
def _moment_table(n: int, n_edges: int, shared: int) -> MomentTable:
    cols = {key: [] for key in ("mean_r0", "inv_sd_r0", "mean_r1", "mean_r2", "a_w", "b_w",
                                "mean_rw", "inv_sd_rw", "mean_rd", "inv_sd_rd")}
    sig_inv = []
    rw_const, rd_const = [], []
    for k in range(1, n):
        ex = _exact_moments(n, n_edges, shared, k)
        a, b = _rw_weights(n, k)
        cols["mean_r0"].append(float(ex["mean_r0"]))
        cols["inv_sd_r0"].append(_inv_sd(float(ex["var_r0"])))
        cols["mean_r1"].append(float(ex["mean_r1"]))
        cols["mean_r2"].append(float(ex["mean_r2"]))
        cols["a_w"].append(a)
        cols["b_w"].append(b)
        cols["mean_rw"].append(float(ex.get("mean_rw", math.nan)))
        cols["inv_sd_rw"].append(_inv_sd(float(ex.get("var_rw", 0))))
        cols["mean_rd"].append(float(ex["mean_rd"]))
        cols["inv_sd_rd"].append(_inv_sd(float(ex["var_rd"])))
        rw_const.append(ex.get("var_rw", 1) == 0)
        rd_const.append(ex["var_rd"] == 0)
        v1, v2, c = float(ex["var_r1"]), float(ex["var_r2"]), float(ex["cov_r1r2"])
        sig_inv.append(_sigma_inverse(np.array([[v1, c], [c, v2]])))
    arrays = {key: np.array(v, dtype=float) for key, v in cols.items()}
    table = MomentTable(n=n, n_edges=n_edges, sigma_inv=np.array(sig_inv),
                        rw_constant=np.array(rw_const), rd_constant=np.array(rd_const), **arrays)
    for v in vars(table).values():
        if isinstance(v, np.ndarray):
            v.setflags(write=False)
    return table


def within_counts(g: SimilarityGraph, orders=None) -> tuple[np.ndarray, np.ndarray]:
    """``R_1`` and ``R_2`` for every split, in one pass over the edges.

    Parameters
    ----------
    g : SimilarityGraph
    orders : array of shape (B, n), optional
        Each row is a reordering of the observations: row ``b`` describes
        the sample ``X[orders[b]]``. Omitted means the identity order.

    Returns
    -------
    r1, r2 : arrays of shape (B, n - 1)
        Column ``k - 1`` holds the counts at split ``k``.
    """
    n = g.n
    if orders is None:
        pos = np.arange(n)[None, :]
    else:
        orders = np.atleast_2d(np.asarray(orders))
        pos = np.empty_like(orders)
        rows = np.arange(orders.shape[0])[:, None]
        pos[rows, orders] = np.arange(n)[None, :]
    B = pos.shape[0]
    pi = pos[:, g.edges[:, 0]]
    pj = pos[:, g.edges[:, 1]]
    offset = (np.arange(B) * n)[:, None]
    hi = np.maximum(pi, pj) + offset
    lo = np.minimum(pi, pj) + offset
    c_hi = np.bincount(hi.ravel(), minlength=B * n).reshape(B, n).cumsum(axis=1)
    c_lo = np.bincount(lo.ravel(), minlength=B * n).reshape(B, n).cumsum(axis=1)
    r1 = c_hi[:, :-1]
    r2 = g.n_edges - c_lo[:, :-1]
    return r1, r2


def statistic_traces(r1, r2, table: MomentTable, kind, ks=None) -> np.ndarray:
    """Evaluate one statistic on count arrays; NaN marks non-evaluable splits.

    ``r1`` and ``r2`` have trailing dimension matching ``ks`` (default: all
    splits ``1..n-1``).
    """
    kind = StatKind.parse(kind)
    idx = slice(None) if ks is None else np.asarray(ks) - 1
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    if kind is StatKind.ORIGINAL:
        r0 = table.n_edges - r1 - r2
        return -(r0 - table.mean_r0[idx]) * table.inv_sd_r0[idx]
    if kind is StatKind.GENERALIZED:
        x1 = r1 - table.mean_r1[idx]
        x2 = r2 - table.mean_r2[idx]
        s = table.sigma_inv[idx]
        return s[..., 0, 0] * x1 * x1 + 2 * s[..., 0, 1] * x1 * x2 + s[..., 1, 1] * x2 * x2
    zw = (table.a_w[idx] * r1 + table.b_w[idx] * r2 - table.mean_rw[idx]) * table.inv_sd_rw[idx]
    if kind is StatKind.WEIGHTED:
        return zw
    zd = (r1 - r2 - table.mean_rd[idx]) * table.inv_sd_rd[idx]
    # constant components contribute 0; NaN survives only where both are constant
    w_const, d_const = table.rw_constant[idx], table.rd_constant[idx]
    zw = np.where(w_const & ~d_const, 0.0, zw)
    zd = np.where(d_const & ~w_const, 0.0, zd)
    return np.maximum(zw, np.abs(zd))


def z_diff_trace(r1, r2, table: MomentTable, ks=None) -> np.ndarray:
    idx = slice(None) if ks is None else np.asarray(ks) - 1
    return (np.asarray(r1, float) - r2 - table.mean_rd[idx]) * table.inv_sd_rd[idx]


def default_window(n: int, lower: float = 0.05, upper: float = 0.95) -> tuple[int, int]:
    """Scan window ``[max(2, ceil(lower*n)), min(n-2, floor(upper*n))]``.

    Fractions are converted through their decimal string so that e.g.
    ``0.05 * 40`` gives exactly 2.
    """
    lo = Fraction(str(lower)) * n
    hi = Fraction(str(upper)) * n
    n0 = max(2, math.ceil(lo))
    n1 = min(n - 2, math.floor(hi))
    return n0, n1


def check_window(n: int, n0: int, n1: int) -> None:
    if not 1 <= n0 <= n1 < n:
        raise InvalidParameterError(
            f"scan window must satisfy 1 <= n0 <= n1 < n; got n0={n0}, n1={n1}, n={n}"
        )


def argmax_smallest(trace: np.ndarray) -> int:
    """Index of the maximum ignoring NaN; the first index wins ties."""
    if np.all(np.isnan(trace)):
        raise NoEvaluableSplitError("no split in the scan window is evaluable")
    return int(np.nanargmax(trace))


def scan(g: SimilarityGraph, kind=StatKind.MAXTYPE, n0: int | None = None,
         n1: int | None = None) -> ScanResult:
    """Evaluate a statistic over ``k = n0..n1`` and locate its maximum."""
    kind = StatKind.parse(kind)
    d0, d1 = default_window(g.n)
    n0 = d0 if n0 is None else n0
    n1 = d1 if n1 is None else n1
    check_window(g.n, n0, n1)
    ks = np.arange(n0, n1 + 1)
    r1, r2 = within_counts(g)
    table = MomentTable.for_graph(g)
    trace = statistic_traces(r1[0, ks - 1], r2[0, ks - 1], table, kind, ks)
    i = argmax_smallest(trace)
    return ScanResult(kind, ks, trace, int(ks[i]), float(trace[i]))
