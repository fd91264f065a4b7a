"""Functional samples on a shared grid, L^p distances and CIDR curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridMismatchError, InvalidParameterError

DEFAULT_P = 2.0


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _check_grid(grid: np.ndarray) -> None:
    if grid.ndim != 1 or grid.size < 2:
        raise InvalidParameterError("grid must be a 1-d array with at least 2 points")
    if not np.all(np.isfinite(grid)):
        raise InvalidParameterError("grid contains non-finite values")
    if np.any(np.diff(grid) <= 0):
        raise InvalidParameterError("grid must be strictly increasing")
    if grid[0] < 0 or grid[-1] > 1:
        raise InvalidParameterError("grid must lie inside [0, 1]")


def uniform_grid(m: int) -> np.ndarray:
    if m < 2:
        raise InvalidParameterError("grid resolution must be at least 2")
    return np.linspace(0.0, 1.0, m)


@dataclass(frozen=True)
class FunctionalSample:
    """An ordered sample of ``n`` curves evaluated on a common grid.

    ``curves[i, j]`` is curve ``i`` at ``grid[j]``. Both arrays are copied
    and made read-only on construction.
    """

    curves: np.ndarray
    grid: np.ndarray

    def __post_init__(self):
        curves = _frozen(self.curves)
        grid = _frozen(self.grid)
        if curves.ndim != 2:
            raise InvalidParameterError("curves must be a 2-d array (n x m)")
        _check_grid(grid)
        if curves.shape[1] != grid.size:
            raise GridMismatchError(
                f"curves have {curves.shape[1]} points but grid has {grid.size}"
            )
        if curves.shape[0] < 2:
            raise InvalidParameterError("a sample needs at least 2 curves")
        if not np.all(np.isfinite(curves)):
            raise InvalidParameterError("curves contain NaN or infinite values")
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "grid", grid)

    @classmethod
    def on_uniform_grid(cls, curves) -> "FunctionalSample":
        curves = np.asarray(curves, dtype=float)
        return cls(curves, uniform_grid(curves.shape[1]))

    @property
    def n(self) -> int:
        return self.curves.shape[0]

    @property
    def m(self) -> int:
        return self.curves.shape[1]

    def __len__(self) -> int:
        return self.n

    def segment(self, start: int, stop: int) -> "FunctionalSample":
        """Curves ``start`` (inclusive) to ``stop`` (exclusive), 0-based."""
        return FunctionalSample(self.curves[start:stop], self.grid)

    def reordered(self, order) -> "FunctionalSample":
        return FunctionalSample(self.curves[np.asarray(order)], self.grid)


@dataclass(frozen=True)
class DistanceMatrix:
    d: np.ndarray
    p: float

    def __post_init__(self):
        d = _frozen(self.d)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InvalidParameterError("distance matrix must be square")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise InvalidParameterError("distances must be finite and nonnegative")
        if not np.array_equal(d, d.T):
            raise InvalidParameterError("distance matrix must be exactly symmetric")
        if np.any(np.diag(d) != 0):
            raise InvalidParameterError("distance matrix must have a zero diagonal")
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def permuted(self, order) -> "DistanceMatrix":
        order = np.asarray(order)
        return DistanceMatrix(self.d[np.ix_(order, order)], self.p)


@dataclass(frozen=True)
class PriceSample:
    prices: np.ndarray
    grid: np.ndarray

    def __post_init__(self):
        prices = _frozen(self.prices)
        grid = _frozen(self.grid)
        if prices.ndim != 2:
            raise InvalidParameterError("prices must be a 2-d array (n x m)")
        _check_grid(grid)
        if prices.shape[1] != grid.size:
            raise GridMismatchError(
                f"prices have {prices.shape[1]} points but grid has {grid.size}"
            )
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            raise DomainError("prices must be finite and strictly positive")
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "grid", grid)


def _check_p(p: float) -> float:
    p = float(p)
    if not np.isfinite(p) or p < 1:
        raise InvalidParameterError(f"norm order must satisfy 1 <= p < inf, got {p}")
    return p


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    """Quadrature weights such that ``w @ f`` is the trapezoid rule on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    h = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def lp_distance(x, y, grid, p: float = DEFAULT_P) -> float:
    """L^p distance between two curves by trapezoidal quadrature on ``grid``."""
    p = _check_p(p)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size != grid.size:
        raise GridMismatchError(
            f"curve lengths {x.shape}, {y.shape} do not match grid of size {grid.size}"
        )
    integral = trapezoid_weights(grid) @ np.abs(x - y) ** p
    return float(integral ** (1.0 / p))


def distance_matrix(sample: FunctionalSample, p: float = DEFAULT_P) -> DistanceMatrix:
    """Pairwise L^p distances; each entry is computed once and mirrored.

    Every entry is reduced along its own row with the same summation order,
    so relabeling the curves permutes the matrix bit for bit.
    """
    p = _check_p(p)
    X = sample.curves
    w = trapezoid_weights(sample.grid)
    n = sample.n
    d = np.zeros((n, n))
    for i in range(n - 1):
        row = (np.abs(X[i + 1:] - X[i]) ** p * w).sum(axis=1)
        d[i, i + 1:] = row ** (1.0 / p)
    d = d + d.T
    return DistanceMatrix(d, p)


def cidr_transform(prices: PriceSample) -> FunctionalSample:
    """Cumulative intraday returns, ``100 * (log P(t_j) - log P(t_1))`` per row."""
    logp = np.log(prices.prices)
    r = 100.0 * (logp - logp[:, :1])
    r[:, 0] = 0.0
    return FunctionalSample(r, prices.grid)
