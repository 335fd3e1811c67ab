"""Nested partitions, quantizers and reference measures.

A scheme is a filtration of finite partitions indexed by level ``l``.  A
point ``x`` quantizes to the index of its cell at level ``l``; cells are
left-open and right-closed wherever the space is ordered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import erfc

from entrod.core import DomainError

MAX_DYADIC_LEVEL = 52  # dyadic midpoints stay exact in float64 up to here


# ---------------------------------------------------------------------------
# normal quantiles

_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam_lower(p: np.ndarray) -> np.ndarray:
    """Acklam's rational approximation for ``0 < p <= 1/2``."""
    z = np.empty_like(p)
    tail = p < _P_LOW
    if np.any(tail):
        q = np.sqrt(-2.0 * np.log(p[tail]))
        z[tail] = ((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
                  ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    mid = ~tail
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        z[mid] = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
                 (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    return z


def standard_normal_quantile(p, refine: bool = True):
    """Inverse standard normal CDF.

    The rational approximation alone has relative error below 1.15e-9; one
    Halley step against ``erfc`` brings it to a few ulps.  Upper-half
    probabilities are reflected so the tail stays accurate near 1.
    """
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any((p_arr <= 0.0) | (p_arr >= 1.0)) or np.any(np.isnan(p_arr)):
        raise DomainError("quantile probability must lie strictly inside (0, 1)")
    upper = p_arr > 0.5
    lower_p = np.where(upper, 1.0 - p_arr, p_arr)
    z = _acklam_lower(np.atleast_1d(lower_p)).reshape(lower_p.shape)
    if refine:
        e = 0.5 * erfc(-z / math.sqrt(2.0)) - lower_p
        u = e * math.sqrt(2.0 * math.pi) * np.exp(z * z / 2.0)
        z = z - u / (1.0 + z * u / 2.0)
    z = np.where(upper, -z, z)
    return float(z) if z.ndim == 0 else z


def gaussian_quantile(p, m: float = 0.0, sigma: float = 1.0):
    """Quantile of ``N(m, sigma**2)`` at probability ``p``."""
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    return m + sigma * standard_normal_quantile(p)


def gaussian_cdf(x, m: float = 0.0, sigma: float = 1.0):
    z = (np.asarray(x, dtype=np.float64) - m) / sigma
    out = 0.5 * erfc(-z / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# schemes


@dataclass(frozen=True)
class FiniteScheme:
    """Finite alphabet ``{0..D-1}`` with the singleton partition at every level."""

    alphabet_size: int
    name = "finite"

    def size(self, l: int) -> int:
        return self.alphabet_size


@dataclass(frozen=True)
class DyadicScheme:
    """Dyadic bins ``((j)/2^l, (j+1)/2^l]`` of the unit interval ``(0, 1]``."""

    name = "dyadic"

    def size(self, l: int) -> int:
        return 2 ** l


@dataclass(frozen=True)
class QuantileScheme:
    """Dyadic bins in probability under a Gaussian reference CDF."""

    m: float = 0.0
    sigma: float = 1.0
    name = "quantile"

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")

    def size(self, l: int) -> int:
        return 2 ** l


@dataclass(frozen=True)
class IncrementalScheme:
    """Partitions ``{1}, ..., {l}, {l+1, l+2, ...}`` of the positive integers."""

    name = "incremental"

    def size(self, l: int) -> int:
        return l + 1


PartitionScheme = Union[FiniteScheme, DyadicScheme, QuantileScheme, IncrementalScheme]


@dataclass(frozen=True)
class Cell:
    level: int
    index: int


# ---------------------------------------------------------------------------
# reference measures


@dataclass(frozen=True)
class CountingMeasure:
    alphabet_size: int
    name = "counting"

    @property
    def total_mass(self) -> float:
        return float(self.alphabet_size)


@dataclass(frozen=True)
class UniformMeasure:
    """Lebesgue measure on ``(0, 1]``."""

    name = "uniform"
    total_mass = 1.0


@dataclass(frozen=True)
class GeometricMeasure:
    """Point masses ``q (1-q)^(m-1)`` on ``m = 1, 2, ...``."""

    q: float
    name = "geometric"
    total_mass = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.q < 1.0:
            raise DomainError("geometric parameter must lie in (0, 1)")

    def log_pmf(self, m):
        m = np.asarray(m, dtype=np.float64)
        if np.any(m < 1):
            raise DomainError("geometric measure lives on positive integers")
        return math.log(self.q) + (m - 1.0) * math.log1p(-self.q)

    def log_tail(self, l):
        """Log mass of ``{l+1, l+2, ...}``."""
        return np.asarray(l, dtype=np.float64) * math.log1p(-self.q)


@dataclass(frozen=True)
class PointMassMeasure:
    """Explicit point masses on ``1..len(masses)``; zero beyond."""

    masses: tuple
    name = "pointmass"

    def __post_init__(self) -> None:
        arr = np.asarray(self.masses, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0 or np.any(arr < 0):
            raise DomainError("point masses must be a nonempty nonnegative vector")
        object.__setattr__(self, "masses", tuple(float(v) for v in arr))

    @property
    def total_mass(self) -> float:
        return math.fsum(self.masses)

    def log_pmf(self, m):
        arr = np.asarray(self.masses)
        m = np.asarray(m, dtype=np.int64)
        if np.any(m < 1):
            raise DomainError("point masses live on positive integers")
        with np.errstate(divide="ignore"):
            vals = np.where(m <= arr.size, np.log(arr[np.clip(m - 1, 0, arr.size - 1)]), -np.inf)
        return vals

    def log_tail(self, l):
        arr = np.asarray(self.masses)
        suffix = np.concatenate((np.cumsum(arr[::-1])[::-1], [0.0]))
        l = np.asarray(l, dtype=np.int64)
        with np.errstate(divide="ignore"):
            return np.log(suffix[np.clip(l, 0, arr.size)])


@dataclass(frozen=True)
class GaussianMeasure:
    m: float = 0.0
    sigma: float = 1.0
    name = "gaussian"
    total_mass = 1.0

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")

    def log_density(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.m) / self.sigma
        return -0.5 * z * z - math.log(self.sigma * math.sqrt(2.0 * math.pi))


ReferenceMeasure = Union[CountingMeasure, UniformMeasure, GeometricMeasure,
                         PointMassMeasure, GaussianMeasure]


# ---------------------------------------------------------------------------
# quantization


def quantize_levels(values, max_level: int, scheme: PartitionScheme) -> np.ndarray:
    """Cell indices of every point at levels ``0..max_level`` (shape ``(max_level+1, n)``).

    Dyadic and quantile schemes descend the binary tree one level at a
    time, comparing each point with the midpoint edge of its current cell,
    so nesting holds by construction.
    """
    if max_level < 0:
        raise ValueError("level must be nonnegative")
    if isinstance(scheme, FiniteScheme):
        s = np.asarray(values, dtype=np.int64).reshape(-1)
        if s.size and (s.min() < 0 or s.max() >= scheme.alphabet_size):
            raise DomainError("symbol outside the finite alphabet")
        return np.broadcast_to(s, (max_level + 1, s.size)).copy()
    if isinstance(scheme, IncrementalScheme):
        s = np.asarray(values)
        if s.size and (np.any(s != np.floor(s)) or s.min() < 1):
            raise DomainError("incremental scheme needs positive integers")
        s = s.astype(np.int64).reshape(-1)
        lv = np.arange(max_level + 1, dtype=np.int64)[:, None]
        return np.minimum(s[None, :], lv + 1) - 1
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if max_level > MAX_DYADIC_LEVEL:
        raise ValueError(f"dyadic levels above {MAX_DYADIC_LEVEL} are not representable")
    if isinstance(scheme, DyadicScheme):
        if x.size and (np.any(~(x > 0.0)) or np.any(x > 1.0)):
            raise DomainError("dyadic scheme lives on (0, 1]")
        lv = np.arange(max_level + 1, dtype=np.float64)[:, None]
        return (np.ceil(x[None, :] * 2.0 ** lv) - 1.0).astype(np.int64)
    if isinstance(scheme, QuantileScheme):
        if not np.all(np.isfinite(x)):
            raise DomainError("quantile scheme needs finite reals")
        out = np.zeros((max_level + 1, x.size), dtype=np.int64)
        idx = np.zeros(x.size, dtype=np.int64)
        for j in range(1, max_level + 1):
            p = (2.0 * idx + 1.0) / 2.0 ** j
            edge = gaussian_quantile(p, scheme.m, scheme.sigma)
            idx = 2 * idx + (x > edge)
            out[j] = idx
        return out
    raise TypeError(f"unknown scheme {scheme!r}")


def quantize(x, l: int, scheme: PartitionScheme) -> Cell:
    """Level-``l`` cell containing the point ``x``."""
    return Cell(l, int(quantize_levels([x], l, scheme)[l, 0]))


def log_cell_masses(indices: np.ndarray, l: int, mu: ReferenceMeasure,
                    scheme: PartitionScheme) -> np.ndarray:
    """Log reference mass of each level-``l`` cell index in ``indices``."""
    idx = np.asarray(indices, dtype=np.int64)
    if isinstance(scheme, FiniteScheme):
        if isinstance(mu, CountingMeasure):
            return np.zeros(idx.shape)
        if isinstance(mu, PointMassMeasure):
            return mu.log_pmf(idx + 1)
    elif isinstance(scheme, DyadicScheme):
        if isinstance(mu, UniformMeasure):
            return np.full(idx.shape, -l * math.log(2.0))
    elif isinstance(scheme, QuantileScheme):
        if isinstance(mu, GaussianMeasure) and (mu.m, mu.sigma) == (scheme.m, scheme.sigma):
            return np.full(idx.shape, -l * math.log(2.0))
    elif isinstance(scheme, IncrementalScheme):
        if isinstance(mu, (GeometricMeasure, PointMassMeasure)):
            single = idx < l
            out = np.empty(idx.shape)
            out[single] = mu.log_pmf(idx[single] + 1)
            out[~single] = mu.log_tail(l)
            return out
    raise DomainError(f"reference measure {mu.name} is incompatible with the {scheme.name} scheme")


def cell_mass(c: Cell, mu: ReferenceMeasure, scheme: PartitionScheme) -> float:
    if not 0 <= c.index < scheme.size(c.level):
        raise DomainError("cell index out of range for its level")
    if c.level == 0 and not isinstance(scheme, FiniteScheme):
        log_cell_masses(np.zeros(1), 0, mu, scheme)  # compatibility check
        return float(mu.total_mass)
    if isinstance(scheme, (DyadicScheme, QuantileScheme)):
        log_cell_masses(np.zeros(1), c.level, mu, scheme)
        return math.ldexp(1.0, -c.level)
    return float(np.exp(log_cell_masses(np.array([c.index]), c.level, mu, scheme)[0]))


def min_separating_level(x, scheme: PartitionScheme, level_cap: int = 40) -> Optional[int]:
    """Least level putting all points in distinct cells; ``None`` if above ``level_cap``."""
    if not isinstance(scheme, (DyadicScheme, QuantileScheme)):
        raise DomainError("separating level is defined for dyadic and quantile schemes")
    q = quantize_levels(x, level_cap, scheme)
    n = q.shape[1]
    for l in range(level_cap + 1):
        if np.unique(q[l]).size == n:
            return l
    return None
