"""Shared numeric foundations: log-domain sums, mixture weights, records."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

NEG_INF = -math.inf


class DomainError(ValueError):
    """An input lies outside the domain of a density or partition."""


@dataclass(frozen=True)
class Sequence:
    """A finite sample, symbolic (nonnegative integers) or real-valued.

    ``values`` is stored as a read-only numpy array (int64 or float64).
    """

    values: np.ndarray
    kind: str = "symbolic"
    alphabet_size: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind not in ("symbolic", "real"):
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        dtype = np.int64 if self.kind == "symbolic" else np.float64
        arr = np.array(self.values, dtype=dtype).reshape(-1)
        if self.kind == "symbolic" and arr.size and arr.min() < 0:
            raise DomainError("symbolic values must be nonnegative")
        if self.alphabet_size is not None:
            if self.kind != "symbolic":
                raise ValueError("alphabet_size only applies to symbolic sequences")
            if arr.size and arr.max() >= self.alphabet_size:
                raise DomainError(
                    f"symbol {int(arr.max())} outside alphabet of size {self.alphabet_size}"
                )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def symbolic(cls, values: Iterable[int], alphabet_size: Optional[int] = None) -> "Sequence":
        return cls(np.asarray(list(values) if not isinstance(values, np.ndarray) else values),
                   "symbolic", alphabet_size)

    @classmethod
    def real(cls, values: Iterable[float]) -> "Sequence":
        return cls(np.asarray(list(values) if not isinstance(values, np.ndarray) else values),
                   "real")

    def __len__(self) -> int:
        return int(self.values.size)

    def prefix(self, m: int) -> "Sequence":
        return Sequence(self.values[:m], self.kind, self.alphabet_size)


@dataclass(frozen=True)
class LogDensity:
    """A natural-log density value with truncation diagnostics.

    ``tail_error_bound_log`` is the log of an upper bound on the absolute
    gap between the reported density and the exact one; it is ``None``
    exactly when ``tail_exact`` holds.  ``lower_bound`` marks values that
    are certified lower bounds on the density (truncated series without a
    closed-form tail).
    """

    log_value: float
    truncation_level: int
    tail_exact: bool = True
    tail_error_bound_log: Optional[float] = None
    lower_bound: bool = False
    saturated: bool = False

    def __post_init__(self) -> None:
        if self.tail_exact and self.tail_error_bound_log is not None:
            raise ValueError("exact tail cannot carry an error bound")

    def __float__(self) -> float:
        return self.log_value


def as_symbols(x) -> np.ndarray:
    """Coerce a symbolic ``Sequence`` or array-like to a 1-D int64 array."""
    if isinstance(x, Sequence):
        if x.kind != "symbolic":
            raise DomainError("expected a symbolic sequence")
        return x.values
    arr = np.asarray(x, dtype=np.int64).reshape(-1)
    if arr.size and arr.min() < 0:
        raise DomainError("symbolic values must be nonnegative")
    return arr


def as_reals(x) -> np.ndarray:
    if isinstance(x, Sequence):
        return x.values.astype(np.float64, copy=False)
    return np.asarray(x, dtype=np.float64).reshape(-1)


def log_sum_exp(terms) -> float:
    """Stable ``log(sum(exp(terms)))``; ``-inf`` for an empty input."""
    a = np.asarray(terms, dtype=np.float64).reshape(-1)
    if a.size == 0:
        return NEG_INF
    top = a.max()
    if top == NEG_INF:
        return NEG_INF
    if top == math.inf:
        return math.inf
    return float(top + math.log(np.exp(a - top).sum()))


def log_sum_exp_axis(a: np.ndarray, axis: int = 0) -> np.ndarray:
    """Columnwise ``log_sum_exp`` for 2-D arrays; ``-inf`` columns stay ``-inf``."""
    a = np.asarray(a, dtype=np.float64)
    top = a.max(axis=axis, keepdims=True)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(a - safe).sum(axis=axis, keepdims=True)) + safe
    return np.squeeze(out, axis=axis)


def weight(j: int) -> float:
    """Mixture weight ``1/(j+1) - 1/(j+2)`` of order or level ``j``."""
    if j < 0:
        raise ValueError("order must be nonnegative")
    return 1.0 / ((j + 1) * (j + 2))


def tail_weight(j: int) -> float:
    """Total weight of all orders ``>= j``, which telescopes to ``1/(j+1)``."""
    if j < 0:
        raise ValueError("order must be nonnegative")
    return 1.0 / (j + 1)


def log_weight(j) -> np.ndarray | float:
    j = np.asarray(j, dtype=np.float64)
    out = -np.log(j + 1.0) - np.log(j + 2.0)
    return float(out) if out.ndim == 0 else out


def log_tail_weight(j) -> np.ndarray | float:
    j = np.asarray(j, dtype=np.float64)
    out = -np.log(j + 1.0)
    return float(out) if out.ndim == 0 else out


def default_grid(n_max: int, start_exp: int = 4) -> np.ndarray:
    """Report points ``2^4, 2^5, ...`` up to ``n_max``, with ``n_max`` appended."""
    if n_max < 1:
        raise ValueError("n_max must be positive")
    pts = []
    e = start_exp
    while 2 ** e <= n_max:
        pts.append(2 ** e)
        e += 1
    if not pts or pts[-1] != n_max:
        pts.append(n_max)
    return np.asarray(pts, dtype=np.int64)


def check_grid(grid, n: int) -> np.ndarray:
    g = np.asarray(grid, dtype=np.int64).reshape(-1)
    if g.size == 0:
        raise ValueError("empty grid")
    if np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing")
    if g[0] < 1 or g[-1] > n:
        raise ValueError(f"grid points must lie in [1, {n}]")
    return g
