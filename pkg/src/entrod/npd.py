"""NPD densities and entropy-rate estimators built on them.

The level-``l`` NPD density divides the total PPM density of the level-``l``
quantized string (alphabet ``chi_l``) by the reference masses of the
visited cells.  The total NPD density mixes all levels with the same
weights as the PPM order mixture.

Tail handling per scheme
------------------------
finite
    Every level is the same singleton partition, so the mixture collapses
    to a single exact term.
dyadic / quantile
    Once all points sit in distinct cells (level ``M``) a level term is
    ``(1 + a_l) / 2`` with ``1 - m(m-1)/2^(l+1) <= a_l <= 1``, so terms
    ``l < M + margin`` are evaluated and the rest replaced by the
    closed-form value 1.  The absolute gap is bounded by
    ``tail_weight(T) * m(m-1) / 2^(T+2)`` and reported.
incremental
    Levels up to ``max(x) + margin`` are summed; the result is a certified
    lower bound on the density.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from entrod.core import (
    DomainError,
    LogDensity,
    as_reals,
    as_symbols,
    check_grid,
    default_grid,
    log_sum_exp_axis,
    log_tail_weight,
    log_weight,
    weight,
)
from entrod.ppm import ppm_profile
from entrod.quantization import (
    CountingMeasure,
    DyadicScheme,
    FiniteScheme,
    GaussianMeasure,
    GeometricMeasure,
    IncrementalScheme,
    PartitionScheme,
    PointMassMeasure,
    QuantileScheme,
    ReferenceMeasure,
    log_cell_masses,
    quantize_levels,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NpdConfig:
    scheme: PartitionScheme
    mu: ReferenceMeasure
    level_cap: int = 40
    margin: int = 4

    def __post_init__(self) -> None:
        if self.level_cap < 1:
            raise ValueError("level_cap must be at least 1")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")
        # raises on incompatible pairs
        log_cell_masses(np.zeros(1, dtype=np.int64), 1, self.mu, self.scheme)

    @property
    def real_valued(self) -> bool:
        return isinstance(self.scheme, (DyadicScheme, QuantileScheme))


@dataclass(frozen=True)
class LevelTerm:
    level: int
    log_npd: float
    log_r: float
    log_mu: float


@dataclass(frozen=True)
class OptimalOrders:
    q: int
    r: int
    objective: float


@dataclass
class EstimateTrajectory:
    """Per-grid-point estimates in nats plus correction terms and diagnostics."""

    grid: np.ndarray
    estimate: np.ndarray
    metric: str
    corrections: Dict[str, np.ndarray] = field(default_factory=dict)
    diagnostics: Dict[str, np.ndarray] = field(default_factory=dict)
    flags: tuple = ()

    def __post_init__(self) -> None:
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if len(self.estimate) != len(self.grid):
            raise ValueError("one estimate per grid point")


def _values(x, cfg: NpdConfig) -> np.ndarray:
    if cfg.real_valued:
        return as_reals(x)
    return as_symbols(x)


def _prefix_sums(a: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    return np.concatenate(([0.0], np.cumsum(a)))[lengths]


# ---------------------------------------------------------------------------
# level terms


def npd_level_log_density(x, l: int, cfg: NpdConfig) -> LevelTerm:
    """``log R^l(x^l) - sum log mu(x_i^l)`` with ``R^l`` the total PPM density on ``chi_l``."""
    v = _values(x, cfg)
    idx = quantize_levels(v, l, cfg.scheme)[l]
    log_r = float(ppm_profile(idx, cfg.scheme.size(l)).log_total()[0])
    log_mu = float(np.sum(log_cell_masses(idx, l, cfg.mu, cfg.scheme)))
    return LevelTerm(l, log_r - log_mu, log_r, log_mu)


def _level_matrix(q: np.ndarray, levels, cfg: NpdConfig, lengths: np.ndarray):
    """Level terms on every prefix plus each level's first-repeat prefix length."""
    terms = np.empty((len(levels), lengths.size))
    first = np.empty(len(levels), dtype=np.int64)
    for row, l in enumerate(levels):
        prof = ppm_profile(q[l], cfg.scheme.size(l), lengths=lengths)
        lm = log_cell_masses(q[l], l, cfg.mu, cfg.scheme)
        terms[row] = prof.log_total() - _prefix_sums(lm, lengths)
        first[row] = prof.first_repeat
    return terms, first


@dataclass
class NpdProfile:
    lengths: np.ndarray
    log_total: np.ndarray
    truncation: np.ndarray
    separating: np.ndarray  # -1 when saturated or not applicable
    error_bound_log: np.ndarray  # nan when exact / not applicable
    tail_exact: bool
    lower_bound: bool
    saturated: np.ndarray

    def log_density(self, g: int = -1) -> LogDensity:
        err = self.error_bound_log[g]
        has_err = not np.isnan(err)
        return LogDensity(
            float(self.log_total[g]),
            int(self.truncation[g]),
            tail_exact=self.tail_exact or not (self.lower_bound or has_err),
            tail_error_bound_log=float(err) if has_err else None,
            lower_bound=self.lower_bound,
            saturated=bool(self.saturated[g]),
        )


def npd_profile(x, cfg: NpdConfig, lengths=None) -> NpdProfile:
    """Total NPD log density of each prefix ``x[:m]``, ``m`` in ``lengths``."""
    v = _values(x, cfg)
    n = v.size
    lengths = np.asarray([n] if lengths is None else lengths, dtype=np.int64).reshape(-1)
    G = lengths.size
    nan = np.full(G, np.nan)
    none = np.full(G, -1, dtype=np.int64)
    sat0 = np.zeros(G, dtype=bool)

    if isinstance(cfg.scheme, FiniteScheme):
        D = cfg.scheme.alphabet_size
        if v.size and v.max() >= D:
            raise DomainError("symbol outside the finite alphabet")
        prof = ppm_profile(v, D, lengths=lengths)
        lm = log_cell_masses(v, 0, cfg.mu, cfg.scheme)
        tot = prof.log_total() - _prefix_sums(lm, lengths)
        return NpdProfile(lengths, tot, np.zeros(G, dtype=np.int64), none, nan, True, False, sat0)

    if isinstance(cfg.scheme, IncrementalScheme):
        top = int(v.max()) if n else 1
        n_levels = top + cfg.margin + 1
        q = quantize_levels(v, n_levels - 1, cfg.scheme)
        terms, _ = _level_matrix(q, range(n_levels), cfg, lengths)
        running_max = np.maximum.accumulate(v) if n else v
        pmax = np.array([running_max[m - 1] if m else 1 for m in lengths], dtype=np.int64)
        trunc = pmax + cfg.margin
        lv = np.arange(n_levels)[:, None]
        masked = np.where(lv <= trunc[None, :], log_weight(lv) + terms, -np.inf)
        tot = log_sum_exp_axis(masked, axis=0)
        return NpdProfile(lengths, tot, trunc, none, nan, False, True, sat0)

    # dyadic / quantile
    cap = cfg.level_cap
    q = quantize_levels(v, cap, cfg.scheme)
    # separating level of every prefix from the first-collision position per level
    first = np.empty(cap + 1, dtype=np.int64)
    for l in range(cap + 1):
        first[l] = _first_repeat(q[l])
    sep = np.full(G, -1, dtype=np.int64)
    for g, m in enumerate(lengths):
        ok = np.flatnonzero(first > m)
        sep[g] = ok[0] if ok.size else -1
    saturated = sep < 0
    trunc = np.where(saturated, cap + 1, np.minimum(sep + cfg.margin, cap + 1))
    n_levels = int(trunc.max())
    terms, _ = _level_matrix(q, range(n_levels), cfg, lengths)
    lv = np.arange(n_levels)[:, None]
    masked = np.where(lv < trunc[None, :], log_weight(lv) + terms, -np.inf)
    tail = log_tail_weight(trunc).astype(np.float64)
    err = np.full(G, np.nan)
    reach = trunc.copy()
    for g in range(G):
        m = int(lengths[g])
        if saturated[g]:
            # level terms beyond the cap lie in [1/m, B] with B = prod(1 + earlier duplicates)
            dup = _earlier_duplicates(q[cap][:m])
            log_b = float(np.sum(np.log1p(dup)))
            gap = max(math.expm1(log_b), 1.0 - 1.0 / max(m, 1))
            err[g] = tail[g] + math.log(gap) if gap > 0 else np.nan
        else:
            tail[g], err[g], reach[g] = _distinct_tail(m, int(trunc[g]))
    tot = log_sum_exp_axis(np.vstack([masked, tail[None, :]]), axis=0)
    if np.any(saturated):
        log.warning("separating level exceeds level_cap=%d; NPD tail is approximate", cap)
    return NpdProfile(lengths, tot, reach, sep, err, False, False, saturated)


ANALYTIC_LEVELS = 64


def _log_distinct_product(m: int, l: int) -> float:
    """``-sum_{i<m} log(1 + i 2^-l)``: order-0 PPM over ``2^l`` symbols, all distinct, relative to uniform."""
    N = m - 1
    if N <= 0:
        return 0.0
    eps = math.ldexp(1.0, -l)
    if m * eps > 1e-4:
        return -float(np.sum(np.log1p(np.arange(1, m) * eps)))
    # power sums of 1..N (Faulhaber); the series error is below (m eps)^5 m
    s1 = N * (N + 1) / 2.0
    s2 = N * (N + 1) * (2 * N + 1) / 6.0
    s3 = s1 * s1
    s4 = s2 * (3.0 * N * N + 3.0 * N - 1.0) / 5.0
    return -(eps * s1 - eps ** 2 * s2 / 2.0 + eps ** 3 * s3 / 3.0 - eps ** 4 * s4 / 4.0)


def _distinct_tail(m: int, start: int):
    """Mixture tail from level ``start`` on, where every point has its own cell.

    There the level term is exactly ``(1 + prod_i 1/(1 + i 2^-l)) / 2`` because
    only order 0 sees a repeated context.  The next ``ANALYTIC_LEVELS`` terms
    are summed in closed form and the rest replaced by 1, which is off by at
    most ``tail_weight(stop) m(m-1) / 2^(stop+2)``.

    Returns ``(log tail value, log error bound or nan, stop level)``.
    """
    if m < 2:
        return float(log_tail_weight(start)), np.nan, start
    stop = start + ANALYTIC_LEVELS
    ls = np.arange(start, stop)
    log_terms = np.array([np.logaddexp(0.0, _log_distinct_product(m, int(l))) - math.log(2.0) for l in ls])
    value = np.logaddexp(log_sum_exp_axis(log_weight(ls) + log_terms, axis=0), log_tail_weight(stop))
    err = float(log_tail_weight(stop)) + math.log(m * (m - 1.0)) - (stop + 2) * math.log(2.0)
    return float(value), err, stop


def uniform_tail_gap_bound_log(m: int, start: int) -> float:
    """Log bound on ``|sum_{l >= start} w_l (NPD^l - 1)|`` once all points are separated."""
    if m < 2:
        return -math.inf
    return float(log_tail_weight(start)) + math.log(m * (m - 1.0)) - (start + 2) * math.log(2.0)


def _first_repeat(s: np.ndarray) -> int:
    """Smallest prefix length containing a repeated symbol (``n + 1`` if none)."""
    n = s.size
    if n < 2:
        return n + 1
    order = np.argsort(s, kind="stable")
    ss = s[order]
    dup = np.flatnonzero(ss[1:] == ss[:-1])
    if dup.size == 0:
        return n + 1
    # the later element of each equal adjacent pair is a repeat
    return int(order[dup + 1].min()) + 1


def _earlier_duplicates(s: np.ndarray) -> np.ndarray:
    if s.size == 0:
        return np.zeros(0)
    order = np.argsort(s, kind="stable")
    ss = s[order]
    new = np.empty(s.size, dtype=bool)
    new[0] = True
    new[1:] = ss[1:] != ss[:-1]
    starts = np.flatnonzero(new)
    grp = np.cumsum(new) - 1
    out = np.empty(s.size)
    out[order] = np.arange(s.size) - starts[grp]
    return out


def npd_total_log_density(x, cfg: NpdConfig) -> LogDensity:
    """Log of the total NPD density with the scheme's truncation policy."""
    return npd_profile(x, cfg).log_density()


def npd_total_log_density_batch(samples, cfg: NpdConfig) -> np.ndarray:
    """``npd_total_log_density(row, cfg).log_value`` for every row of ``samples``.

    Meant for many short samples of one length (Monte Carlo integration).
    PPM is invariant under relabeling, so each level evaluates it once per
    distinct equality pattern; saturated rows take the single-sample path.
    """
    X = np.asarray(samples, dtype=np.float64 if cfg.real_valued else np.int64)
    if X.ndim != 2:
        raise ValueError("samples must be a 2-d array, one sample per row")
    B, n = X.shape
    if not isinstance(cfg.scheme, (DyadicScheme, QuantileScheme)) or n > 12 or n < 2:
        return np.array([npd_total_log_density(row, cfg).log_value for row in X])
    cap = cfg.level_cap
    q = quantize_levels(X.ravel(), cap, cfg.scheme).reshape(cap + 1, B, n)
    # first[l, b, i]: first position holding the same cell as position i
    first = np.argmax(q[:, :, :, None] == q[:, :, None, :], axis=3)
    distinct = np.all(first == np.arange(n), axis=2)
    saturated = ~distinct.any(axis=0)
    sep = np.argmax(distinct, axis=0)
    trunc = np.minimum(sep + cfg.margin, cap + 1)
    n_levels = int(trunc[~saturated].max()) if np.any(~saturated) else 0
    codes = first @ (n ** np.arange(n))
    total = np.full(B, -np.inf)
    for l in range(n_levels):
        live = (l < trunc) & ~saturated
        if not np.any(live):
            continue
        uniq, inv = np.unique(codes[l, live], return_inverse=True)
        log_r = np.empty(uniq.size)
        for u, code in enumerate(uniq):
            pattern = (code // n ** np.arange(n)) % n
            rep = np.unique(pattern, return_inverse=True)[1]
            log_r[u] = ppm_profile(rep, cfg.scheme.size(l)).log_total()[0]
        lm = log_cell_masses(q[l][live].ravel(), l, cfg.mu, cfg.scheme).reshape(-1, n).sum(axis=1)
        total[live] = np.logaddexp(total[live], log_weight(l) + log_r[inv] - lm)
    tails = {}
    for b in np.flatnonzero(~saturated):
        key = int(trunc[b])
        if key not in tails:
            tails[key] = _distinct_tail(n, key)[0]
        total[b] = np.logaddexp(total[b], tails[key])
    for b in np.flatnonzero(saturated):
        total[b] = npd_total_log_density(X[b], cfg).log_value
    return total


# ---------------------------------------------------------------------------
# estimators


def _grid(n: int, grid) -> np.ndarray:
    if n < 1:
        raise ValueError("need at least one observation")
    return check_grid(default_grid(n) if grid is None else grid, n)


def _diag(prof: NpdProfile) -> Dict[str, np.ndarray]:
    return {
        "levels_used": prof.truncation.copy(),
        "separating_level": prof.separating.copy(),
        "saturated": prof.saturated.astype(np.int64),
    }


def entropy_rate_estimate(x, cfg: NpdConfig, grid=None) -> EstimateTrajectory:
    """``-log NPD(x[:m]) / m`` in nats, the entropy rate w.r.t. the reference measure."""
    v = _values(x, cfg)
    g = _grid(v.size, grid)
    prof = npd_profile(v, cfg, g)
    flags = ("lower_bound_density",) if prof.lower_bound else ()
    return EstimateTrajectory(g, -prof.log_total / g, "h_mu", {}, _diag(prof), flags)


def _point_log_mu(v: np.ndarray, mu) -> np.ndarray:
    if isinstance(mu, (GeometricMeasure, PointMassMeasure)):
        out = mu.log_pmf(v)
    elif isinstance(mu, CountingMeasure):
        out = np.zeros(v.shape)
    else:
        raise DomainError(f"reference measure {mu.name} has no point masses")
    if np.any(~np.isfinite(out)):
        raise DomainError("reference measure gives zero mass to an observed symbol")
    return out


def corrected_countable_estimate(x, cfg: NpdConfig, grid=None) -> EstimateTrajectory:
    """``(1/m)[-log NPD(x[:m]) - sum log mu(x_i)]``, the rate w.r.t. counting measure."""
    if not isinstance(cfg.scheme, IncrementalScheme):
        raise DomainError("countable-alphabet correction needs the incremental scheme")
    v = as_symbols(x)
    g = _grid(v.size, grid)
    lmu = _point_log_mu(v, cfg.mu)
    prof = npd_profile(v, cfg, g)
    corr = -_prefix_sums(lmu, g)
    est = (-prof.log_total + corr) / g
    return EstimateTrajectory(g, est, "h", {"minus_log_mu": corr}, _diag(prof),
                              ("lower_bound_density",))


_TIE_RTOL = 1e-12


@dataclass
class _OrderTable:
    """Objective ``log PPM^{q+1}_r(x^q) - sum log mu(x_i^q)`` on each prefix."""

    obj: list  # per q: array (orders, G)
    rel: list
    log_mu: np.ndarray  # (q, G)


def _order_table(v: np.ndarray, cfg: NpdConfig, lengths: np.ndarray) -> _OrderTable:
    top = int(v.max())
    q_idx = quantize_levels(v, top, cfg.scheme)
    objs, rels = [], []
    lmu = np.empty((top + 1, lengths.size))
    for q in range(top + 1):
        D = q + 1
        prof = ppm_profile(q_idx[q], D, lengths=lengths)
        rel = np.vstack([prof.rel, np.zeros((1, lengths.size))])  # order L+1 is uniform
        lmu[q] = _prefix_sums(log_cell_masses(q_idx[q], q, cfg.mu, cfg.scheme), lengths)
        rels.append(rel)
        objs.append(rel - lengths[None, :] * math.log(D) - lmu[q][None, :])
    return _OrderTable(objs, rels, lmu)


def _argmax_orders(tab: _OrderTable, g: int, m: int, qmax: int) -> OptimalOrders:
    # values within rounding of the best count as ties, resolved to the smallest (q, r)
    cols = [tab.obj[q][: min(tab.obj[q].shape[0], m), g] for q in range(qmax + 1)]  # r <= m - 1
    top = max(float(c.max()) for c in cols)
    tol = _TIE_RTOL * max(1.0, abs(top), float(m))
    for q, col in enumerate(cols):
        hits = np.flatnonzero(col >= top - tol)
        if hits.size:
            r = int(hits[0])
            return OptimalOrders(q, r, float(col[r]))
    raise AssertionError("unreachable")


def optimal_orders(x, cfg: NpdConfig) -> OptimalOrders:
    """Sample-optimal level and Markov order; ties go to the smallest ``(q, r)``."""
    if not isinstance(cfg.scheme, IncrementalScheme):
        raise DomainError("optimal orders are defined for the incremental scheme")
    v = as_symbols(x)
    if v.size == 0:
        return OptimalOrders(0, 0, 0.0)
    lengths = np.array([v.size])
    tab = _order_table(v, cfg, lengths)
    return _argmax_orders(tab, 0, v.size, int(v.max()))


def tail_correction(x, q: int, mu) -> float:
    """``-sum_{x_i > q} log[mu(x_i) / mu({q+1, q+2, ...})]``, always nonnegative."""
    v = as_symbols(x)
    big = v[v > q]
    if big.size == 0:
        return 0.0
    return float(-np.sum(_point_log_mu(big, mu) - mu.log_tail(q)))


def ppm_qr_estimate(x, cfg: NpdConfig, grid=None) -> EstimateTrajectory:
    """``(1/m)[-log PPM^{Q+1}_R(x^Q) + C_m(Q)]`` at the sample-optimal ``(Q, R)``.

    Diagnostics carry ``Q``, ``R``, the correction ``C_m(Q)`` and both sides
    of the sandwich ``0 <= -log NPD + objective <= -log w_Q - log w_R``.
    """
    if not isinstance(cfg.scheme, IncrementalScheme):
        raise DomainError("the (Q, R) estimator needs the incremental scheme")
    v = as_symbols(x)
    g = _grid(v.size, grid)
    _point_log_mu(v, cfg.mu)
    tab = _order_table(v, cfg, g)
    prof = npd_profile(v, cfg, g)
    running_max = np.maximum.accumulate(v)
    G = g.size
    Q = np.empty(G, dtype=np.int64)
    R = np.empty(G, dtype=np.int64)
    C = np.empty(G)
    est = np.empty(G)
    gap = np.empty(G)
    bound = np.empty(G)
    for j, m in enumerate(g):
        best = _argmax_orders(tab, j, int(m), int(running_max[m - 1]))
        Q[j], R[j] = best.q, best.r
        C[j] = tail_correction(v[:m], best.q, cfg.mu)
        log_ppm = tab.rel[best.q][best.r, j] - m * math.log(best.q + 1)
        est[j] = (-log_ppm + C[j]) / m
        gap[j] = -prof.log_total[j] + best.objective
        bound[j] = -math.log(weight(best.q)) - math.log(weight(best.r))
    return EstimateTrajectory(
        g, est, "h",
        {"C": C},
        {"Q": Q, "R": R, "sandwich_gap": gap, "sandwich_bound": bound,
         **_diag(prof)},
        ("lower_bound_density",),
    )


def gaussian_corrected_estimate(x, m: float, sigma: float, cfg: Optional[NpdConfig] = None,
                                grid=None, known_moments: bool = False) -> EstimateTrajectory:
    """Differential entropy rate (nats) against Lebesgue measure via a Gaussian reference.

    ``(1/n)[-log NPD(x) + sum (x_i - m)^2 / (2 sigma^2)] + log(sigma sqrt(2 pi))``.
    With ``known_moments`` the empirical second moment is replaced by its
    expectation, giving ``-log NPD / n + log(sigma sqrt(2 pi e))``.
    """
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    if cfg is None:
        cfg = NpdConfig(QuantileScheme(m, sigma), GaussianMeasure(m, sigma))
    if not isinstance(cfg.scheme, QuantileScheme) or (cfg.scheme.m, cfg.scheme.sigma) != (m, sigma):
        raise DomainError("Gaussian correction needs the quantile scheme of the same reference")
    v = as_reals(x)
    g = _grid(v.size, grid)
    prof = npd_profile(v, cfg, g)
    if known_moments:
        corr = np.full(g.size, 0.5) * g
        const = math.log(sigma * math.sqrt(2.0 * math.pi * math.e)) - 0.5
    else:
        corr = _prefix_sums((v - m) ** 2 / (2.0 * sigma * sigma), g)
        const = math.log(sigma * math.sqrt(2.0 * math.pi))
    est = (-prof.log_total + corr) / g + const
    return EstimateTrajectory(g, est, "h_lambda", {"quadratic": corr}, _diag(prof))


def plugin_gaussian_estimate(x, cfg: Optional[NpdConfig] = None, grid=None) -> EstimateTrajectory:
    """Experimental: the Gaussian-corrected estimate with sample moments as reference.

    The reference ``N(mean, var)`` is refitted on every prefix, so each grid
    point quantizes afresh.  No consistency guarantee is known.
    """
    v = as_reals(x)
    if v.size < 2:
        raise DomainError("plug-in estimate needs at least two observations")
    g = _grid(v.size, grid)
    level_cap = cfg.level_cap if cfg else 40
    margin = cfg.margin if cfg else 4
    est = np.empty(g.size)
    means = np.empty(g.size)
    sds = np.empty(g.size)
    levels = np.empty(g.size, dtype=np.int64)
    for j, m in enumerate(g):
        xs = v[:m]
        mean = float(xs.mean())
        sd = float(xs.std(ddof=1)) if m >= 2 else 0.0
        if not sd > 0:
            raise DomainError("zero sample variance")
        c = NpdConfig(QuantileScheme(mean, sd), GaussianMeasure(mean, sd), level_cap, margin)
        prof = npd_profile(xs, c)
        est[j] = (-prof.log_total[0] + float(np.sum((xs - mean) ** 2)) / (2 * sd * sd)) / m \
            + math.log(sd * math.sqrt(2 * math.pi))
        means[j], sds[j], levels[j] = mean, sd, prof.truncation[0]
    return EstimateTrajectory(g, est, "h_lambda_plugin", {},
                              {"mean": means, "sigma": sds, "levels_used": levels},
                              ("experimental",))
