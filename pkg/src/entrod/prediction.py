"""Cesaro-mean conditional estimation and the induced 0-1 loss predictor.

The Cesaro conditional of ``a`` after ``x_1..x_{n-1}`` averages the base
measure's conditionals over all suffix windows ``x_{n-i}..x_{n-1}``,
``i = 0..n-1`` (the empty window gives the marginal).  A finite
``window_cap`` W keeps only windows shorter than W.

For the PPM base, :class:`CesaroPpm` updates every window in one
vectorized step.  Each window keeps its per-order log likelihood relative
to the uniform density, indexed by window start, so orders whose context
never occurred in a window need no update at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from numba import njit

from entrod.core import DomainError, as_symbols, check_grid, default_grid, log_weight
from entrod.npd import NpdConfig, npd_total_log_density
from entrod.ppm import ppm_conditional_log
from entrod.quantization import IncrementalScheme

EXACT_BELOW = 4096
_LOGW = log_weight(np.arange(4096))


@dataclass(frozen=True)
class ConditionalDistribution:
    support: tuple
    log_probs: tuple

    def __post_init__(self) -> None:
        if len(set(self.support)) != len(self.support):
            raise ValueError("support entries must be distinct")
        if len(self.support) != len(self.log_probs):
            raise ValueError("support and log_probs differ in length")
        total = math.fsum(math.exp(v) for v in self.log_probs)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"distribution sums to {total}, not 1")

    @classmethod
    def from_probs(cls, probs, support=None) -> "ConditionalDistribution":
        p = np.asarray(probs, dtype=np.float64)
        p = p / p.sum()
        sup = tuple(range(p.size)) if support is None else tuple(int(s) for s in support)
        with np.errstate(divide="ignore"):
            return cls(sup, tuple(float(v) for v in np.log(p)))

    def probs(self) -> np.ndarray:
        return np.exp(np.asarray(self.log_probs))

    def as_dict(self) -> Dict[int, float]:
        return dict(zip(self.support, self.probs().tolist()))

    def argmax(self) -> int:
        p = self.probs()
        best = p.max()
        return min(s for s, v in zip(self.support, p) if v == best)


@dataclass(frozen=True)
class PredictorConfig:
    """``base`` is ``"ppm-total"`` (needs ``alphabet_size``) or ``"npd-total"`` (needs ``npd``).

    ``window_cap=None`` means exact Cesaro averaging.  With a finite cap,
    runs of total length ``<= exact_below`` still use exact averaging.
    """

    base: str = "ppm-total"
    alphabet_size: Optional[int] = None
    npd: Optional[NpdConfig] = None
    window_cap: Optional[int] = 512
    exact_below: int = EXACT_BELOW

    def __post_init__(self) -> None:
        if self.base not in ("ppm-total", "npd-total"):
            raise ValueError(f"unknown base measure {self.base!r}")
        if self.base == "ppm-total" and not (self.alphabet_size and self.alphabet_size >= 1):
            raise ValueError("ppm-total base needs alphabet_size")
        if self.base == "npd-total" and self.npd is None:
            raise ValueError("npd-total base needs an NpdConfig")
        if self.window_cap is not None and self.window_cap < 1:
            raise ValueError("window_cap must be at least 1")

    def window_for(self, n_total: int) -> Optional[int]:
        if self.window_cap is None or n_total <= self.exact_below:
            return None
        return self.window_cap


# ---------------------------------------------------------------------------
# fast engine for the PPM base


@njit(cache=True)
def _cesaro_pass(x, lam, qrel, zrel, logw, logi, lo, n, D, kmax, a, mix):
    """One descent over window starts ``p = n..lo``.

    With ``a < 0`` fills ``mix[:, p - lo]`` with the window conditionals;
    otherwise applies the likelihood update for the observed symbol ``a``
    using the ``mix`` computed before.
    """
    cnt = np.zeros((kmax + 1, D), dtype=np.int64)
    ctx = np.zeros(kmax + 1, dtype=np.int64)
    inv_d = 1.0 / D
    log_d = logi[D]
    for p in range(n, lo - 1, -1):
        col = p - lo
        for k in range(kmax + 1):
            t = p + k
            if t <= n - 1 and lam[t] >= k:
                cnt[k, x[t]] += 1
                ctx[k] += 1
        if a < 0:
            for s in range(D):
                mix[s, col] = inv_d
            for k in range(kmax + 1):
                if ctx[k] == 0:
                    continue
                lp = logw[k] + qrel[k, p] - zrel[p]
                if lp < -60.0:
                    continue
                w = math.exp(lp)
                den = ctx[k] + D
                for s in range(D):
                    mix[s, col] += w * ((cnt[k, s] + 1.0) / den - inv_d)
        else:
            zrel[p] += math.log(D * mix[a, col])
            for k in range(kmax + 1):
                if ctx[k] == 0:
                    continue
                qrel[k, p] += log_d + logi[cnt[k, a] + 1] - logi[ctx[k] + D]


@njit(cache=True)
def _extend_matches(x, lam, s, n, a):
    """Suffix-match lengths after appending ``a`` at position ``n``."""
    for t in range(n, s - 1, -1):
        lam[t] = lam[t - 1] + 1 if x[t - 1] == a else 0
    lam[0] = 0


class CesaroPpm:
    """Online Cesaro-mean PPM conditionals over the alphabet ``{0..D-1}``.

    Call :meth:`distribution` for the next-symbol law and :meth:`update`
    with the observed symbol.  Per step the work is ``O(K * windows)`` with
    ``K`` the longest context that recurs in the widest window.
    """

    def __init__(self, alphabet_size: int, window: Optional[int] = None, capacity: int = 1024):
        self.D = int(alphabet_size)
        self.window = window
        self.n = 0
        cap = max(int(capacity), 16) + 2
        self.x = np.zeros(cap, dtype=np.int64)
        # lam[t]: common suffix length of x[:t] and x[:n]
        self.lam = np.zeros(cap, dtype=np.int64)
        self.zrel = np.zeros(cap)
        self.qrel = np.zeros((8, cap))
        self.logi = np.log(np.maximum(np.arange(cap + self.D + 2), 1.0))
        self._cache = None

    def _lo(self) -> int:
        if self.window is None:
            return 0
        return max(0, self.n - (self.window - 1))

    def _grow(self, need: int) -> None:
        cap = self.x.size
        if need < cap:
            return
        new = max(need + 2, 2 * cap)
        self.x = np.concatenate((self.x, np.zeros(new - cap, dtype=np.int64)))
        self.lam = np.concatenate((self.lam, np.zeros(new - cap, dtype=np.int64)))
        self.zrel = np.concatenate((self.zrel, np.zeros(new - cap)))
        self.qrel = np.hstack((self.qrel, np.zeros((self.qrel.shape[0], new - cap))))
        self.logi = np.log(np.maximum(np.arange(new + self.D + 2), 1.0))

    def _kmax(self, lo: int) -> int:
        if lo >= self.n:
            return -1
        ts = np.arange(lo, self.n)
        return int(np.minimum(self.lam[lo:self.n], ts - lo).max())

    def distribution(self) -> np.ndarray:
        """Cesaro-mean next-symbol probabilities after the current history."""
        if self._cache is not None and self._cache[0] == self.n:
            return self._cache[4]
        n, lo = self.n, self._lo()
        kmax = self._kmax(lo)
        if kmax + 1 > self.qrel.shape[0]:
            rows = max(kmax + 1, 2 * self.qrel.shape[0])
            self.qrel = np.vstack((self.qrel, np.zeros((rows - self.qrel.shape[0], self.qrel.shape[1]))))
        mix = np.empty((self.D, n - lo + 1))
        logw = _LOGW if kmax < _LOGW.size else log_weight(np.arange(kmax + 1))
        _cesaro_pass(self.x, self.lam, self.qrel, self.zrel, logw, self.logi,
                     lo, n, self.D, kmax, -1, mix)
        dist = mix.mean(axis=1)
        dist /= dist.sum()
        self._cache = (n, lo, kmax, mix, dist)
        return dist

    def update(self, a: int) -> None:
        a = int(a)
        if not 0 <= a < self.D:
            raise DomainError(f"symbol {a} outside alphabet of size {self.D}")
        self.distribution()
        _, lo, kmax, mix, _ = self._cache
        n = self.n
        self._grow(n + 2)
        _cesaro_pass(self.x, self.lam, self.qrel, self.zrel, _LOGW, self.logi,
                     lo, n, self.D, kmax, a, mix)  # logw unused on update
        s = 1 if self.window is None else max(1, n - self.window)
        _extend_matches(self.x, self.lam, s, n, a)
        self.x[n] = a
        self.n = n + 1
        self._cache = None


# ---------------------------------------------------------------------------
# generic (slow) path


def _base_conditionals(window: np.ndarray, cfg: PredictorConfig, candidates) -> np.ndarray:
    if cfg.base == "ppm-total":
        return np.array([math.exp(ppm_conditional_log(a, window, cfg.alphabet_size))
                         for a in candidates])
    # candidates normalized jointly; the common NPD(window) factor cancels
    npd = cfg.npd
    logs = []
    for a in candidates:
        ext = np.append(window, a)
        lv = npd_total_log_density(ext, npd).log_value
        logs.append(lv + float(npd.mu.log_pmf(a)) if isinstance(npd.scheme, IncrementalScheme) else lv)
    logs = np.asarray(logs)
    w = np.exp(logs - logs.max())
    return w / w.sum()


def _candidates(history: np.ndarray, cfg: PredictorConfig) -> list:
    if cfg.base == "ppm-total":
        return list(range(cfg.alphabet_size))
    if isinstance(cfg.npd.scheme, IncrementalScheme):
        seen = sorted(set(history.tolist()))
        fresh = (max(seen) + 1) if seen else 1
        return seen + [fresh]
    return list(range(cfg.npd.scheme.alphabet_size))


def cesaro_distribution_naive(history, cfg: PredictorConfig) -> ConditionalDistribution:
    """Cesaro mean recomputed window by window from the base measure."""
    h = as_symbols(history)
    W = cfg.window_for(h.size + 1)
    n_win = h.size + 1 if W is None else min(h.size + 1, W)
    cands = _candidates(h, cfg)
    acc = np.zeros(len(cands))
    for i in range(n_win):
        acc += _base_conditionals(h[h.size - i:], cfg, cands)
    return ConditionalDistribution.from_probs(acc / n_win, cands)


def _replay(history: np.ndarray, cfg: PredictorConfig) -> CesaroPpm:
    eng = CesaroPpm(cfg.alphabet_size, cfg.window_for(history.size + 1), capacity=history.size)
    for a in history:
        eng.update(a)
    return eng


def cesaro_distribution(history, cfg: PredictorConfig) -> ConditionalDistribution:
    h = as_symbols(history)
    if cfg.base == "ppm-total":
        if h.size and h.max() >= cfg.alphabet_size:
            raise DomainError("symbol outside the alphabet")
        return ConditionalDistribution.from_probs(_replay(h, cfg).distribution())
    return cesaro_distribution_naive(h, cfg)


def cesaro_conditional(x_next: int, history, cfg: PredictorConfig) -> float:
    """Log Cesaro-mean conditional probability of ``x_next``."""
    dist = cesaro_distribution(history, cfg).as_dict()
    if x_next not in dist:
        if cfg.base == "ppm-total":
            raise DomainError(f"symbol {x_next} outside the alphabet")
        return -math.inf
    with np.errstate(divide="ignore"):
        return float(np.log(dist[x_next]))


def predict(history, cfg: PredictorConfig) -> int:
    """Most probable next symbol; ties go to the smallest symbol."""
    return cesaro_distribution(history, cfg).argmax()


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class PredictionTrajectory:
    grid: np.ndarray
    mistake_rate: np.ndarray
    conditional_mistake_rate: np.ndarray
    tv: Optional[np.ndarray] = None
    diagnostics: Dict[str, np.ndarray] = field(default_factory=dict)


def mistake_rate(x, cfg: PredictorConfig, grid=None, true_marginal=None) -> PredictionTrajectory:
    """Running 0-1 loss of the Cesaro predictor on ``x``.

    ``mistake_rate[g]`` averages the first ``grid[g]`` predictions and
    ``conditional_mistake_rate`` the predicted probabilities of erring.
    With ``true_marginal`` (i.i.d. sources), ``tv[g]`` is the total
    variation between it and the Cesaro law given the first ``grid[g]``
    symbols.
    """
    s = as_symbols(x)
    n = s.size
    if n < 1:
        raise ValueError("need at least one observation")
    g = check_grid(default_grid(n) if grid is None else grid, n)
    marks = np.zeros(n + 1, dtype=bool)
    marks[g] = True
    miss = np.zeros(n)
    cmiss = np.zeros(n)
    tv = {} if true_marginal is not None else None
    p_true = None if true_marginal is None else np.asarray(true_marginal, dtype=np.float64)

    if cfg.base == "ppm-total":
        if s.max() >= cfg.alphabet_size:
            raise DomainError("symbol outside the alphabet")
        eng = CesaroPpm(cfg.alphabet_size, cfg.window_for(n), capacity=n)
        for t in range(n + 1):
            if t == n and tv is None:
                break
            dist = eng.distribution()
            if tv is not None and marks[t]:
                tv[t] = total_variation(ConditionalDistribution.from_probs(dist),
                                        ConditionalDistribution.from_probs(p_true))
            if t == n:
                break
            best = int(np.argmax(dist))
            miss[t] = best != s[t]
            cmiss[t] = 1.0 - dist[best]
            eng.update(s[t])
    else:
        for t in range(n + 1):
            if t == n and tv is None:
                break
            dist = cesaro_distribution_naive(s[:t], cfg)
            if tv is not None and marks[t]:
                tv[t] = total_variation(dist, ConditionalDistribution.from_probs(
                    p_true, range(1, p_true.size + 1) if isinstance(cfg.npd.scheme, IncrementalScheme) else None))
            if t == n:
                break
            best = dist.argmax()
            miss[t] = best != s[t]
            cmiss[t] = 1.0 - dist.as_dict()[best]
    rate = np.cumsum(miss)[g - 1] / g
    crate = np.cumsum(cmiss)[g - 1] / g
    tv_arr = None if tv is None else np.array([tv[int(m)] for m in g])
    return PredictionTrajectory(g, rate, crate, tv_arr)


def total_variation(p: ConditionalDistribution, q: ConditionalDistribution) -> float:
    """Half the L1 distance over the union of supports."""
    a, b = p.as_dict(), q.as_dict()
    keys = set(a) | set(b)
    return 0.5 * math.fsum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)


def kl_divergence(p: ConditionalDistribution, q: ConditionalDistribution) -> float:
    """``sum p log(p/q)`` in nats; ``inf`` when ``p`` charges a point ``q`` does not."""
    a, b = p.as_dict(), q.as_dict()
    total = []
    for k, pk in a.items():
        if pk == 0.0:
            continue
        qk = b.get(k, 0.0)
        if qk == 0.0:
            return math.inf
        total.append(pk * (math.log(pk) - math.log(qk)))
    return max(math.fsum(total), 0.0)
