"""PPM densities over a finite alphabet with Laplace smoothing.

The order-``k`` density prices the first ``k+1`` symbols uniformly and
every later symbol by ``(N(context+symbol) + 1) / (N(context) + D)``,
with counts taken over the strictly preceding text.  The total density
mixes all orders with weights ``1/(k+1) - 1/(k+2)``.

Orders above the repetition length ``L`` of the string reduce to the
uniform density ``D**-n``, so the infinite mixture is a finite sum plus a
closed-form tail.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from entrod.core import (
    DomainError,
    LogDensity,
    as_symbols,
    log_sum_exp,
    log_sum_exp_axis,
    log_tail_weight,
    log_weight,
)


@dataclass(frozen=True)
class PpmParams:
    alphabet_size: int

    def __post_init__(self) -> None:
        if int(self.alphabet_size) < 1:
            raise ValueError("alphabet size must be at least 1")


def _alphabet(params) -> int:
    return int(params.alphabet_size if isinstance(params, PpmParams) else params)


def _checked(x, D: int) -> np.ndarray:
    s = as_symbols(x)
    if s.size and s.max() >= D:
        raise DomainError(f"symbol {int(s.max())} outside alphabet of size {D}")
    return s


# ---------------------------------------------------------------------------
# batch engine


def _group(keys: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense group ids, earlier-occurrence ranks and group sizes of ``keys``.

    ``keys`` must be listed in increasing position order; the stable sort
    keeps that order inside each group, which makes the rank the number of
    earlier occurrences.
    """
    m = keys.size
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    new = np.empty(m, dtype=bool)
    new[0] = True
    np.not_equal(sk[1:], sk[:-1], out=new[1:])
    gsorted = np.cumsum(new) - 1
    starts = np.flatnonzero(new)
    sizes = np.diff(np.append(starts, m))
    gid = np.empty(m, dtype=np.int64)
    rank = np.empty(m, dtype=np.int64)
    size = np.empty(m, dtype=np.int64)
    gid[order] = gsorted
    rank[order] = np.arange(m) - starts[gsorted]
    size[order] = sizes[gsorted]
    return gid, rank, size


@dataclass(frozen=True)
class PpmProfile:
    """Per-order log densities of every requested prefix.

    ``rel[k, g]`` is ``log PPM_k(x[:lengths[g]]) + lengths[g] * log(D)``,
    i.e. the log-ratio against the uniform density.  Rows cover orders
    ``0..repetition_length`` (or up to ``max_order`` when capped); every
    higher order has ratio zero.  ``first_repeat`` is the smallest prefix
    length containing a repeated symbol (``n + 1`` when there is none).
    """

    alphabet_size: int
    lengths: np.ndarray
    rel: np.ndarray
    repetition_length: int
    first_repeat: int
    complete: bool

    def log_order(self, k: int) -> np.ndarray:
        base = -self.lengths * math.log(self.alphabet_size)
        if k < self.rel.shape[0]:
            return base + self.rel[k]
        if not self.complete:
            raise ValueError(f"order {k} beyond the computed cap")
        return base

    def log_total(self) -> np.ndarray:
        K = self.rel.shape[0]
        if not self.complete:
            raise ValueError("total density needs all orders up to the repetition length")
        terms = np.vstack([log_weight(np.arange(K))[:, None] + self.rel,
                           np.full((1, self.lengths.size), log_tail_weight(K))])
        return log_sum_exp_axis(terms, axis=0) - self.lengths * math.log(self.alphabet_size)


def ppm_profile(x, alphabet_size: int, lengths=None, max_order: Optional[int] = None) -> PpmProfile:
    """Evaluate all PPM orders on the prefixes ``x[:m]`` for ``m`` in ``lengths``.

    Work is proportional to the number of positions whose context repeats,
    summed over orders, which is ``O(n L)`` in the worst case and far less
    on typical data.
    """
    D = int(alphabet_size)
    s = _checked(x, D)
    n = s.size
    lengths = np.asarray([n] if lengths is None else lengths, dtype=np.int64).reshape(-1)
    if lengths.size and (lengths.min() < 0 or lengths.max() > n):
        raise ValueError("prefix lengths must lie in [0, n]")
    if n <= 1 or D == 1:
        # D == 1: every factor is one; n <= 1: no factor at all
        L = max(n - 1, 0)
        return PpmProfile(D, lengths, np.zeros((1, lengths.size)), L,
                          2 if (D == 1 and n >= 2) else n + 1, True)

    logD = math.log(D)
    _, dense = np.unique(s, return_inverse=True)
    dense = dense.astype(np.int64)
    S = int(dense.max()) + 1

    rows = []

    def emit(active: np.ndarray, contrib: np.ndarray) -> None:
        csum = np.concatenate(([0.0], np.cumsum(contrib)))
        rows.append(csum[np.searchsorted(active, lengths, side="left")])

    # order 1 grams are single symbols, all candidates
    pos = np.arange(n, dtype=np.int64)
    gid, rank, size = _group(dense)
    keep = size > 1
    first_repeat = int(pos[keep & (rank > 0)].min()) + 1 if np.any(keep) else n + 1
    cand_pos, cand_gid, cand_rank = pos[keep], gid[keep], rank[keep]

    # order 0: context count at position i is i
    r1 = np.zeros(n)
    r1[cand_pos] = cand_rank
    i = pos[1:]
    emit(i, np.log(r1[1:] + 1.0) - np.log(i + float(D)) + logD)

    # invariant: cand_* hold the repeated k-grams when order k is emitted
    k = 0
    complete = True
    while cand_pos.size:
        k += 1
        if max_order is not None and k > max_order:
            complete = False
            break
        # extend repeated k-grams ending at e to (k+1)-grams ending at e+1
        ok = cand_pos + 1 < n
        e = cand_pos[ok]
        prev_rank = cand_rank[ok]
        if e.size:
            g2, r2, sz2 = _group(cand_gid[ok] * S + dense[e + 1])
        else:
            g2 = r2 = sz2 = np.zeros(0, dtype=np.int64)
        act = prev_rank > 0
        emit(e[act] + 1, np.log(r2[act] + 1.0) - np.log(prev_rank[act] + float(D)) + logD)
        keep = sz2 > 1
        cand_pos, cand_gid, cand_rank = e[keep] + 1, g2[keep], r2[keep]
    L = k if complete else -1
    rel = np.vstack(rows)
    return PpmProfile(D, lengths, rel, L, first_repeat, complete)


# ---------------------------------------------------------------------------
# public operations


def ppm_order_log_density(x, k: int, params) -> LogDensity:
    """Log of the order-``k`` PPM density of ``x``."""
    D = _alphabet(params)
    if k < 0:
        raise ValueError("order must be nonnegative")
    s = _checked(x, D)
    n = s.size
    if k >= n - 1:
        return LogDensity(-n * math.log(D), k)
    prof = ppm_profile(s, D, max_order=k)
    return LogDensity(float(prof.log_order(k)[0]), k)


def ppm_total_log_density(x, params) -> LogDensity:
    """Log of the total PPM mixture, exact via the repetition-length tail."""
    D = _alphabet(params)
    prof = ppm_profile(x, D)
    return LogDensity(float(prof.log_total()[0]), prof.repetition_length + 1)


def ppm_conditional_log(x_next: int, context, params) -> float:
    """Log conditional probability of ``x_next`` after ``context`` under the total PPM measure."""
    D = _alphabet(params)
    ctx = _checked(context, D)
    if not 0 <= int(x_next) < D:
        raise DomainError(f"symbol {x_next} outside alphabet of size {D}")
    ext = np.append(ctx, np.int64(x_next))
    prof = ppm_profile(ext, D, lengths=[ctx.size, ext.size])
    tot = prof.log_total()
    return float(tot[1] - tot[0])


def repetition_length(x) -> int:
    """Length of the longest substring occurring at least twice (overlaps allowed)."""
    s = as_symbols(x)
    n = s.size
    if n <= 1:
        return 0
    sa = suffix_array(s)
    return int(lcp_array(s, sa).max(initial=0))


def suffix_array(s: np.ndarray) -> np.ndarray:
    """Suffix array by prefix doubling, ``O(n log^2 n)`` in numpy."""
    n = s.size
    _, rank = np.unique(s, return_inverse=True)
    rank = rank.astype(np.int64)
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    h = 1
    while True:
        second = np.full(n, -1, dtype=np.int64)
        second[: n - h] = rank[h:]
        key = rank * (n + 1) + (second + 1)
        sa = np.argsort(key, kind="stable")
        sk = key[sa]
        newrank = np.empty(n, dtype=np.int64)
        newrank[sa] = np.concatenate(([0], np.cumsum(sk[1:] != sk[:-1])))
        rank = newrank
        if rank.max() == n - 1:
            return sa
        h *= 2
        if h >= n:
            return sa


def lcp_array(s: np.ndarray, sa: np.ndarray) -> np.ndarray:
    """Kasai's algorithm; entry ``i`` is the LCP of suffixes ``sa[i-1]`` and ``sa[i]``."""
    n = s.size
    seq = s.tolist()
    rank = [0] * n
    for i, p in enumerate(sa.tolist()):
        rank[p] = i
    sa_l = sa.tolist()
    lcp = [0] * n
    h = 0
    for i in range(n):
        r = rank[i]
        if r > 0:
            j = sa_l[r - 1]
            while i + h < n and j + h < n and seq[i + h] == seq[j + h]:
                h += 1
            lcp[r] = h
            if h:
                h -= 1
        else:
            h = 0
    return np.asarray(lcp, dtype=np.int64)


# ---------------------------------------------------------------------------
# online accumulator


class ContextCounts:
    """Online substring counts for contexts up to ``k_cap``.

    After appending ``x_1..x_m``, ``count(w)`` equals the number of
    occurrences of ``w`` in the text for every ``len(w) <= k_cap + 1``.
    ``log_order[k]`` tracks the running order-``k`` PPM log density.
    Appending a symbol touches only the grams that end at the new position.
    """

    def __init__(self, alphabet_size: int, k_cap: int):
        self.D = int(alphabet_size)
        self.k_cap = int(k_cap)
        self.text: list = []
        self._counts: Dict[tuple, int] = defaultdict(int)
        self._ctx: Dict[tuple, int] = defaultdict(int)  # occurrences followed by a symbol
        self.log_order = np.zeros(self.k_cap + 1)

    def count(self, w) -> int:
        w = tuple(int(a) for a in w)
        if not w:
            return len(self.text) + 1
        return self._counts.get(w, 0)

    def factor(self, k: int, a: int) -> float:
        """Order-``k`` conditional probability of ``a`` after the current text."""
        m = len(self.text)
        if k >= m:
            return 1.0 / self.D
        ctx = tuple(self.text[m - k:])
        num = self._counts.get(ctx + (a,), 0) + 1
        den = (self._ctx.get(ctx, 0) if k else m) + self.D
        return num / den

    def append(self, a: int) -> None:
        a = int(a)
        if not 0 <= a < self.D:
            raise DomainError(f"symbol {a} outside alphabet of size {self.D}")
        for k in range(self.k_cap + 1):
            self.log_order[k] += math.log(self.factor(k, a))
        m = len(self.text)
        for k in range(1, min(self.k_cap, m) + 1):
            self._ctx[tuple(self.text[m - k:])] += 1
        self.text.append(a)
        m += 1
        for j in range(1, min(self.k_cap + 1, m) + 1):
            self._counts[tuple(self.text[m - j:])] += 1


# ---------------------------------------------------------------------------
# naive reference transcription


def ppm_oracle_log_density(x, k: int, D: int) -> LogDensity:
    """Order-``k`` PPM density by literal substring counting, for testing only."""
    seq = tuple(int(a) for a in as_symbols(x))
    if any(a >= D for a in seq):
        raise DomainError("symbol outside alphabet")
    n = len(seq)
    if k >= n - 1:
        return LogDensity(-n * math.log(D), k)

    def freq(w, text):
        m = len(w)
        return sum(1 for i in range(len(text) - m + 1) if text[i:i + m] == w)

    total = -(k + 1) * math.log(D)
    for i in range(k + 2, n + 1):  # 1-based position as in the definition
        num = freq(seq[i - k - 1:i], seq[:i - 1]) + 1
        den = freq(seq[i - k - 1:i - 1], seq[:i - 2]) + D
        total += math.log(num) - math.log(den)
    return LogDensity(total, k)


def ppm_total_log_density_bruteforce(x, D: int, orders: int = 1000) -> float:
    """Direct summation of the first ``orders`` mixture terms plus the uniform tail."""
    seq = as_symbols(x)
    n = seq.size
    terms = [log_weight(k) + ppm_oracle_log_density(seq, k, D).log_value for k in range(orders)]
    terms.append(log_tail_weight(orders) - n * math.log(D))
    return log_sum_exp(terms)
