"""Seeded synthetic stationary ergodic sources and their closed-form oracles.

All randomness comes from numpy's PCG64.  Replicate ``r`` of a run seeded
with ``s`` draws from ``SeedSequence(s, spawn_key=(r,))``, so replicates are
independent streams and reproducible one at a time.  Gaussian variates use
the inverse CDF of 53-bit uniforms, never the ziggurat.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from entrod.core import DomainError, Sequence
from entrod.quantization import GeometricMeasure, PointMassMeasure, gaussian_quantile

_ROW_TOL = 1e-12


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


@dataclass(frozen=True)
class IidCategorical:
    """i.i.d. symbols ``offset, offset+1, ...`` with probabilities ``p``."""

    p: Tuple[float, ...]
    offset: int = 0

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 1 or p.size < 1 or np.any(p < 0) or abs(p.sum() - 1.0) > _ROW_TOL:
            raise DomainError("categorical probabilities must be nonnegative and sum to 1")
        if self.offset < 0:
            raise DomainError("offset must be nonnegative")

    kind = "symbolic"

    @property
    def alphabet_size(self) -> int:
        return len(self.p) + self.offset


def _is_primitive(P: np.ndarray) -> bool:
    # Wielandt: a primitive d x d matrix has P^((d-1)^2 + 1) > 0
    d = P.shape[0]
    A = (P > 0).astype(np.float64)
    M = np.eye(d)
    for _ in range((d - 1) ** 2 + 1):
        M = np.minimum(M @ A, 1.0)
    return bool(np.all(M > 0))


@dataclass(frozen=True)
class MarkovChain:
    """First-order chain on ``{offset, ..., offset+d-1}`` started from stationarity."""

    transition: Tuple[Tuple[float, ...], ...]
    offset: int = 0

    def __post_init__(self) -> None:
        P = self.matrix
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise DomainError("transition matrix must be square")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > _ROW_TOL):
            raise DomainError("transition rows must be nonnegative and sum to 1")
        if not _is_primitive(P):
            raise DomainError("transition matrix must be irreducible and aperiodic")

    kind = "symbolic"

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.transition, dtype=np.float64)

    @property
    def alphabet_size(self) -> int:
        return len(self.transition) + self.offset

    def stationary(self) -> np.ndarray:
        P = self.matrix
        d = P.shape[0]
        A = np.vstack([P.T - np.eye(d), np.ones((1, d))])
        b = np.zeros(d + 1)
        b[-1] = 1.0
        pi = np.linalg.lstsq(A, b, rcond=None)[0]
        pi = np.clip(pi, 0.0, None)
        return pi / pi.sum()


@dataclass(frozen=True)
class IidGeometric:
    """i.i.d. ``P(m) = q (1-q)^(m-1)`` on ``m = 1, 2, ...``."""

    q: float

    def __post_init__(self) -> None:
        if not 0.0 < self.q <= 1.0:
            raise DomainError("geometric parameter must lie in (0, 1]")

    kind = "symbolic"
    alphabet_size = None


@dataclass(frozen=True)
class IidGaussian:
    m: float = 0.0
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")

    kind = "real"


@dataclass(frozen=True)
class GaussianAR1:
    """``X_t = m + phi (X_{t-1} - m) + eps_t`` with ``eps_t ~ N(0, sigma_eps^2)``."""

    phi: float
    sigma_eps: float = 1.0
    m: float = 0.0

    def __post_init__(self) -> None:
        if not abs(self.phi) < 1.0:
            raise DomainError("AR(1) needs |phi| < 1")
        if not self.sigma_eps > 0:
            raise DomainError("innovation sigma must be positive")

    kind = "real"

    @property
    def marginal_sigma(self) -> float:
        return self.sigma_eps / math.sqrt(1.0 - self.phi ** 2)


SourceModel = (IidCategorical, MarkovChain, IidGeometric, IidGaussian, GaussianAR1)


def rng_for(seed: int, replicate: int = 0) -> np.random.Generator:
    """PCG64 stream for one replicate of a run."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(replicate),))))


def _uniform53(rng: np.random.Generator, n: int) -> np.ndarray:
    # (k + 0.5) / 2^53 stays strictly inside (0, 1)
    k = rng.integers(0, 1 << 53, size=n, dtype=np.int64)
    return (k.astype(np.float64) + 0.5) / float(1 << 53)


def _normals(rng: np.random.Generator, n: int) -> np.ndarray:
    if n == 0:
        return np.zeros(0)
    return np.asarray(gaussian_quantile(_uniform53(rng, n)), dtype=np.float64)


def _categorical(u: np.ndarray, p: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, u, side="right")


def generate(model, n: int, seed: int = 0, replicate: int = 0) -> Sequence:
    """``n`` draws from ``model``; identical for identical ``(model, n, seed, replicate)``."""
    if n < 0:
        raise DomainError("length must be nonnegative")
    rng = rng_for(seed, replicate)
    if isinstance(model, IidCategorical):
        x = _categorical(_uniform53(rng, n), np.asarray(model.p)) + model.offset
        return Sequence.symbolic(x, model.alphabet_size)
    if isinstance(model, MarkovChain):
        u = _uniform53(rng, n)
        cdf = np.cumsum(model.matrix, axis=1)
        cdf[:, -1] = 1.0
        x = np.empty(n, dtype=np.int64)
        if n:
            x[0] = _categorical(u[:1], model.stationary())[0]
        for t in range(1, n):
            x[t] = np.searchsorted(cdf[x[t - 1]], u[t], side="right")
        return Sequence.symbolic(x + model.offset, model.alphabet_size)
    if isinstance(model, IidGeometric):
        u = _uniform53(rng, n)
        if model.q == 1.0:
            x = np.ones(n, dtype=np.int64)
        else:
            x = np.ceil(np.log1p(-u) / math.log1p(-model.q)).astype(np.int64)
            x = np.maximum(x, 1)
        return Sequence.symbolic(x)
    if isinstance(model, IidGaussian):
        return Sequence.real(model.m + model.sigma * _normals(rng, n))
    if isinstance(model, GaussianAR1):
        z = _normals(rng, n)
        x = np.empty(n)
        if n:
            x[0] = model.marginal_sigma * z[0]
        phi, se = model.phi, model.sigma_eps
        for t in range(1, n):
            x[t] = phi * x[t - 1] + se * z[t]
        return Sequence.real(x + model.m)
    raise DomainError(f"unknown source model {model!r}")


# ---------------------------------------------------------------------------
# oracles


def entropy_oracle(model) -> float:
    """Entropy rate in nats (counting measure for symbols, Lebesgue for reals)."""
    if isinstance(model, IidCategorical):
        return _entropy(np.asarray(model.p))
    if isinstance(model, MarkovChain):
        P = model.matrix
        pi = model.stationary()
        return float(sum(pi[s] * _entropy(P[s]) for s in range(P.shape[0])))
    if isinstance(model, IidGeometric):
        q = model.q
        if q == 1.0:
            return 0.0
        return (-q * math.log(q) - (1 - q) * math.log1p(-q)) / q
    if isinstance(model, IidGaussian):
        return 0.5 * math.log(2 * math.pi * math.e * model.sigma ** 2)
    if isinstance(model, GaussianAR1):
        return 0.5 * math.log(2 * math.pi * math.e * model.sigma_eps ** 2)
    raise DomainError(f"unknown source model {model!r}")


def unpredictability_oracle(model) -> float:
    """Optimal 0-1 loss rate ``E[1 - max_a P(a | past)]``; symbolic models only."""
    if isinstance(model, IidCategorical):
        return 1.0 - max(model.p)
    if isinstance(model, MarkovChain):
        P = model.matrix
        return float(model.stationary() @ (1.0 - P.max(axis=1)))
    if isinstance(model, IidGeometric):
        return 1.0 - model.q
    raise DomainError("unpredictability rate is defined for symbolic sources only")


def marginal(model) -> Optional[np.ndarray]:
    """One-symbol law for i.i.d. finite sources (indexed from symbol 0), else ``None``."""
    if isinstance(model, IidCategorical):
        return np.concatenate([np.zeros(model.offset), np.asarray(model.p, dtype=np.float64)])
    return None


def cross_entropy_oracle(model, mu) -> float:
    """``-sum_m P(m) log mu(m)`` for a source over the naturals."""
    if isinstance(model, IidCategorical):
        syms = np.arange(model.offset, model.offset + len(model.p))
        p = np.asarray(model.p, dtype=np.float64)
        keep = p > 0
        if np.any(syms[keep] < 1):
            raise DomainError("source puts mass outside the naturals")
        lmu = np.asarray(mu.log_pmf(syms[keep]), dtype=np.float64)
        if np.any(~np.isfinite(lmu)):
            raise DomainError("reference gives zero mass to a source symbol")
        return float(-np.sum(p[keep] * lmu))
    if isinstance(model, IidGeometric):
        q = model.q
        if isinstance(mu, GeometricMeasure):
            # E[m] = 1/q and log mu(m) = log r + (m-1) log(1-r)
            r = mu.q
            if r == 1.0:
                if q == 1.0:
                    return 0.0
                raise DomainError("cross entropy diverges")
            return -(math.log(r) + (1.0 / q - 1.0) * math.log1p(-r))
        if isinstance(mu, PointMassMeasure):
            raise DomainError("finitely supported reference cannot dominate a geometric source")
    raise DomainError("no closed form for this source/reference pair")


# ---------------------------------------------------------------------------
# specification strings


_SPEC = re.compile(r"^\s*([a-z0-9]+)\s*\((.*)\)\s*$")


def _floats(args: str):
    try:
        return [float(a) for a in args.split(",") if a.strip()]
    except ValueError as e:
        raise DomainError(f"bad numeric argument in {args!r}") from e


def load_transition_matrix(path) -> np.ndarray:
    """Row-per-state text file; whitespace or comma separated, ``#`` comments."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].replace(",", " ").strip()
        if line:
            rows.append([float(v) for v in line.split()])
    if not rows or any(len(r) != len(rows) for r in rows):
        raise DomainError(f"{path}: transition matrix must be square")
    return np.array(rows)


def parse_source(spec: str, base_dir=None):
    """``iid(p0,p1,..) | markov(file) | geom(q) | gauss(m,sigma) | ar1(phi,sigma_eps)``."""
    match = _SPEC.match(spec or "")
    if not match:
        raise DomainError(f"cannot parse source spec {spec!r}")
    name, args = match.groups()
    if name == "iid":
        return IidCategorical(tuple(_floats(args)))
    if name == "markov":
        arg = args.strip()
        if re.fullmatch(r"[\d.eE+\-,;\s\[\]]+", arg) and ";" in arg:
            rows = [tuple(_floats(r.strip(" []"))) for r in arg.split(";")]
        else:
            p = Path(arg)
            if base_dir is not None and not p.is_absolute():
                p = Path(base_dir) / p
            rows = [tuple(r) for r in load_transition_matrix(p)]
        return MarkovChain(tuple(rows))
    if name == "geom":
        (q,) = _expect(_floats(args), 1, spec)
        return IidGeometric(q)
    if name == "gauss":
        m, s = _expect(_floats(args), 2, spec)
        return IidGaussian(m, s)
    if name == "ar1":
        vals = _floats(args)
        if len(vals) == 1:
            vals.append(1.0)
        phi, s = _expect(vals, 2, spec)
        return GaussianAR1(phi, s)
    raise DomainError(f"unknown source {name!r}")


def _expect(vals, k: int, spec: str):
    if len(vals) != k:
        raise DomainError(f"{spec!r}: expected {k} arguments")
    return vals
