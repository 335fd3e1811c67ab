"""Experiment specifications: parsing, validation and library wiring."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

from entrod.core import DomainError
from entrod.npd import NpdConfig
from entrod.prediction import EXACT_BELOW, PredictorConfig
from entrod.quantization import (
    CountingMeasure,
    DyadicScheme,
    FiniteScheme,
    GaussianMeasure,
    GeometricMeasure,
    IncrementalScheme,
    PointMassMeasure,
    QuantileScheme,
    UniformMeasure,
)
from entrod.sources import (
    GaussianAR1,
    IidCategorical,
    IidGaussian,
    IidGeometric,
    MarkovChain,
    parse_source,
)


class ConfigError(ValueError):
    """Invalid or inconsistent experiment specification (exit code 1)."""


TASKS = ("estimate", "predict", "sweep")
SCHEMES = ("finite", "dyadic", "quantile", "incremental")


@dataclass(frozen=True)
class ExperimentSpec:
    task: str = "estimate"
    source: Optional[str] = None
    input: Optional[str] = None
    scheme: Optional[str] = None
    ref: Optional[str] = None
    n_max: int = 1024
    replicates: int = 1
    seed: int = 0
    window: Optional[int] = 512
    exact_below: int = EXACT_BELOW
    margin: int = 4
    level_cap: int = 40
    units: str = "nats"
    format: str = "csv"
    sweep_task: str = "estimate"
    sweep: Optional[str] = None
    jobs: int = 1

    def validate(self) -> "ExperimentSpec":
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}")
        if self.sweep_task not in ("estimate", "predict"):
            raise ConfigError("sweep_task must be estimate or predict")
        if (self.source is None) == (self.input is None):
            raise ConfigError("give exactly one of source and input")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if self.n_max < 16:
            raise ConfigError("n_max must be at least 16")
        if self.margin < 0 or self.level_cap < 1:
            raise ConfigError("need margin >= 0 and level_cap >= 1")
        if self.window is not None and self.window < 1:
            raise ConfigError("window must be positive")
        if self.units not in ("nats", "bits"):
            raise ConfigError("units must be nats or bits")
        if self.format not in ("csv", "jsonl"):
            raise ConfigError("format must be csv or jsonl")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.scheme is not None and _name(self.scheme) not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        return self

    def hash(self) -> str:
        """Stable digest of everything that influences the records."""
        d = asdict(self)
        for k in ("format", "jobs"):
            d.pop(k)
        if self.input is not None:
            d["input"] = hashlib.sha256(Path(self.input).read_bytes()).hexdigest()
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_INT_KEYS = {"n_max", "replicates", "seed", "margin", "level_cap", "exact_below", "jobs"}


def _coerce(key: str, value):
    if value is None:
        return None
    if key == "window":
        v = str(value).strip().lower()
        if v in ("none", "inf", "exact"):
            return None
        return _int(key, v)
    if key in _INT_KEYS:
        return _int(key, value)
    return str(value).strip()


def _int(key: str, value) -> int:
    try:
        v = float(value) if isinstance(value, str) and re.search(r"[eE.]", value) else value
        out = int(v)
        if out != float(v):
            raise ValueError
        return out
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{key} must be an integer, got {value!r}") from e


def read_config_file(path) -> Dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    out = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def build_spec(file_values: Dict[str, str], overrides: Dict[str, object]) -> ExperimentSpec:
    """Config-file values first, then non-``None`` command-line overrides."""
    known = {f.name for f in fields(ExperimentSpec)}
    merged = {}
    for src in (file_values, overrides):
        for k, v in src.items():
            if v is None:
                continue
            if k not in known:
                raise ConfigError(f"unknown configuration key {k!r}")
            merged[k] = _coerce(k, v)
    try:
        return ExperimentSpec(**merged).validate()
    except TypeError as e:
        raise ConfigError(str(e)) from e


# ---------------------------------------------------------------------------
# source / scheme / reference wiring


_CALL = re.compile(r"^\s*([a-z]+)\s*(?:\((.*)\))?\s*$")


def _name(s: str) -> str:
    m = _CALL.match(s or "")
    return m.group(1) if m else ""


def _args(s: str) -> Tuple[float, ...]:
    m = _CALL.match(s)
    if not m:
        raise ConfigError(f"cannot parse {s!r}")
    body = m.group(2) or ""
    try:
        return tuple(float(a) for a in body.split(",") if a.strip())
    except ValueError as e:
        raise ConfigError(f"bad arguments in {s!r}") from e


def load_source(spec: ExperimentSpec, base_dir=None):
    try:
        return parse_source(spec.source, base_dir)
    except (DomainError, OSError) as e:
        raise ConfigError(f"source: {e}") from e


def source_kind(model) -> str:
    return "real" if isinstance(model, (IidGaussian, GaussianAR1)) else "symbolic"


def default_scheme(kind: str, model=None) -> str:
    if kind == "real":
        return "quantile"
    if model is not None and isinstance(model, IidGeometric):
        return "incremental"
    return "finite"


def make_npd_config(spec: ExperimentSpec, kind: str, alphabet_size: Optional[int],
                    model=None) -> NpdConfig:
    """Scheme/reference pair for the given data kind; incompatible axes are config errors."""
    scheme_s = spec.scheme or default_scheme(kind, model)
    name = _name(scheme_s)
    if kind == "real" and name in ("finite", "incremental"):
        raise ConfigError(f"scheme {name!r} is incompatible with real-valued source data")
    if kind == "symbolic" and name in ("dyadic", "quantile"):
        raise ConfigError(f"scheme {name!r} is incompatible with symbolic source data")
    ref = spec.ref
    try:
        if name == "finite":
            args = _args(scheme_s)
            D = int(args[0]) if args else alphabet_size
            if not D:
                raise ConfigError("finite scheme needs an alphabet size, e.g. finite(2)")
            if alphabet_size and alphabet_size > D:
                raise ConfigError(f"finite({D}) is smaller than the source alphabet {alphabet_size}")
            mu = _reference(ref or "counting", D)
            scheme = FiniteScheme(D)
        elif name == "dyadic":
            scheme = DyadicScheme()
            mu = _reference(ref or "uniform", None)
        elif name == "quantile":
            mu = _reference(ref or "gauss(0,1)", None)
            if not isinstance(mu, GaussianMeasure):
                raise ConfigError("quantile scheme needs a gauss(m,sigma) reference")
            scheme = QuantileScheme(mu.m, mu.sigma)
        elif name == "incremental":
            scheme = IncrementalScheme()
            mu = _reference(ref or "geom(0.5)", None)
        else:
            raise ConfigError(f"unknown scheme {scheme_s!r}")
        return NpdConfig(scheme, mu, level_cap=spec.level_cap, margin=spec.margin)
    except (DomainError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"scheme {scheme_s!r} with reference {ref!r}: {e}") from e


def _reference(ref: str, D: Optional[int]):
    name, args = _name(ref), _args(ref)
    if name == "counting":
        if D is None:
            raise ConfigError("counting reference needs the finite scheme")
        return CountingMeasure(D)
    if name == "uniform":
        return UniformMeasure()
    if name in ("geom", "geometric"):
        if len(args) != 1:
            raise ConfigError("geom reference takes one argument")
        return GeometricMeasure(args[0])
    if name in ("gauss", "gaussian"):
        if len(args) != 2:
            raise ConfigError("gauss reference takes (m, sigma)")
        return GaussianMeasure(args[0], args[1])
    if name == "points":
        return PointMassMeasure(args)
    raise ConfigError(f"unknown reference measure {ref!r}")


def make_predictor_config(spec: ExperimentSpec, model, alphabet_size: Optional[int],
                          kind: str) -> PredictorConfig:
    if kind == "real":
        raise ConfigError("prediction needs a symbolic source")
    if isinstance(model, (IidCategorical, MarkovChain)) or (model is None and spec.scheme is None):
        if not alphabet_size:
            raise ConfigError("prediction needs a known alphabet size")
        return PredictorConfig("ppm-total", alphabet_size=alphabet_size,
                               window_cap=spec.window, exact_below=spec.exact_below)
    cfg = make_npd_config(spec, kind, alphabet_size, model)
    return PredictorConfig("npd-total", npd=cfg, window_cap=spec.window,
                           exact_below=spec.exact_below)


def parse_sweep(text: Optional[str]):
    """``key=v1,v2,...`` (several axes separated by ``;``) into a list of override dicts."""
    if not text or not text.strip():
        raise ConfigError("sweep needs a parameter grid, e.g. margin=0,2,4,8")
    axes = []
    for part in text.split(";"):
        if not part.strip():
            continue
        if "=" not in part:
            raise ConfigError(f"sweep axis {part!r} must look like key=v1,v2")
        k, vals = part.split("=", 1)
        k = k.strip().replace("-", "_")
        if k in ("task", "sweep", "sweep_task", "format", "jobs"):
            raise ConfigError(f"cannot sweep over {k!r}")
        values = [v.strip() for v in vals.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"sweep axis {k!r} has an empty grid")
        axes.append((k, values))
    if not axes:
        raise ConfigError("sweep grid is empty")
    cells = [{}]
    for k, values in axes:
        cells = [dict(c, **{k: v}) for c in cells for v in values]
    return cells


def cell_spec(spec: ExperimentSpec, overrides: dict) -> ExperimentSpec:
    known = {f.name for f in fields(ExperimentSpec)}
    for k in overrides:
        if k not in known:
            raise ConfigError(f"unknown sweep key {k!r}")
    coerced = {k: _coerce(k, v) for k, v in overrides.items()}
    return replace(spec, task=spec.sweep_task, sweep=None, **coerced).validate()
