"""Experiment orchestration: replicates, grids, sweeps."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import List

import numpy as np

from entrod.core import DomainError, default_grid
from entrod.harness.config import (
    ConfigError,
    ExperimentSpec,
    cell_spec,
    load_source,
    make_npd_config,
    make_predictor_config,
    parse_sweep,
    source_kind,
)
from entrod.harness.io import RunRecord, canonical, read_sequence
from entrod.npd import (
    corrected_countable_estimate,
    entropy_rate_estimate,
    gaussian_corrected_estimate,
    ppm_qr_estimate,
)
from entrod.prediction import mistake_rate
from entrod.quantization import FiniteScheme, GaussianMeasure, IncrementalScheme, QuantileScheme
from entrod.sources import (
    IidCategorical,
    MarkovChain,
    entropy_oracle,
    generate,
    marginal,
    unpredictability_oracle,
)


class NumericalError(RuntimeError):
    """A computation produced a non-finite or otherwise unusable value (exit code 2)."""


def _to_unit(metric: str, v: float, units: str) -> float:
    if units == "bits" and (metric.startswith("h") or metric.startswith("oracle_h")):
        return v / math.log(2.0)
    return v


class _Run:
    """Resolved data source and estimator wiring for one spec."""

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.hash = spec.hash()
        if spec.input is not None:
            if spec.replicates != 1:
                raise ConfigError("external input supports a single replicate")
            self.model = None
            self.data = read_sequence(spec.input)
            self.kind = self.data.kind
            self.alphabet = int(self.data.values.max()) + 1 if self.kind == "symbolic" else None
            self.n_max = min(spec.n_max, self.data.values.size)
            if self.n_max < 1:
                raise ConfigError("input sequence is empty")
        else:
            self.model = load_source(spec)
            self.data = None
            self.kind = source_kind(self.model)
            self.alphabet = getattr(self.model, "alphabet_size", None)
            self.n_max = spec.n_max
        self.grid = default_grid(self.n_max)

    def _shifted_model(self):
        # the incremental scheme lives on {1, 2, ...}
        m = self.model
        if isinstance(m, (IidCategorical, MarkovChain)) and m.offset == 0:
            return replace(m, offset=1)
        return m

    def values(self, replicate: int, model) -> np.ndarray:
        if self.data is not None:
            return self.data.values[: self.n_max]
        return generate(model, self.n_max, seed=self.spec.seed, replicate=replicate).values

    # -- estimate ---------------------------------------------------------

    def npd_config(self):
        return make_npd_config(self.spec, self.kind, self.alphabet, self.model)

    def estimate(self, replicate: int) -> List[RunRecord]:
        cfg = self.npd_config()
        model = self.model
        if isinstance(cfg.scheme, IncrementalScheme):
            model = self._shifted_model() if model is not None else None
        x = self.values(replicate, model)
        if isinstance(cfg.scheme, IncrementalScheme) and x.size and x.min() < 1:
            raise ConfigError("the incremental scheme needs symbols in {1, 2, ...}")
        t0 = time.perf_counter()
        out = []  # (metric, values, flags)
        try:
            base = entropy_rate_estimate(x, cfg, self.grid)
            sat = base.diagnostics.get("saturated", np.zeros(self.grid.size))
            base_flag = "lower_bound" if base.flags else ""
            out.append(("h_mu", base.estimate, [("saturated" if s else base_flag) for s in sat]))
            if not isinstance(cfg.scheme, FiniteScheme):
                out.append(("levels_used", base.diagnostics["levels_used"], None))
            if isinstance(cfg.scheme, IncrementalScheme):
                c = corrected_countable_estimate(x, cfg, self.grid)
                out.append(("h", c.estimate, ["lower_bound"] * self.grid.size))
                qr = ppm_qr_estimate(x, cfg, self.grid)
                out.append(("h_ppm_qr", qr.estimate, None))
                out.append(("Q", qr.diagnostics["Q"], None))
                out.append(("R", qr.diagnostics["R"], None))
            if isinstance(cfg.scheme, QuantileScheme) and isinstance(cfg.mu, GaussianMeasure):
                g = gaussian_corrected_estimate(x, cfg.mu.m, cfg.mu.sigma, cfg, self.grid)
                out.append(("h_lambda", g.estimate, [("saturated" if s else "") for s in sat]))
        except DomainError as e:
            raise NumericalError(str(e)) from e
        wall = time.perf_counter() - t0
        if self.model is not None:
            oracle = entropy_oracle(self.model)
            out.append(("oracle_h", np.full(self.grid.size, oracle), None))
        return self._records(replicate, out, wall)

    # -- predict ----------------------------------------------------------

    def predict(self, replicate: int) -> List[RunRecord]:
        model = self.model
        pcfg = make_predictor_config(self.spec, model, self.alphabet, self.kind)
        if pcfg.base == "npd-total" and model is not None:
            model = self._shifted_model()
        x = self.values(replicate, model)
        p1 = marginal(self.model) if self.model is not None else None
        t0 = time.perf_counter()
        try:
            tr = mistake_rate(x, pcfg, self.grid, true_marginal=p1)
        except DomainError as e:
            raise NumericalError(str(e)) from e
        wall = time.perf_counter() - t0
        win = pcfg.window_for(x.size)
        flag = f"window={win}" if win is not None else ""
        out = [
            ("mistake_rate", tr.mistake_rate, [flag] * self.grid.size),
            ("conditional_mistake_rate", tr.conditional_mistake_rate, [flag] * self.grid.size),
        ]
        if tr.tv is not None:
            out.append(("tv", tr.tv, [flag] * self.grid.size))
        if self.model is not None:
            out.append(("oracle_u", np.full(self.grid.size, unpredictability_oracle(self.model)), None))
        return self._records(replicate, out, wall)

    def _records(self, replicate: int, out, wall: float) -> List[RunRecord]:
        recs = []
        for j, n in enumerate(self.grid):
            for metric, vals, flags in out:
                v = float(vals[j])
                if not math.isfinite(v):
                    raise NumericalError(f"{metric} is {v} at n={n}")
                recs.append(RunRecord(self.hash, replicate, int(n), metric,
                                      _to_unit(metric, v, self.spec.units),
                                      flags[j] if flags else "", wall))
        return recs


def _one(args):
    spec, replicate = args
    run = _Run(spec)
    return run.estimate(replicate) if spec.task == "estimate" else run.predict(replicate)


def _fan_out(spec: ExperimentSpec, jobs: List[tuple]) -> List[List[RunRecord]]:
    if spec.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            return list(pool.map(_one, jobs))
    return [_one(j) for j in jobs]


def _flat(parts) -> List[RunRecord]:
    return [r for p in parts for r in p]


def _aggregate(spec: ExperimentSpec, recs: List[RunRecord]) -> List[RunRecord]:
    if spec.replicates < 2:
        return []
    out = []
    by = {}
    for r in recs:
        if r.metric == "mistake_rate":
            by.setdefault(r.n, []).append(r.value)
    for n in sorted(by):
        v = np.array(by[n])
        out.append(RunRecord(recs[0].spec_hash, -1, n, "mistake_rate_mean", float(v.mean())))
        out.append(RunRecord(recs[0].spec_hash, -1, n, "mistake_rate_stderr",
                             float(v.std(ddof=1) / math.sqrt(v.size))))
    return out


def run_estimate(spec: ExperimentSpec) -> List[RunRecord]:
    spec = replace(spec, task="estimate").validate()
    _Run(spec).npd_config()  # surface configuration errors before any work
    recs = _flat(_fan_out(spec, [(spec, r) for r in range(spec.replicates)]))
    return canonical(recs)


def run_predict(spec: ExperimentSpec) -> List[RunRecord]:
    spec = replace(spec, task="predict").validate()
    run = _Run(spec)
    make_predictor_config(spec, run.model, run.alphabet, run.kind)
    recs = _flat(_fan_out(spec, [(spec, r) for r in range(spec.replicates)]))
    return canonical(recs + _aggregate(spec, recs))


def run_sweep(spec: ExperimentSpec) -> List[RunRecord]:
    """Every cell of the parameter grid as a full run; cells keep grid order."""
    cells = [cell_spec(spec, c) for c in parse_sweep(spec.sweep)]
    for c in cells:  # surface configuration errors before any work
        run = _Run(c)
        if c.task == "estimate":
            run.npd_config()
        else:
            make_predictor_config(c, run.model, run.alphabet, run.kind)
    jobs = [(c, r) for c in cells for r in range(c.replicates)]
    parts = iter(_fan_out(spec, jobs))
    out = []
    for c in cells:
        recs = _flat(next(parts) for _ in range(c.replicates))
        out.extend(canonical(recs + (_aggregate(c, recs) if c.task == "predict" else [])))
    return out


def run(spec: ExperimentSpec) -> List[RunRecord]:
    if spec.task == "estimate":
        return run_estimate(spec)
    if spec.task == "predict":
        return run_predict(spec)
    return run_sweep(spec)
