"""Acceptance criteria as plain functions.

Each ``criterion_N`` returns a :class:`CriterionResult`.  The test suite and
``entrod selftest`` call the same functions, so the two can never drift.
Seeds are fixed per criterion.
"""

from __future__ import annotations

import itertools
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np

from entrod.core import log_tail_weight, log_weight
from entrod.npd import (
    NpdConfig,
    corrected_countable_estimate,
    entropy_rate_estimate,
    gaussian_corrected_estimate,
    npd_level_log_density,
    npd_total_log_density,
    npd_total_log_density_batch,
    uniform_tail_gap_bound_log,
    ppm_qr_estimate,
)
from entrod.ppm import (
    PpmParams,
    ppm_oracle_log_density,
    ppm_order_log_density,
    ppm_total_log_density,
    repetition_length,
)
from entrod.prediction import ConditionalDistribution, PredictorConfig, kl_divergence, mistake_rate, total_variation
from entrod.quantization import (
    MAX_DYADIC_LEVEL,
    CountingMeasure,
    DyadicScheme,
    FiniteScheme,
    GaussianMeasure,
    GeometricMeasure,
    IncrementalScheme,
    QuantileScheme,
    UniformMeasure,
    min_separating_level,
)
from entrod.sources import (
    GaussianAR1,
    IidCategorical,
    IidGaussian,
    IidGeometric,
    MarkovChain,
    entropy_oracle,
    generate,
    rng_for,
    unpredictability_oracle,
)

BERNOULLI = IidCategorical((0.3, 0.7))
CHAIN = MarkovChain(((0.9, 0.1), (0.2, 0.8)))
FINITE2 = NpdConfig(FiniteScheme(2), CountingMeasure(2))


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    summary: str
    values: Dict[str, float] = field(default_factory=dict)
    seconds: float = 0.0
    time_limit: float = math.inf

    @property
    def in_time(self) -> bool:
        return self.seconds <= self.time_limit

    def line(self) -> str:
        ok = self.passed and self.in_time
        extra = "" if self.in_time else f" [over time limit {self.time_limit:.0f}s]"
        return f"[{'PASS' if ok else 'FAIL'}] {self.number:2d} {self.title}: {self.summary}{extra}"


def _timed(number: int, title: str, limit: float = math.inf):
    def wrap(fn: Callable[..., tuple]) -> Callable[..., CriterionResult]:
        def run(**kw) -> CriterionResult:
            t0 = time.perf_counter()
            passed, summary, values = fn(**kw)
            dt = time.perf_counter() - t0
            return CriterionResult(number, title, bool(passed), summary, values, dt, limit)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


# ---------------------------------------------------------------------------


@_timed(1, "PPM normalization", limit=10.0)
def criterion_1():
    """Exhaustive sums of the total and per-order PPM densities over all strings."""
    worst = 0.0
    for D in (2, 3):
        params = PpmParams(D)
        for n in range(1, 7):
            strings = list(itertools.product(range(D), repeat=n))
            tot = math.fsum(math.exp(ppm_total_log_density(s, params).log_value) for s in strings)
            worst = max(worst, abs(tot - 1.0))
            for k in range(n + 1):
                s_k = math.fsum(math.exp(ppm_order_log_density(s, k, params).log_value) for s in strings)
                worst = max(worst, abs(s_k - 1.0))
    return worst <= 1e-9, f"max |sum - 1| = {worst:.2e} (tol 1e-9)", {"max_abs_error": worst}


def _random_string(rng: np.random.Generator, n: int, D: int) -> np.ndarray:
    # mix of uniform strings and low-entropy ones so that long repeats occur
    used = int(rng.integers(1, D + 1)) if rng.random() < 0.5 else D
    if rng.random() < 0.25 and n > 2:
        period = int(rng.integers(1, max(2, n // 2)))
        base = rng.integers(0, used, size=period)
        s = np.resize(base, n)
        flips = rng.random(n) < 0.05
        s[flips] = rng.integers(0, used, size=int(flips.sum()))
        return s
    return rng.integers(0, used, size=n)


@_timed(2, "PPM oracle equivalence", limit=30.0)
def criterion_2(cases: int = 10_000):
    """Fast per-order density against the literal transcription."""
    rng = rng_for(1002)
    worst = 0.0
    bad = 0
    for _ in range(cases):
        D = int(rng.integers(1, 6))
        n = int(rng.integers(0, 65))
        k = int(rng.integers(0, n + 3))
        s = _random_string(rng, n, D)
        a = ppm_order_log_density(s, k, PpmParams(D)).log_value
        b = ppm_oracle_log_density(s, k, D).log_value
        err = abs(a - b)
        worst = max(worst, err)
        bad += err > 1e-10
    return bad == 0, f"{cases} cases, max |diff| = {worst:.2e} (tol 1e-10)", {"max_abs_diff": worst, "violations": bad}


@_timed(3, "Truncation identities")
def criterion_3(strings: int = 1000, samples: int = 200):
    """PPM_k is uniform beyond the repetition length; the NPD closed-form tail is within its bound."""
    rng = rng_for(1003)
    ppm_bad = 0
    at_l_differs = 0
    for _ in range(strings):
        D = int(rng.integers(2, 5))
        n = int(rng.integers(1, 65))
        s = _random_string(rng, n, D)
        L = repetition_length(s)
        uniform = -n * math.log(D)
        for k in range(L + 1, L + 4):
            ppm_bad += ppm_order_log_density(s, k, PpmParams(D)).log_value != uniform
        if L >= 0 and ppm_order_log_density(s, L, PpmParams(D)).log_value != uniform:
            at_l_differs += 1

    tail_bad = 0
    total_bad = 0
    worst_ratio = 0.0
    cases = [(QuantileScheme(0.0, 1.0), GaussianMeasure(0.0, 1.0), lambda m: rng.standard_normal(m)),
             (DyadicScheme(), UniformMeasure(), lambda m: 1.0 - rng.random(m))]
    for j in range(samples):
        scheme, mu, draw = cases[j % 2]
        cfg = NpdConfig(scheme, mu)
        x = draw(int(rng.integers(2, 25)))
        M = min_separating_level(x, scheme, cfg.level_cap)
        if M is None:
            continue
        T = M + cfg.margin
        # genuine level terms up to the deepest representable level, 1 beyond
        head = [log_weight(l) + npd_level_log_density(x, l, cfg).log_npd for l in range(T)]
        deep = [log_weight(l) + npd_level_log_density(x, l, cfg).log_npd
                for l in range(T, MAX_DYADIC_LEVEL + 1)]
        deep.append(log_tail_weight(MAX_DYADIC_LEVEL + 1))
        genuine_tail = np.logaddexp.reduce(deep)
        # uniform-tail identity: every level term from T on is 1 up to the gap bound
        gap = abs(math.exp(genuine_tail) - math.exp(log_tail_weight(T)))
        ratio = gap / math.exp(uniform_tail_gap_bound_log(x.size, T))
        worst_ratio = max(worst_ratio, ratio)
        tail_bad += ratio > 1.0 + 1e-9
        # the reported total sits within its recorded bound of the genuine mixture
        ld = npd_total_log_density(x, cfg)
        ref = np.logaddexp.reduce(head + [genuine_tail])
        slack = math.exp(ld.tail_error_bound_log) + 1e-10 * math.exp(ref)
        total_bad += ld.tail_exact or abs(math.exp(ld.log_value) - math.exp(ref)) > slack
    ok = ppm_bad == 0 and tail_bad == 0 and total_bad == 0
    summary = (f"PPM_k uniform for k > L on {strings} strings ({ppm_bad} violations; "
               f"k = L differs on {at_l_differs}), uniform tail gap / bound <= {worst_ratio:.3f}, "
               f"{total_bad} totals outside their recorded bound")
    return ok, summary, {"ppm_violations": ppm_bad, "k_eq_L_counterexamples": at_l_differs,
                         "tail_violations": tail_bad, "total_violations": total_bad, "worst_gap_over_bound": worst_ratio}


@_timed(4, "NPD normalization (Monte Carlo)", limit=120.0)
def criterion_4(samples: int = 100_000):
    """Mean of the NPD density over draws from the reference itself."""
    cfg = NpdConfig(QuantileScheme(0.0, 1.0), GaussianMeasure(0.0, 1.0))
    x = generate(IidGaussian(), 3 * samples, seed=1004).values.reshape(samples, 3)
    vals = np.concatenate([np.exp(npd_total_log_density_batch(c, cfg))
                           for c in np.array_split(x, max(1, samples // 20_000))])
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(samples))
    z = (mean - 1.0) / se
    return abs(z) <= 3.0, f"mean = {mean:.5f}, se = {se:.5f}, z = {z:+.2f} (|z| <= 3)", {"mean": mean, "se": se}


def _replicated_estimates(model, n: int, seed: int, reps: int, cfg=FINITE2) -> np.ndarray:
    return np.array([entropy_rate_estimate(generate(model, n, seed, r).values, cfg, [n]).estimate[-1]
                     for r in range(reps)])


@_timed(5, "Finite-alphabet consistency", limit=20 * 60.0)
def criterion_5(reps: int = 20, n: int = 100_000):
    h = entropy_oracle(BERNOULLI)
    est = _replicated_estimates(BERNOULLI, n, 1005, reps)
    hits = int(np.sum(np.abs(est - h) <= 0.01))
    return hits >= 18, (f"{hits}/{reps} within 0.01 of {h:.6f} (need 18), "
                        f"median {np.median(est):.5f}"), {"hits": hits, "median": float(np.median(est))}


@_timed(6, "Markov consistency")
def criterion_6(reps: int = 20, n: int = 100_000):
    h = entropy_oracle(CHAIN)
    est = _replicated_estimates(CHAIN, n, 1006, reps)
    hits = int(np.sum(np.abs(est - h) <= 0.02))
    return hits >= 18, (f"{hits}/{reps} within 0.02 of {h:.5f} (need 18), "
                        f"median {np.median(est):.5f}"), {"hits": hits, "median": float(np.median(est))}


@_timed(7, "Countable-alphabet corrected estimator")
def criterion_7(n: int = 100_000):
    cfg = NpdConfig(IncrementalScheme(), GeometricMeasure(0.5))
    model = IidGeometric(0.5)
    h = entropy_oracle(model)
    x = generate(model, n, seed=1007).values
    est = float(corrected_countable_estimate(x, cfg).estimate[-1])
    qr = ppm_qr_estimate(x, cfg)
    gap, bound = qr.diagnostics["sandwich_gap"], qr.diagnostics["sandwich_bound"]
    sandwich = bool(np.all(gap >= -1e-9) and np.all(gap <= bound + 1e-9))

    bounded = IidCategorical((1 / 3, 1 / 3, 1 / 3), offset=1)
    y = generate(bounded, n, seed=1017).values
    C = ppm_qr_estimate(y, cfg).corrections["C"]
    trend = bool(C[-1] == 0.0 and C[-1] <= C[0])
    ok = abs(est - h) <= 0.03 and sandwich and trend
    summary = (f"estimate {est:.5f} vs {h:.5f} (tol 0.03), sandwich holds at every grid point: "
               f"{sandwich}, C_n(Q_n) {C[0]:.3g} -> {C[-1]:.3g}")
    return ok, summary, {"estimate": est, "sandwich": sandwich, "C_first": float(C[0]), "C_last": float(C[-1])}


@_timed(8, "Gaussian corrected estimator", limit=20 * 5 * 60.0)
def criterion_8(reps: int = 20):
    h = entropy_oracle(IidGaussian())
    grid = 2 ** np.arange(10, 17)
    errs = np.empty((reps, grid.size))
    for r in range(reps):
        x = generate(IidGaussian(), int(grid[-1]), seed=1008, replicate=r).values
        errs[r] = gaussian_corrected_estimate(x, 0.0, 1.0, grid=grid).estimate - h
    hits = int(np.sum(np.abs(errs[:, -1]) <= 0.10))
    med = np.median(np.abs(errs), axis=0)
    slope = float(np.polyfit(np.log2(grid), med, 1)[0])
    trend = bool(med[-1] < med[0] and slope < 0)
    summary = (f"{hits}/{reps} within 0.10 at 2^16 (need 16); median |error| "
               f"{med[0]:.4f} at 2^10 -> {med[-1]:.4f} at 2^16, slope {slope:+.4f}/octave")
    return hits >= 16 and trend, summary, {"hits": hits, "median_abs_error": med.tolist(), "slope": slope}


@_timed(9, "Gaussian AR(1) trend")
def criterion_9(reps: int = 10, n: int = 2 ** 17):
    ar = GaussianAR1(0.5, 1.0)
    sigma = ar.marginal_sigma
    matched = IidGaussian(0.0, sigma)
    h = entropy_oracle(ar)
    a = np.empty(reps)
    b = np.empty(reps)
    for r in range(reps):
        xa = generate(ar, n, seed=1009, replicate=r).values
        xb = generate(matched, n, seed=1019, replicate=r).values
        a[r] = gaussian_corrected_estimate(xa, 0.0, sigma, grid=[n]).estimate[-1]
        b[r] = gaussian_corrected_estimate(xb, 0.0, sigma, grid=[n]).estimate[-1]
    ma, mb = float(np.median(a)), float(np.median(b))
    ok = abs(ma - h) <= 0.15 and ma < mb
    return ok, (f"AR(1) median {ma:.4f} vs {h:.4f} (tol 0.15); i.i.d. matched-variance median "
                f"{mb:.4f}"), {"median_ar1": ma, "median_iid": mb}


def _mistake_hits(model, target: float, tol: float, seed: int, reps: int, n: int):
    cfg = PredictorConfig(alphabet_size=2, window_cap=512)
    rates = np.array([mistake_rate(generate(model, n, seed, r).values, cfg, [n]).mistake_rate[-1]
                      for r in range(reps)])
    return int(np.sum(np.abs(rates - target) <= tol)), rates


@_timed(10, "Predictor universality")
def criterion_10(reps: int = 20, n: int = 20_000):
    u1, u2 = unpredictability_oracle(BERNOULLI), unpredictability_oracle(CHAIN)
    h1, r1 = _mistake_hits(BERNOULLI, u1, 0.02, 1010, reps, n)
    h2, r2 = _mistake_hits(CHAIN, u2, 0.03, 1020, reps, n)
    ok = h1 >= 18 and h2 >= 18
    summary = (f"Bernoulli {h1}/{reps} within 0.02 of {u1:.3f} (median {np.median(r1):.4f}); "
               f"Markov {h2}/{reps} within 0.03 of {u2:.5f} (median {np.median(r2):.4f})")
    return ok, summary, {"bernoulli_hits": h1, "markov_hits": h2}


@_timed(11, "Ornstein TV convergence")
def criterion_11(reps: int = 20, n: int = 10_000):
    cfg = PredictorConfig(alphabet_size=2, window_cap=None)
    p1 = np.array(BERNOULLI.p)
    tvs = np.array([mistake_rate(generate(BERNOULLI, n, 1011, r).values, cfg, true_marginal=p1).tv
                    for r in range(reps)])
    mean_last = float(tvs[:, -1].mean())
    med = np.median(tvs, axis=0)
    monotone = bool(np.all(np.diff(med) <= 0))
    ups = int(np.sum(np.diff(med) > 0))
    summary = (f"mean TV at n={n} = {mean_last:.4f} (<= 0.05); median trajectory "
               f"{med[0]:.3f} -> {med[-1]:.4f}, {ups} increases across {med.size} grid points")
    return mean_last <= 0.05 and monotone, summary, {"mean_tv_last": mean_last, "median_tv": med.tolist()}


@_timed(12, "Pinsker property")
def criterion_12(pairs: int = 10_000):
    rng = rng_for(1012)
    bad = 0
    for _ in range(pairs):
        D = int(rng.integers(2, 11))
        p = rng.dirichlet(np.full(D, rng.choice([0.1, 1.0, 10.0])))
        q = rng.dirichlet(np.ones(D))
        P, Q = ConditionalDistribution.from_probs(p), ConditionalDistribution.from_probs(q)
        bad += total_variation(P, Q) > math.sqrt(kl_divergence(P, Q) / 2.0) + 1e-12
    return bad == 0, f"{bad} violations on {pairs} pairs", {"violations": bad}


@_timed(13, "Barron one-sided safety")
def criterion_13(runs: int = 100, n: int = 100_000):
    h = entropy_oracle(BERNOULLI)
    est = _replicated_estimates(BERNOULLI, n, 1013, runs)
    low = int(np.sum(est < h - 0.05))
    return low <= 5, f"{low}/{runs} runs below h - 0.05 (allowed 5), min {est.min():.4f}", {"low": low}


REPRO_COMMANDS = [
    ["estimate", "--source", "iid(0.3,0.7)", "--n-max", "1024", "--replicates", "3", "--seed", "7"],
    ["estimate", "--source", "gauss(0,1)", "--n-max", "512", "--seed", "7", "--format", "jsonl"],
    ["estimate", "--source", "geom(0.5)", "--n-max", "256", "--seed", "7", "--units", "bits"],
    ["predict", "--source", "markov([0.9,0.1];[0.2,0.8])", "--n-max", "256", "--replicates", "2",
     "--seed", "7"],
    ["sweep", "--source", "iid(0.3,0.7)", "--n-max", "128", "--sweep", "margin=0,2,4,8", "--seed", "7"],
    ["selftest", "--quick"],
]


@_timed(14, "Reproducibility")
def criterion_14(commands=None):
    """Each command runs twice into fresh files which must match byte for byte."""
    from entrod.harness.cli import main

    commands = REPRO_COMMANDS if commands is None else commands
    same = 0
    with tempfile.TemporaryDirectory() as tmp:
        for i, argv in enumerate(commands):
            outs = []
            for rep in range(2):
                path = Path(tmp) / f"run{i}_{rep}.out"
                code = main(list(argv) + ["--output", str(path)])
                outs.append(path.read_bytes() if code == 0 and path.exists() else None)
            same += outs[0] is not None and outs[0] == outs[1]
    return same == len(commands), f"{same}/{len(commands)} commands byte-identical across two runs", {"same": same}


ALL = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
       criterion_8, criterion_9, criterion_10, criterion_11, criterion_12, criterion_13, criterion_14]
QUICK = [criterion_1, criterion_3, criterion_12]


def run_all(quick: bool = False, include_repro: bool = True) -> List[CriterionResult]:
    chosen = QUICK if quick else ALL
    if not include_repro:
        chosen = [c for c in chosen if c is not criterion_14]
    return [c() for c in chosen]
