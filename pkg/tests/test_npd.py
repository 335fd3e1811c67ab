import itertools
import logging
import math

import numpy as np
import pytest

from entrod.core import DomainError, log_weight
from entrod.npd import (
    NpdConfig,
    corrected_countable_estimate,
    entropy_rate_estimate,
    gaussian_corrected_estimate,
    npd_level_log_density,
    npd_profile,
    npd_total_log_density,
    npd_total_log_density_batch,
    optimal_orders,
    plugin_gaussian_estimate,
    ppm_qr_estimate,
    tail_correction,
)
from entrod.ppm import PpmParams, ppm_total_log_density
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

GAUSS = NpdConfig(QuantileScheme(0.0, 1.0), GaussianMeasure(0.0, 1.0))
INCR = NpdConfig(IncrementalScheme(), GeometricMeasure(0.5))
FIN2 = NpdConfig(FiniteScheme(2), CountingMeasure(2))


def brute_npd_incremental(x, mu, levels):
    """Direct mixture over levels with each level's PPM total, for small inputs."""
    terms = []
    for l in range(levels):
        xl = [min(v, l + 1) - 1 for v in x]
        log_r = ppm_total_log_density(xl, PpmParams(l + 1)).log_value
        log_mu = sum(float(mu.log_pmf(v)) if v <= l else float(mu.log_tail(l)) for v in x)
        terms.append(log_weight(l) + log_r - log_mu)
    return float(np.logaddexp.reduce(terms))


def test_config_validation():
    with pytest.raises(DomainError):
        NpdConfig(QuantileScheme(0.0, 1.0), GaussianMeasure(1.0, 1.0))
    with pytest.raises((DomainError, ValueError)):
        NpdConfig(DyadicScheme(), UniformMeasure(), level_cap=0)
    with pytest.raises((DomainError, ValueError)):
        NpdConfig(DyadicScheme(), UniformMeasure(), margin=-1)


def test_level_term_examples():
    t = npd_level_log_density([1, 1], 1, INCR)
    assert t.log_npd == pytest.approx(math.log(7 / 6), abs=1e-14)
    assert t.log_npd == pytest.approx(t.log_r - t.log_mu, abs=0)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(9)
    assert npd_level_log_density(x, 0, GAUSS).log_npd == 0.0


def test_total_examples():
    d = npd_total_log_density([0.4], GAUSS)
    assert d.log_value == pytest.approx(0.0, abs=1e-15)
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.standard_normal(int(rng.integers(1, 30)))
        assert npd_total_log_density(x, GAUSS).log_value >= math.log(0.5) - 1e-12


def test_finite_scheme_reduces_to_ppm():
    x = [0, 1, 1, 0, 1, 1, 1]
    assert npd_total_log_density(x, FIN2).log_value == pytest.approx(
        ppm_total_log_density(x, PpmParams(2)).log_value, abs=1e-14)
    pm = NpdConfig(FiniteScheme(2), PointMassMeasure((0.25, 0.75)))
    expect = ppm_total_log_density(x, PpmParams(2)).log_value - (2 * math.log(0.25) + 5 * math.log(0.75))
    assert npd_total_log_density(x, pm).log_value == pytest.approx(expect, abs=1e-12)
    assert npd_total_log_density(x, FIN2).tail_exact


def test_incremental_truncation_is_a_lower_bound_matching_bruteforce():
    x = [1, 3, 1, 2, 1, 1, 4]
    d = npd_total_log_density(x, INCR)
    assert d.lower_bound and not d.tail_exact
    assert d.truncation_level == max(x) + INCR.margin
    assert d.log_value == pytest.approx(brute_npd_incremental(x, INCR.mu, d.truncation_level + 1), abs=1e-12)
    more = NpdConfig(IncrementalScheme(), GeometricMeasure(0.5), margin=12)
    assert npd_total_log_density(x, more).log_value >= d.log_value


def test_incremental_normalization_on_a_finite_support():
    # the truncated mixture is a sub-probability density against mu
    mu = GeometricMeasure(0.5)
    total = 0.0
    for x in itertools.product((1, 2, 3, 4, 5, 6, 7, 8), repeat=2):
        total += math.exp(npd_total_log_density(list(x), INCR).log_value + float(np.sum(mu.log_pmf(list(x)))))
    assert 0.5 < total <= 1.0 + 1e-12


def test_quantile_tail_is_flagged_with_a_bound():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(12)
    d = npd_total_log_density(x, GAUSS)
    assert not d.tail_exact and d.tail_error_bound_log is not None
    assert d.tail_error_bound_log < math.log(1e-15)


def test_saturation_warns_and_bounds(caplog):
    x = [0.3, 0.3, -1.0]
    with caplog.at_level(logging.WARNING):
        d = npd_total_log_density(x, GAUSS)
    assert d.saturated
    assert "level_cap" in caplog.text
    assert d.tail_error_bound_log is not None and math.isfinite(d.log_value)


def test_dyadic_and_prefix_profile_agree():
    rng = np.random.default_rng(3)
    x = 1.0 - rng.random(200)
    cfg = NpdConfig(DyadicScheme(), UniformMeasure())
    lengths = np.array([1, 2, 17, 100, 200])
    prof = npd_profile(x, cfg, lengths)
    for j, m in enumerate(lengths):
        assert prof.log_total[j] == pytest.approx(npd_total_log_density(x[:m], cfg).log_value, abs=1e-9)


def test_batch_matches_single():
    rng = np.random.default_rng(4)
    z = rng.standard_normal((200, 4))
    z[:10, 2] = z[:10, 0]  # saturated rows take the fallback
    single = np.array([npd_total_log_density(r, GAUSS).log_value for r in z])
    assert np.allclose(npd_total_log_density_batch(z, GAUSS), single, atol=1e-12)


def test_entropy_rate_estimate_fair_coin():
    rng = np.random.default_rng(5)
    x = rng.integers(0, 2, size=50_000)
    tr = entropy_rate_estimate(x, FIN2)
    assert tr.grid.size == tr.estimate.size
    assert abs(tr.estimate[-1] - math.log(2)) < 0.01
    assert entropy_rate_estimate([0.2], GAUSS).estimate[0] == pytest.approx(0.0, abs=1e-15)


def test_corrected_countable_examples():
    rng = np.random.default_rng(6)
    x = rng.integers(1, 3, size=20_000)
    assert abs(corrected_countable_estimate(x, INCR).estimate[-1] - math.log(2)) < 0.02
    const = np.ones(2_000, dtype=np.int64)  # repetition length n - 1: O(n^2) work
    assert corrected_countable_estimate(const, INCR).estimate[-1] < 0.01
    one = corrected_countable_estimate([1], INCR)
    assert math.isfinite(one.estimate[0])
    bounded = NpdConfig(IncrementalScheme(), PointMassMeasure((0.5, 0.5)))
    with pytest.raises(DomainError):
        corrected_countable_estimate([1, 3], bounded)


def test_tail_correction_examples():
    mu = GeometricMeasure(0.5)
    assert tail_correction([1, 2, 1], 2, mu) == 0.0
    assert tail_correction([3], 1, mu) == pytest.approx(math.log(4))
    rng = np.random.default_rng(7)
    x = rng.geometric(0.5, size=100)
    assert all(tail_correction(x, q, mu) >= 0 for q in range(6))


def test_optimal_orders_and_sandwich():
    o = optimal_orders([1] * 30, INCR)
    assert o.q <= 1 and o.r <= 29
    assert optimal_orders([2], INCR).r == 0
    rng = np.random.default_rng(8)
    for _ in range(10):
        x = rng.geometric(0.4, size=int(rng.integers(2, 300)))
        tr = ppm_qr_estimate(x, INCR)
        gap, bound = tr.diagnostics["sandwich_gap"], tr.diagnostics["sandwich_bound"]
        assert np.all(gap >= -1e-9) and np.all(gap <= bound + 1e-9)
        assert np.all(tr.diagnostics["Q"] <= np.maximum.accumulate(x)[tr.grid - 1])
        assert np.all(tr.diagnostics["R"] <= tr.grid - 1)


def test_qr_correction_vanishes_for_bounded_source():
    rng = np.random.default_rng(9)
    x = rng.integers(1, 4, size=20_000)
    C = ppm_qr_estimate(x, INCR).corrections["C"]
    assert C[-1] == 0.0


def test_gaussian_corrected_estimates():
    rng = np.random.default_rng(10)
    x = rng.standard_normal(2 ** 14)
    h = 0.5 * math.log(2 * math.pi * math.e)
    assert abs(gaussian_corrected_estimate(x, 0.0, 1.0).estimate[-1] - h) < 0.05
    km = gaussian_corrected_estimate(x, 0.0, 1.0, known_moments=True).estimate[-1]
    assert abs(km - h) < 0.05
    with pytest.raises(DomainError):
        gaussian_corrected_estimate(x, 0.0, 0.0)
    # strong memory: innovation 0.05 on a unit-variance marginal
    phi = math.sqrt(1 - 0.05 ** 2)
    ar = np.empty(2 ** 12)
    ar[0] = rng.standard_normal()
    for t in range(1, ar.size):
        ar[t] = phi * ar[t - 1] + 0.05 * rng.standard_normal()
    assert gaussian_corrected_estimate(ar, 0.0, 1.0).estimate[-1] < h - 0.5


def test_plugin_estimate():
    rng = np.random.default_rng(11)
    x = 3.0 + 2.0 * rng.standard_normal(2 ** 13)
    tr = plugin_gaussian_estimate(x)
    assert "experimental" in tr.flags
    assert abs(tr.estimate[-1] - 0.5 * math.log(2 * math.pi * math.e * 4.0)) < 0.1
    with pytest.raises(DomainError):
        plugin_gaussian_estimate(np.ones(50))
    with pytest.raises(DomainError):
        plugin_gaussian_estimate([1.0])

