import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entrod.core import DomainError
from entrod.npd import NpdConfig
from entrod.ppm import PpmParams, ppm_conditional_log
from entrod.prediction import (
    CesaroPpm,
    ConditionalDistribution,
    PredictorConfig,
    cesaro_conditional,
    cesaro_distribution,
    cesaro_distribution_naive,
    kl_divergence,
    mistake_rate,
    predict,
    total_variation,
)
from entrod.quantization import CountingMeasure, FiniteScheme, GeometricMeasure, IncrementalScheme
from entrod.sources import IidCategorical, MarkovChain, generate

EXACT2 = PredictorConfig(alphabet_size=2, window_cap=None)
EXACT3 = PredictorConfig(alphabet_size=3, window_cap=None)


def dist(*p):
    return ConditionalDistribution.from_probs(p)


def test_empty_history_is_uniform():
    d = cesaro_distribution([], EXACT2)
    assert np.allclose(d.probs(), [0.5, 0.5], atol=1e-15)
    assert predict([], EXACT2) == 0


def test_history_of_length_one_averages_two_windows():
    p2 = PpmParams(2)
    for x1 in (0, 1):
        for x2 in (0, 1):
            want = 0.5 * (math.exp(ppm_conditional_log(x2, (), p2))
                          + math.exp(ppm_conditional_log(x2, (x1,), p2)))
            got = math.exp(cesaro_conditional(x2, [x1], EXACT2))
            assert got == pytest.approx(want, rel=1e-12)


def test_constant_history_predicts_the_constant():
    assert predict((0,) * 6, EXACT2) == 0
    assert predict((1,) * 6, EXACT2) == 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 2), max_size=40))
def test_fast_engine_matches_naive_exact(h):
    fast = cesaro_distribution(h, EXACT3).probs()
    slow = cesaro_distribution_naive(h, EXACT3).probs()
    assert np.max(np.abs(fast - slow)) <= 1e-10
    assert math.fsum(fast) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("W", [1, 3, 8])
def test_fast_engine_matches_naive_windowed(W):
    cfg = PredictorConfig(alphabet_size=2, window_cap=W, exact_below=0)
    x = generate(IidCategorical((0.3, 0.7)), 60, seed=3).values
    for t in (0, 1, 5, 17, 59):
        fast = cesaro_distribution(x[:t], cfg).probs()
        slow = cesaro_distribution_naive(x[:t], cfg).probs()
        assert np.max(np.abs(fast - slow)) <= 1e-10


def test_windowed_equals_exact_when_short():
    cfg = PredictorConfig(alphabet_size=2, window_cap=64, exact_below=0)
    x = generate(IidCategorical((0.5, 0.5)), 63, seed=5).values
    assert cesaro_distribution(x, cfg).probs().tolist() == cesaro_distribution(x, EXACT2).probs().tolist()


def test_incremental_engine_matches_replay():
    x = generate(MarkovChain(((0.1, 0.6, 0.3), (0.5, 0.2, 0.3), (0.3, 0.3, 0.4))), 200, seed=9).values
    eng = CesaroPpm(3, window=None, capacity=4)
    for t, a in enumerate(x):
        if t % 37 == 0:
            replay = cesaro_distribution(x[:t], EXACT3).probs()
            assert np.max(np.abs(eng.distribution() - replay)) <= 1e-12
        eng.update(int(a))


def test_relabel_invariance():
    rng = np.random.default_rng(11)
    perm = np.array([2, 0, 1])
    checked = 0
    for _ in range(30):
        h = rng.integers(0, 3, size=int(rng.integers(0, 25)))
        d = cesaro_distribution(h, EXACT3).probs()
        dp = cesaro_distribution(perm[h], EXACT3).probs()
        assert np.allclose(dp[perm], d, atol=1e-13)
        if np.sum(d == d.max()) == 1:
            assert predict(perm[h], EXACT3) == perm[predict(h, EXACT3)]
            checked += 1
    assert checked > 10


def test_symbol_outside_alphabet():
    with pytest.raises(DomainError):
        cesaro_distribution([0, 2], EXACT2)


def test_npd_base_on_finite_scheme_matches_ppm_base():
    npd = NpdConfig(FiniteScheme(2), CountingMeasure(2))
    cfg = PredictorConfig("npd-total", npd=npd, window_cap=None)
    h = [0, 1, 1, 0, 1, 1, 1]
    assert np.allclose(cesaro_distribution(h, cfg).probs(), cesaro_distribution(h, EXACT2).probs(), atol=1e-12)


def test_countable_prediction_uses_a_fresh_symbol():
    npd = NpdConfig(IncrementalScheme(), GeometricMeasure(0.5))
    cfg = PredictorConfig("npd-total", npd=npd, window_cap=None)
    d = cesaro_distribution([1, 3, 1], cfg)
    assert d.support == (1, 3, 4)
    assert predict([1, 1, 1, 1], cfg) == 1


def test_constant_source_rate_vanishes():
    tr = mistake_rate(np.zeros(512, dtype=np.int64), EXACT2)
    assert tr.mistake_rate[-1] == 0.0
    assert np.all((tr.mistake_rate >= 0) & (tr.mistake_rate <= 1))
    assert tr.grid.tolist() == [16, 32, 64, 128, 256, 512]


def test_bernoulli_rate_and_azuma_envelope():
    x = generate(IidCategorical((0.3, 0.7)), 4096, seed=21).values
    tr = mistake_rate(x, PredictorConfig(alphabet_size=2), true_marginal=(0.3, 0.7))
    assert abs(tr.mistake_rate[-1] - 0.3) < 0.03
    gap = np.abs(tr.mistake_rate - tr.conditional_mistake_rate)
    assert np.all(gap <= 3 / np.sqrt(tr.grid))
    assert np.all((tr.tv >= 0) & (tr.tv <= 1))
    assert tr.tv[-1] < 0.05


def test_total_variation_examples():
    assert total_variation(dist(0.2, 0.8), dist(0.2, 0.8)) == 0.0
    assert total_variation(ConditionalDistribution.from_probs([1.0], [0]),
                           ConditionalDistribution.from_probs([1.0], [1])) == 1.0
    assert total_variation(dist(0.3, 0.7), dist(0.5, 0.5)) == pytest.approx(0.2, abs=1e-15)


def test_kl_examples():
    p = dist(0.1, 0.6, 0.3)
    assert kl_divergence(p, p) == 0.0
    point = dist(0.0, 1.0, 0.0)
    assert kl_divergence(point, dist(1, 1, 1)) == pytest.approx(math.log(3), rel=1e-14)
    assert kl_divergence(dist(0.5, 0.5, 0.0), dist(0.0, 0.5, 0.5)) == math.inf


def test_pinsker_on_random_pairs():
    rng = np.random.default_rng(4)
    for _ in range(500):
        D = int(rng.integers(2, 8))
        p, q = dist(*rng.dirichlet(np.ones(D))), dist(*rng.dirichlet(np.ones(D)))
        assert total_variation(p, q) <= math.sqrt(kl_divergence(p, q) / 2) + 1e-12


def test_distribution_validation():
    with pytest.raises(ValueError):
        ConditionalDistribution((0, 0), (math.log(0.5), math.log(0.5)))
    with pytest.raises(ValueError):
        ConditionalDistribution((0, 1), (math.log(0.5), math.log(0.6)))
    with pytest.raises(ValueError):
        PredictorConfig(alphabet_size=2, window_cap=0)
