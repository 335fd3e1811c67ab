import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entrod.core import DomainError
from entrod.ppm import (
    ContextCounts,
    PpmParams,
    lcp_array,
    ppm_conditional_log,
    ppm_oracle_log_density,
    ppm_order_log_density,
    ppm_profile,
    ppm_total_log_density,
    ppm_total_log_density_bruteforce,
    repetition_length,
    suffix_array,
)

P2 = PpmParams(2)


def brute_repetition_length(s):
    s = tuple(s)
    n = len(s)
    best = 0
    for k in range(1, n):
        if any(s[i:i + k] == s[j:j + k] for i in range(n - k + 1) for j in range(i + 1, n - k + 1)):
            best = k
    return best


@pytest.mark.parametrize("x,k,expected", [
    ((0, 1), 3, 1 / 4),
    ((0, 0), 0, 1 / 3),
    ((0, 1), 0, 1 / 6),
    ((), 0, 1.0),
])
def test_order_density_examples(x, k, expected):
    assert ppm_order_log_density(x, k, P2).log_value == pytest.approx(math.log(expected), abs=1e-14)


def test_total_density_examples():
    assert ppm_total_log_density((0,), PpmParams(5)).log_value == pytest.approx(-math.log(5))
    assert ppm_total_log_density((0, 0), P2).log_value == pytest.approx(math.log(7 / 24), abs=1e-14)
    assert ppm_total_log_density((0, 0), P2).log_value == pytest.approx(
        ppm_total_log_density_bruteforce((0, 0), 2, orders=1000), abs=1e-12)
    assert ppm_total_log_density((), P2).log_value == 0.0


@pytest.mark.parametrize("x,L", [((0, 1, 2), 0), ((0, 0), 1), ((0, 1, 0, 1), 2), ((), 0), ((3,), 0)])
def test_repetition_length_examples(x, L):
    assert repetition_length(x) == L


def test_repetition_length_matches_bruteforce_on_all_short_binary_strings():
    for n in range(0, 13):
        for s in itertools.product((0, 1), repeat=n):
            assert repetition_length(s) == brute_repetition_length(s), s


def test_suffix_array_and_lcp():
    s = np.array([1, 0, 1, 0, 0])
    sa = suffix_array(s)
    suffixes = [tuple(s[i:]) for i in range(s.size)]
    assert [suffixes[i] for i in sa] == sorted(suffixes)
    lcp = lcp_array(s, sa)
    for r in range(1, s.size):
        a, b = suffixes[sa[r - 1]], suffixes[sa[r]]
        common = next((i for i, (u, v) in enumerate(zip(a, b)) if u != v), min(len(a), len(b)))
        assert lcp[r] == common


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5).flatmap(lambda D: st.tuples(st.just(D), st.lists(st.integers(0, D - 1), max_size=40))),
       st.integers(0, 45))
def test_fast_order_density_matches_oracle(Dx, k):
    D, x = Dx
    a = ppm_order_log_density(x, k, PpmParams(D)).log_value
    b = ppm_oracle_log_density(x, k, D).log_value
    assert a == pytest.approx(b, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 2), max_size=32))
def test_kolmogorov_consistency(x):
    P3 = PpmParams(3)
    here = ppm_total_log_density(x, P3).log_value
    ext = [ppm_total_log_density(list(x) + [a], P3).log_value for a in range(3)]
    assert math.fsum(math.exp(e - here) for e in ext) == pytest.approx(1.0, abs=1e-12)
    for k in (0, 1, 3):
        here_k = ppm_order_log_density(x, k, P3).log_value
        ext_k = [ppm_order_log_density(list(x) + [a], k, P3).log_value for a in range(3)]
        assert math.fsum(math.exp(e - here_k) for e in ext_k) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 3), max_size=60))
def test_uniform_beyond_repetition_length_and_lower_bound(x):
    D = 4
    n = len(x)
    L = repetition_length(x)
    for k in range(L + 1, L + 4):
        assert ppm_order_log_density(x, k, PpmParams(D)).log_value == -n * math.log(D)
    tot = ppm_total_log_density(x, PpmParams(D)).log_value
    assert tot >= math.log(0.25) - n * math.log(2 * D)
    assert ppm_total_log_density(x, PpmParams(D)).truncation_level == L + 1


def test_order_equal_to_repetition_length_need_not_be_uniform():
    # "0" repeats (L = 1) and the order-1 context 0 has been seen before position 3
    x = (0, 0, 1)
    assert repetition_length(x) == 1
    assert ppm_order_log_density(x, 1, P2).log_value == pytest.approx(math.log(1 / 12))
    assert math.exp(ppm_order_log_density(x, 1, P2).log_value) < 2.0 ** -3


def test_total_matches_bruteforce_mixture():
    rng = np.random.default_rng(5)
    for _ in range(30):
        D = int(rng.integers(2, 4))
        x = rng.integers(0, D, size=int(rng.integers(0, 20)))
        assert ppm_total_log_density(x, PpmParams(D)).log_value == pytest.approx(
            ppm_total_log_density_bruteforce(x, D, orders=60), abs=1e-12)


def test_conditionals():
    assert ppm_conditional_log(0, (), P2) == pytest.approx(math.log(0.5))
    s = sum(math.exp(ppm_conditional_log(a, (0, 0), P2)) for a in (0, 1))
    assert s == pytest.approx(1.0, abs=1e-12)
    assert ppm_conditional_log(0, (0, 0, 0, 0), P2) > math.log(0.5)


def test_domain_errors():
    with pytest.raises(DomainError):
        ppm_order_log_density((0, 2), 0, P2)
    with pytest.raises(DomainError):
        ppm_total_log_density((5,), P2)
    with pytest.raises(ValueError):
        PpmParams(0)


def test_profile_prefixes_agree_with_direct_evaluation():
    rng = np.random.default_rng(11)
    x = rng.integers(0, 2, size=300)
    lengths = np.array([1, 7, 64, 150, 300])
    prof = ppm_profile(x, 2, lengths=lengths)
    for j, m in enumerate(lengths):
        assert prof.log_total()[j] == pytest.approx(ppm_total_log_density(x[:m], P2).log_value, abs=1e-9)
        assert prof.log_order(2)[j] == pytest.approx(ppm_order_log_density(x[:m], 2, P2).log_value, abs=1e-9)


def test_unary_alphabet():
    assert ppm_total_log_density((0, 0, 0), PpmParams(1)).log_value == 0.0


def test_context_counts_track_substring_frequencies_and_densities():
    rng = np.random.default_rng(2)
    x = rng.integers(0, 3, size=80)
    cc = ContextCounts(3, k_cap=4)
    for m, a in enumerate(x, 1):
        cc.append(a)
        if m % 20 == 0:
            text = tuple(x[:m])
            for w in [(0,), (1, 2), tuple(x[m - 3:m]), (2, 2, 2, 2, 2)]:
                freq = sum(1 for i in range(m - len(w) + 1) if text[i:i + len(w)] == w)
                assert cc.count(w) == freq
            for k in range(5):
                assert cc.log_order[k] == pytest.approx(ppm_order_log_density(x[:m], k, PpmParams(3)).log_value,
                                                        abs=1e-10)
