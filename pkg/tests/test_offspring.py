import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bpre.offspring import (ExactOverflow, OffspringLaw, law_mean, pgf_complement, pgf_eval,
                            sample_sum)

LAWS = [
    OffspringLaw.shifted_geometric(0.5),
    OffspringLaw.shifted_geometric(math.exp(-2)),
    OffspringLaw.shifted_poisson(1.5),
    OffspringLaw.shifted_poisson(0.0),
    OffspringLaw.finite({1: 0.3, 2: 0.7}),
    OffspringLaw.finite({1: 0.1, 2: 0.2, 5: 0.7}),
]


def brute_convolution(pmf, z):
    """pmf of the z-fold sum by enumerating every tuple of outcomes."""
    out = {}
    for combo in itertools.product(pmf.items(), repeat=z):
        k = sum(c[0] for c in combo)
        out[k] = out.get(k, 0.0) + math.prod(c[1] for c in combo)
    return out


def tv_distance(samples, pmf):
    vals, counts = np.unique(samples, return_counts=True)
    emp = dict(zip(vals.tolist(), (counts / counts.sum()).tolist()))
    keys = set(emp) | set(pmf)
    return 0.5 * sum(abs(emp.get(k, 0.0) - pmf.get(k, 0.0)) for k in keys)


def test_pgf_examples():
    assert pgf_eval(OffspringLaw.shifted_geometric(0.5), 1.0) == 1.0
    law = OffspringLaw.finite({1: 0.3, 2: 0.7})
    # brute force: sum over the support
    assert pgf_eval(law, 0.5) == pytest.approx(sum(p * 0.5**k for k, p in {1: 0.3, 2: 0.7}.items()), abs=1e-15)
    assert pgf_eval(law, 0.5) == pytest.approx(0.325, abs=1e-15)


@pytest.mark.parametrize("law", LAWS)
def test_pgf_zero_and_one(law):
    assert pgf_eval(law, 0.0) == 0.0
    assert pgf_eval(law, 1.0) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("law", LAWS)
def test_pgf_nondecreasing_on_grid(law):
    s = np.round(np.arange(0, 101) * 0.01, 12)
    f = pgf_eval(law, s)
    assert np.all(np.diff(f) >= 0)


@pytest.mark.parametrize("bad", [-0.1, 1.0001, float("nan")])
def test_pgf_domain_error(bad):
    with pytest.raises(ValueError):
        pgf_eval(LAWS[0], bad)


@pytest.mark.parametrize("law", LAWS)
def test_pgf_complement_matches_direct(law):
    u = np.array([0.0, 1e-3, 0.1, 0.5, 0.9, 1.0])
    assert np.allclose(pgf_complement(law, u), 1.0 - pgf_eval(law, 1.0 - u), atol=1e-14)
    # deep in the u -> 0 regime the complement keeps relative accuracy: 1 - f(1-u) ~ m u
    tiny = 1e-15
    assert pgf_complement(law, tiny) == pytest.approx(law.mean * tiny, rel=1e-6)


def test_law_mean_examples(rng):
    assert law_mean(OffspringLaw.shifted_geometric(0.5)) == 2.0
    assert law_mean(OffspringLaw.finite({1: 1.0})) == 1.0
    assert law_mean(OffspringLaw.shifted_poisson(1.5)) == 2.5
    for law, m in [(OffspringLaw.shifted_geometric(0.5), 2.0), (OffspringLaw.shifted_poisson(1.5), 2.5)]:
        x = sample_sum(law, 1, rng, size=10**6)
        assert abs(x.mean() - m) < 5 * x.std() / 1e3


def test_invalid_laws_rejected():
    with pytest.raises(ValueError):
        OffspringLaw.finite({0: 0.5, 1: 0.5})
    with pytest.raises(ValueError):
        OffspringLaw.finite({1: 0.5, 2: 0.4})
    with pytest.raises(ValueError):
        OffspringLaw.shifted_geometric(0.0)
    with pytest.raises(ValueError):
        OffspringLaw.shifted_poisson(-1.0)
    with pytest.raises(ValueError):
        OffspringLaw.from_dict({"family": "binomial"})


@pytest.mark.parametrize("law", LAWS)
def test_no_mass_at_zero(law):
    assert float(law.pmf(0)) == 0.0
    assert law.mean >= 1.0


def test_sample_sum_degenerate(rng):
    assert sample_sum(OffspringLaw.finite({2: 1.0}), 10, rng) == 20
    with pytest.raises(ValueError):
        sample_sum(LAWS[0], 0, rng)


@pytest.mark.parametrize("law", LAWS)
def test_sample_sum_of_one_is_one_draw(law, rng):
    x = sample_sum(law, 1, rng, size=200_000)
    ks = np.arange(1, 40)
    pmf = dict(zip(ks.tolist(), law.pmf(ks).tolist()))
    assert tv_distance(x, pmf) < 0.01


def test_geometric_sum_matches_brute_convolution(rng):
    p = 0.4
    law = OffspringLaw.shifted_geometric(p)
    single = {k: p * (1 - p) ** (k - 1) for k in range(1, 60)}
    target = brute_convolution(single, 3)
    x = sample_sum(law, 3, rng, size=10**6)
    assert tv_distance(x, target) < 0.01


@pytest.mark.parametrize("pmf", [{1: 0.3, 2: 0.7}, {1: 0.1, 2: 0.2, 5: 0.7}, {1: 0.2, 2: 0.2, 3: 0.2, 4: 0.2, 5: 0.2}])
@pytest.mark.parametrize("z", [1, 2, 3, 4])
def test_finite_sum_matches_brute_convolution(pmf, z, rng):
    law = OffspringLaw.finite(pmf)
    x = sample_sum(law, z, rng, size=10**6)
    assert tv_distance(x, brute_convolution(pmf, z)) <= 0.01


@pytest.mark.parametrize("law", LAWS)
@pytest.mark.parametrize("z", [7, 500])
def test_sum_mean_per_individual(law, z, rng):
    x = sample_sum(law, z, rng, size=10**6) / z
    se = math.sqrt(law.variance / z) / 1e3
    assert abs(x.mean() - law.mean) <= 5 * se + 1e-12


def test_large_z_paths(rng):
    law = OffspringLaw.finite({1: 0.5, 3: 0.5})
    z = 10**6
    x = sample_sum(law, z, rng)
    assert abs(x - 2 * z) < 10 * math.sqrt(z)
    big = sample_sum(OffspringLaw.shifted_geometric(0.3), 2**40, rng)
    assert isinstance(big, int) and big > 2**40


def test_overflow_signal(rng):
    with pytest.raises(ExactOverflow):
        sample_sum(OffspringLaw.shifted_geometric(0.1), 2**60, rng)


@pytest.mark.parametrize("law", LAWS)
def test_moments_against_series(law):
    # series truncated once the tail mass is below 1e-12 relative
    ks = np.arange(1, 2000)
    w = law.pmf(ks)
    for p in (1.0, 1.5, 2.0):
        assert law.moment(p) == pytest.approx(float(np.sum(ks**p * w)), rel=1e-10)
    assert law.moment(2.0) == pytest.approx(law.variance + law.mean**2, rel=1e-10)


@pytest.mark.parametrize("law", LAWS)
def test_dict_round_trip(law):
    assert OffspringLaw.from_dict(law.to_dict()) == law


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.0, 1.0))
def test_geometric_pgf_closed_form_vs_sum(p, s):
    law = OffspringLaw.shifted_geometric(p)
    direct = sum(p * (1 - p) ** (k - 1) * s**k for k in range(1, 3000))
    assert pgf_eval(law, s) == pytest.approx(direct, abs=1e-10)
