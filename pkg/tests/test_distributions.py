import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from compound_laplace.distributions import (
    Bernoulli,
    Degenerate,
    DistributionSpec,
    Gamma,
    SpecError,
    Term,
    TruncGauss,
    Uniform,
    log_mgf,
    mean_inv_b,
    mgf,
    mgf_deriv,
    sample_inv_b,
)

from conftest import families, single, specs


def test_mgf_at_zero_is_one_for_examples():
    assert mgf(single(Gamma(2, 0.5)), 0.0) == 1.0
    assert mgf(single(TruncGauss(1.0, 2.0, 0.5, 3.0)), 0.0) == 1.0


def test_mgf_of_degenerate_combination():
    spec = DistributionSpec([Term(1.0, Degenerate(1.0)), Term(2.0, Degenerate(3.0))])
    assert mgf(spec, 1.0) == pytest.approx(math.exp(7), rel=1e-14)
    assert mgf(spec, 1.0) == pytest.approx(1096.633158, rel=1e-9)


def test_gamma_mgf_values(gamma_2_half):
    assert mgf(gamma_2_half, -1.0) == pytest.approx(1.5**-2, rel=1e-14)
    assert mgf(gamma_2_half, 3.0) == math.inf
    assert mgf(gamma_2_half, 2.0) == math.inf
    assert mgf(gamma_2_half, 1.999) < math.inf


def test_mgf_deriv_examples(gamma_2_half):
    assert mgf_deriv(single(Degenerate(2.0)), 0.0) == pytest.approx(2.0, rel=1e-15)
    assert mgf_deriv(gamma_2_half, -1.0) == pytest.approx(2 * 0.5 * 1.5**-3, rel=1e-14)
    mix = DistributionSpec([Term(0.5, Degenerate(1.0)), Term(0.5, Degenerate(3.0))])
    assert mgf_deriv(mix, 0.0) == pytest.approx(2.0, rel=1e-15)


@pytest.mark.parametrize(
    "family",
    [
        Gamma(2.0, 0.5),
        Uniform(1.0, 2.0),
        Uniform(0.0, 3.0),
        Bernoulli(0.3, 0.8, 2.5),
        TruncGauss(1.5, 0.5, 0.5),
        TruncGauss(-2.0, 1.5, 0.0, 4.0),
    ],
)
def test_mgf_deriv_matches_central_difference(family):
    spec = single(family)
    h = 1e-6
    for t in (-3.0, -1.0, -0.2):
        fd = (mgf(spec, t + h) - mgf(spec, t - h)) / (2 * h)
        assert mgf_deriv(spec, t) == pytest.approx(fd, rel=1e-6)


def test_means():
    assert mean_inv_b(single(Gamma(2, 0.5))) == pytest.approx(1.0, rel=1e-15)
    assert mean_inv_b(single(Uniform(1, 2))) == 1.5
    assert mean_inv_b(single(TruncGauss(0.0, 1.0, 0.0))) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-14)


@pytest.mark.parametrize(
    "family",
    [
        TruncGauss(0.0, 1.0, 0.0),
        TruncGauss(2.0, 0.7, 0.3, 2.5),
        TruncGauss(-4.0, 1.0, 0.0, 1.0),
        TruncGauss(30.0, 2.0, 0.0, 5.0),
        TruncGauss(0.0, 0.3, 4.0),
    ],
)
def test_trunc_gauss_mgf_against_direct_quadrature(family):
    # independent route: integrate the truncated density numerically
    dist = stats.truncnorm(family.alpha, family.beta, loc=family.mu, scale=family.sigma)
    lo, hi = dist.ppf(1e-15), dist.ppf(1 - 1e-15)
    for t in (-2.0, -0.5, 0.3):
        ref = integrate.quad(lambda x: math.exp(t * x) * dist.pdf(x), lo, hi, epsabs=0, epsrel=1e-12, points=[family.mu] if lo < family.mu < hi else None)[0]
        dref = integrate.quad(lambda x: x * math.exp(t * x) * dist.pdf(x), lo, hi, epsabs=0, epsrel=1e-12, points=[family.mu] if lo < family.mu < hi else None)[0]
        spec = single(family)
        assert mgf(spec, t) == pytest.approx(ref, rel=1e-8)
        assert mgf_deriv(spec, t) == pytest.approx(dref, rel=1e-8)


def test_trunc_gauss_far_tail_is_finite_and_consistent():
    # mass sits against hi; behaves like a point mass there
    tg = TruncGauss(97.6, 0.012, 0.0, 1.0)
    spec = single(tg)
    lam = (97.6 - 1.0) / 0.012**2
    assert log_mgf(spec, -1.0) == pytest.approx(-1.0 + math.log(lam / (lam - 1.0)), abs=1e-12)
    assert math.isfinite(log_mgf(spec, -1e6))


def test_uniform_small_width_matches_degenerate_limit():
    u = single(Uniform(1.0, 1.0 + 1e-9))
    assert mgf(u, -2.0) == pytest.approx(math.exp(-2.0), rel=1e-8)
    assert mgf_deriv(u, -2.0) == pytest.approx(math.exp(-2.0), rel=1e-8)


def test_sample_degenerate():
    rng = np.random.default_rng(5)
    assert sample_inv_b(single(Degenerate(4.0)), rng) == 4.0


def test_sample_moments():
    rng = np.random.default_rng(11)
    u = sample_inv_b(single(Uniform(1, 2)), rng, 1_000_000)
    assert abs(u.mean() - 1.5) < 0.002
    g = sample_inv_b(single(Gamma(2, 0.5)), rng, 1_000_000)
    assert abs(g.mean() - 1.0) < 0.003
    assert abs(g.var() - 0.5) < 0.01
    h = sample_inv_b(single(TruncGauss(0.0, 1.0, 0.0)), rng, 1_000_000)
    assert abs(h.mean() - math.sqrt(2 / math.pi)) < 0.002


@pytest.mark.parametrize(
    "family",
    [
        Degenerate(1.3),
        Bernoulli(0.3, 0.8, 2.5),
        Gamma(0.4, 2.0),
        Gamma(6.0, 0.25),
        Uniform(0.0, 2.0),
        TruncGauss(1.5, 0.5, 0.5),
        TruncGauss(-1.0, 1.0, 0.2, 2.0),
        TruncGauss(0.0, 0.3, 2.0),
    ],
)
def test_sampling_matches_mgf(family):
    spec = single(family, 0.7)
    x = sample_inv_b(spec, np.random.default_rng(3), 1_000_000)
    assert (x > 0).all()
    for t in (-2.0, -1.0, -0.5):
        e = np.exp(t * x)
        se = e.std() / math.sqrt(x.size)
        assert abs(e.mean() - mgf(spec, t)) <= 4 * se + 1e-12


def test_sample_is_reproducible():
    spec = DistributionSpec([Term(1.0, Gamma(2, 0.5)), Term(0.5, TruncGauss(1, 1, 0))])
    a = sample_inv_b(spec, np.random.default_rng(9), 100)
    b = sample_inv_b(spec, np.random.default_rng(9), 100)
    assert np.array_equal(a, b)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(cls=Degenerate, args=(0.0,)),
        dict(cls=Bernoulli, args=(1.5, 1.0, 2.0)),
        dict(cls=Bernoulli, args=(0.5, -1.0, 2.0)),
        dict(cls=Gamma, args=(0.0, 1.0)),
        dict(cls=Gamma, args=(1.0, -1.0)),
        dict(cls=Uniform, args=(-0.1, 1.0)),
        dict(cls=Uniform, args=(2.0, 2.0)),
        dict(cls=TruncGauss, args=(0.0, 1.0, -0.5)),
        dict(cls=TruncGauss, args=(0.0, 0.0, 0.5)),
        dict(cls=TruncGauss, args=(0.0, 1.0, 2.0, 1.0)),
        dict(cls=Degenerate, args=(math.nan,)),
    ],
)
def test_invalid_parameters_rejected(kwargs):
    with pytest.raises(SpecError):
        kwargs["cls"](*kwargs["args"])


def test_spec_requires_positive_coefficient():
    with pytest.raises(SpecError):
        DistributionSpec([Term(0.0, Gamma(1, 1))])
    with pytest.raises(SpecError):
        DistributionSpec([Term(-1.0, Gamma(1, 1)), Term(1.0, Gamma(1, 1))])
    with pytest.raises(SpecError):
        DistributionSpec([])


def test_json_round_trip():
    raw = {
        "terms": [
            {"coef": 0.6, "family": {"gamma": {"k": 2.0, "theta": 0.5}}},
            {"coef": 0.4, "family": {"uniform": {"a": 0.5, "b": 9.0}}},
            {"coef": 1.0, "family": {"trunc_gauss": {"mu": 0.0, "sigma": 1.0, "lo": 0.0, "hi": "inf"}}},
            {"coef": 1.0, "family": {"bernoulli": {"p": 0.2, "x0": 1.0, "x1": 3.0}}},
            {"coef": 1.0, "family": {"degenerate": {"k0": 2.0}}},
        ]
    }
    spec = DistributionSpec.from_dict(raw)
    assert spec.terms[2].family.hi == math.inf
    assert json.loads(json.dumps(spec.to_dict())) == raw
    assert DistributionSpec.from_dict(spec.to_dict()) == spec


@pytest.mark.parametrize(
    "raw, path",
    [
        ({"terms": [{"coef": 1, "family": {"gamma": {"k": -2, "theta": 0.5}}}]}, "terms[0].family.gamma.k"),
        ({"terms": [{"coef": 1, "family": {"gamma": {"k": 2}}}]}, "terms[0].family.gamma.theta"),
        ({"terms": [{"coef": "x", "family": {"gamma": {"k": 2, "theta": 1}}}]}, "terms[0].coef"),
        ({"terms": [{"coef": 1, "family": {"cauchy": {}}}]}, "terms[0].family"),
        ({"terms": "nope"}, "terms"),
        ([], "$"),
        ({"terms": [{"coef": 1, "family": {"uniform": {"a": 2, "b": 1}}}]}, "terms[0].family.uniform.b"),
    ],
)
def test_json_errors_name_the_field(raw, path):
    with pytest.raises(SpecError) as info:
        DistributionSpec.from_dict(raw)
    assert info.value.path == path


def test_describe():
    spec = DistributionSpec([Term(0.6, Gamma(2, 0.5)), Term(0.0, Uniform(0, 1))])
    assert spec.describe() == "0.6*gamma(k=2,theta=0.5)"


def test_vectorized_evaluation_matches_scalar(gamma_2_half):
    ts = np.array([-3.0, -1.0, 0.0, 1.0, 2.5])
    out = mgf(gamma_2_half, ts)
    assert out[-1] == math.inf
    for t, v in zip(ts[:-1], out[:-1]):
        assert v == pytest.approx(mgf(gamma_2_half, float(t)), rel=1e-15)


# -- properties --------------------------------------------------------------


@given(specs())
def test_prop_mgf_zero_and_mean(spec):
    assert mgf(spec, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert mgf_deriv(spec, 0.0) == pytest.approx(mean_inv_b(spec), rel=1e-12)


@given(specs(), st.floats(-10.0, 0.0), st.floats(-10.0, 0.0), st.floats(0.01, 0.99))
def test_prop_log_convex(spec, t1, t2, lam):
    mid = log_mgf(spec, lam * t1 + (1 - lam) * t2)
    chord = lam * log_mgf(spec, t1) + (1 - lam) * log_mgf(spec, t2)
    assert math.exp(mid) <= math.exp(chord) + 1e-12
    assert mid <= chord + 1e-10


@given(specs(), st.floats(-10.0, 0.0), st.floats(-10.0, 0.0))
def test_prop_monotone(spec, t1, t2):
    lo, hi = min(t1, t2), max(t1, t2)
    assert log_mgf(spec, lo) <= log_mgf(spec, hi) + 1e-12


@given(families, families, st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(-5.0, 0.0))
def test_prop_product_law(f1, f2, a1, a2, t):
    both = DistributionSpec([Term(a1, f1), Term(a2, f2)])
    expected = mgf(single(f1), a1 * t) * mgf(single(f2), a2 * t)
    assert mgf(both, t) == pytest.approx(expected, rel=1e-12, abs=1e-300)
