import math

import numpy as np
import pytest

from gpcl import (
    CauchyParams,
    DataError,
    DegenerateSeriesError,
    DomainError,
    FouParams,
    NonIdentifiedError,
    SampleSizeError,
    cauchy_acf,
    cof_alpha,
    match_beta,
    mme_cauchy,
    mme_fou,
    power_variation,
    simulate_cauchy,
    simulate_fou,
)

SQUARES = np.array([0.0, 1.0, 4.0, 9.0, 16.0, 25.0])


def test_power_variation_squares_fixture():
    # Second differences of i^2 are identically 2, so the narrow-stride
    # variation has 4 terms of 2^2; the wide stride gives 2 terms of 8^2.
    assert power_variation(SQUARES, 2.0, 2, 1, 1.0) == 16.0
    assert power_variation(SQUARES, 2.0, 2, 2, 1.0) == 128.0


def test_power_variation_constant_is_zero():
    assert power_variation(np.full(50, 7.3), 2.0, 2, 1, 1.0) == 0.0
    assert power_variation(np.full(50, 7.3), 1.5, 1, 2, 1.0) == 0.0


def test_power_variation_validation():
    with pytest.raises(DomainError):
        power_variation(SQUARES, 0.0, 2, 1, 1.0)
    with pytest.raises(DomainError):
        power_variation(SQUARES, 2.0, 3, 1, 1.0)
    with pytest.raises(DomainError):
        power_variation(SQUARES, 2.0, 2, 4, 1.0)
    with pytest.raises(SampleSizeError):
        power_variation(np.array([1.0, 2.0, 3.0, 4.0]), 2.0, 2, 2, 1.0)


def test_power_variation_skips_gap_markers():
    y = SQUARES.copy()
    y[2] = np.nan
    # The NaN knocks out the three narrow second differences that touch it,
    # leaving only the i=5 window.
    assert power_variation(y, 2.0, 2, 1, 1.0) == 4.0


def test_cof_alpha_squares_is_one():
    # log2(128/16)/2 - 1/2 = 1; out-of-range values are returned, not clamped.
    assert cof_alpha(SQUARES, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_cof_alpha_linear_ramp_degenerate():
    with pytest.raises(DegenerateSeriesError):
        cof_alpha(np.arange(100.0), 1.0)


def test_cof_alpha_affine_invariance():
    rng = np.random.default_rng(19)
    y = rng.standard_normal(400).cumsum()
    base = cof_alpha(y, 1.0)
    shifted = cof_alpha(3.7 * y + 11.0, 1.0)
    assert shifted == pytest.approx(base, abs=1e-12)


def test_cof_alpha_infill_consistency():
    # Brownian-roughness Cauchy paths: the frequency ratio must localize
    # alpha near 0 for nearly every replication at this sample size.
    params = CauchyParams(beta=1.0, nu=1.0, alpha=0.0)
    hits = 0
    for rep in range(100):
        y = simulate_cauchy(params, 65536, 1.0 / 12.0, seed=[901, rep])
        if abs(cof_alpha(y)) < 0.05:
            hits += 1
    assert hits >= 95


def test_mme_fou_known_vs_estimated_mean_same_alpha():
    params = FouParams(kappa=0.5, nu=1.0, hurst=0.3, mu=2.0)
    y = simulate_fou(params, 4000, 1.0 / 12.0, seed=77)
    known = mme_fou(y, known_mean=2.0)
    est = mme_fou(y)
    assert known.alpha_hat == est.alpha_hat
    assert known.hurst_hat == known.alpha_hat + 0.5


def test_mme_fou_ou_recovery():
    # H = 1/2 sanity: the amplitude denominator reduces to 2 n Delta and
    # both kappa and nu must land within 10% at this sample size.
    params = FouParams(kappa=0.5, nu=1.5, hurst=0.5)
    y = simulate_fou(params, 21900, 1.0 / 12.0, seed=12345)
    res = mme_fou(y, known_mean=0.0)
    assert res.kappa_hat == pytest.approx(0.5, rel=0.10)
    assert res.nu_hat == pytest.approx(1.5, rel=0.10)
    assert res.nu_hat**2 == pytest.approx(1.5**2, rel=0.05)


def test_mme_fou_range_error():
    with pytest.raises(DomainError, match="clamp only for MCLE initialization"):
        mme_fou(SQUARES, 1.0)


def test_mme_fou_replication_study():
    # Long-span study at the roughest table setting (H = 0.05): the
    # roughness estimator is essentially unbiased with sd near 0.013, and
    # the mean-reversion estimator carries a small positive bias.
    params = FouParams(kappa=0.005, nu=1.25, hurst=0.05)
    alphas, kappas = [], []
    for rep in range(200):
        y = simulate_fou(params, 13140, 1.0 / 12.0, seed=[402, rep])
        res = mme_fou(y, known_mean=0.0)
        alphas.append(res.alpha_hat - (-0.45))
        kappas.append(res.kappa_hat - 0.005)
    assert abs(np.mean(alphas)) <= 0.004
    assert 0.009 <= np.std(alphas) <= 0.017
    assert 0.001 <= np.mean(kappas) <= 0.011
    assert 0.010 <= np.std(kappas) <= 0.030


def test_mme_cauchy_rough_negative_alpha_bias():
    # Rough Cauchy paths at this resolution push the frequency ratio down:
    # mean bias of alpha_hat sits near -0.059.  The roughness component is
    # tested directly because the decay matching can legitimately refuse on
    # the occasional replication whose sample ACF is flat.
    params = CauchyParams(beta=0.5, nu=0.75, alpha=-0.40)
    biases = []
    for rep in range(200):
        y = simulate_cauchy(params, 13140, 1.0 / 12.0, seed=[403, rep])
        biases.append(cof_alpha(y) - (-0.40))
    assert -0.066 <= np.mean(biases) <= -0.052


def test_mme_cauchy_smooth_positive_alpha_bias():
    # Smoother-than-Brownian paths bias the ratio upward, near +0.041.
    params = CauchyParams(beta=1.25, nu=0.3, alpha=0.20)
    biases = []
    for rep in range(200):
        y = simulate_cauchy(params, 13140, 1.0 / 12.0, seed=[404, rep])
        res = mme_cauchy(y, known_mean=0.0)
        biases.append(res.alpha_hat - 0.20)
    assert 0.030 <= np.mean(biases) <= 0.052
    assert np.std(biases) <= 0.020


def test_match_beta_zero_residual():
    lags = [1, 6, 12, 24, 60]
    delta = 1.0 / 12.0
    rho = cauchy_acf(CauchyParams(beta=0.8, nu=1.0, alpha=-0.2), np.array(lags) * delta)
    assert match_beta(rho, lags, alpha=-0.2, delta=delta) == pytest.approx(0.8, abs=1e-6)


def test_match_beta_non_identified():
    # Correlations pinned at 1 pull the decay estimate to the lower search
    # bound, which must be reported as non-identification, not a number.
    lags = [1, 6, 12]
    with pytest.raises(NonIdentifiedError):
        match_beta(np.ones(3), lags, alpha=0.0, delta=1.0 / 12.0)


def test_mme_cauchy_range_error():
    with pytest.raises(DomainError, match="clamp only for MCLE initialization"):
        mme_cauchy(SQUARES, 1.0)


def test_mme_requires_delta_for_bare_vectors():
    with pytest.raises(DataError):
        mme_fou(np.random.default_rng(1).standard_normal(100))


def test_mme_cauchy_recovery():
    params = CauchyParams(beta=1.0, nu=0.3, alpha=0.0)
    y = simulate_cauchy(params, 21900, 1.0 / 12.0, seed=99)
    res = mme_cauchy(y, known_mean=0.0)
    assert res.alpha_hat == pytest.approx(0.0, abs=0.05)
    assert res.nu_hat == pytest.approx(0.3, rel=0.10)
    assert res.beta_hat == pytest.approx(1.0, rel=0.35)
