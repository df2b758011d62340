import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate

from bctcure.lifetime import WeibullParams, weibull_cdf
from bctcure.model import ParameterVector, covariate_link, cure_rate, population_survival
from bctcure.simulation import (
    BinaryScenario,
    ContinuousScenario,
    calibrate_censoring_rate,
    expected_censoring,
    generate,
    generate_binary,
    generate_continuous,
    rng_stream,
    susceptible_time,
    true_params_binary,
    true_params_continuous,
)

GAMMA = WeibullParams(0.316, 0.179)
ALPHAS = [0.0, 0.25, 0.5, 0.75, 1.0]

BINARY_TABLE = [
    ((0.40, 0.20, 0.5), (0.905, -0.755)),
    ((0.65, 0.35, 0.5), (0.322, -1.055)),
    ((0.40, 0.20, 0.75), (1.139, -0.864)),
    ((0.65, 0.35, 0.75), (0.468, -1.144)),
    ((0.40, 0.20, 1.0), (1.386, -0.981)),
    ((0.40, 0.20, 0.0), (0.476, -0.563)),
    ((0.65, 0.35, 0.0), (0.049, -0.891)),
]


@pytest.mark.parametrize("args,expected", BINARY_TABLE)
def test_true_params_binary_table_values(args, expected):
    np.testing.assert_allclose(true_params_binary(*args), expected, atol=5e-4)


def test_true_params_binary_closed_form():
    # log{(0.35^-0.5 - 1) / 0.5}; the printed 0.322 truncates rather than rounds
    b0, b1 = true_params_binary(0.65, 0.35, 0.5)
    assert b0 == pytest.approx(math.log((0.35**-0.5 - 1) / 0.5), rel=1e-14)
    assert b0 == pytest.approx(0.3225305143980376, rel=1e-12)
    assert math.floor(b0 * 1000) / 1000 == 0.322
    assert b1 == pytest.approx(math.log((0.65**-0.5 - 1) / 0.5) - b0, rel=1e-13)


@pytest.mark.parametrize(
    "alpha,expected", [(0.5, (-0.746, 0.134)), (0.75, (-0.692, 0.156))]
)
def test_true_params_continuous_table_values(alpha, expected):
    np.testing.assert_allclose(true_params_continuous(0.65, 0.05, 0.1, 20.0, alpha), expected, atol=5e-4)


def test_true_params_continuous_pcm_slope():
    b1 = true_params_continuous(0.65, 0.05, 0.1, 20.0, 0.0)[1]
    assert b1 == pytest.approx(0.097454255833652349, rel=1e-13)
    assert b1 == pytest.approx(0.0975, abs=5e-5)


@pytest.mark.parametrize("alpha", ALPHAS)
@pytest.mark.parametrize("p01,p00", [(0.40, 0.20), (0.65, 0.35), (0.9, 0.01)])
def test_binary_round_trip(alpha, p01, p00):
    theta = ParameterVector(true_params_binary(p01, p00, alpha), GAMMA, alpha)
    assert cure_rate([1.0], theta) == pytest.approx(p01, abs=1e-10)
    assert cure_rate([0.0], theta) == pytest.approx(p00, abs=1e-10)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_continuous_round_trip(alpha):
    theta = ContinuousScenario(alpha=alpha).true_theta()
    assert cure_rate([20.0], theta) == pytest.approx(0.05, abs=1e-10)
    assert cure_rate([0.1], theta) == pytest.approx(0.65, abs=1e-10)


def test_true_params_reject_degenerate_proportions():
    for bad in (0.0, 1.0, -0.1, 1.2):
        with pytest.raises(ValueError):
            true_params_binary(bad, 0.2, 0.5)
    with pytest.raises(ValueError):
        true_params_continuous(0.65, 0.05, 20.0, 0.1, 0.5)


def _time_oracle(u_star, p0, alpha, eta):
    with mp.workdps(50):
        ph = mp.exp(eta) / (1 + alpha * mp.exp(eta))
        arg = (1 - (p0 + (1 - p0) * mp.mpf(u_star)) ** alpha) / (alpha * ph)
        return float(((-mp.log(1 - arg)) ** mp.mpf(0.316)) / mp.mpf(0.179))


def test_susceptible_time_reference():
    phi = covariate_link(0.5, 0.905)
    t = susceptible_time(0.5, 0.2, phi, 0.5, GAMMA)
    assert t == pytest.approx(_time_oracle(0.5, 0.2, 0.5, 0.905), rel=1e-10)
    assert t == pytest.approx(4.5542890405294312, rel=1e-10)


def test_susceptible_time_limits():
    b0, _ = true_params_binary(0.4, 0.2, 0.5)
    phi = covariate_link(0.5, b0)
    assert susceptible_time(1.0 - 1e-15, 0.2, phi, 0.5, GAMMA) < 1e-3
    assert susceptible_time(0.0, 0.2, phi, 0.5, GAMMA) == math.inf
    times = [susceptible_time(u, 0.2, phi, 0.5, GAMMA) for u in (1e-3, 1e-6, 1e-9)]
    assert times[0] < times[1] < times[2]


def test_susceptible_time_pcm_branch_inverts_survival():
    eta = 0.476
    theta = ParameterVector([eta], GAMMA, 0.0)
    p0 = cure_rate([], theta)
    t = susceptible_time(0.3, p0, math.exp(eta), 0.0, GAMMA)
    s = population_survival(t, [], theta)
    assert (s - p0) / (1 - p0) == pytest.approx(0.3, rel=1e-10)


def test_susceptible_time_rejects_inconsistent_inputs():
    with pytest.raises(ValueError):
        susceptible_time(0.5, 0.2, 0.1, 0.5, GAMMA)


def test_generator_layout_and_determinism():
    sc = BinaryScenario()
    a = generate_binary(sc, 42)
    b = generate_binary(sc, 42)
    assert a == b
    assert a.n == 200
    assert np.all(a.x[:120, 0] == 1) and np.all(a.x[120:, 0] == 0)
    assert generate_binary(sc, 42, 1) != a
    assert generate(sc, 42) == a


def test_nearly_everyone_cured():
    sc = BinaryScenario(n1=500, n2=500, p01=1 - 1e-12, p00=1 - 1e-12)
    data = generate(sc, 1)
    assert np.all(data.delta == 0)
    # observed times are then the exponential censoring times
    g1 = data.y[data.x[:, 0] == 1]
    assert g1.mean() == pytest.approx(1 / 0.15, rel=0.15)


def test_heavy_censoring_dominates():
    sc = BinaryScenario(c1=1e9, c2=1e9)
    data = generate(sc, 3)
    assert np.all(data.y < 1e-6)
    assert np.all(data.delta == 0)


def test_cure_fraction_large_sample():
    n = 100_000
    sc = BinaryScenario(n1=n, n2=n, c1=1e-12, c2=1e-12)
    data = generate(sc, 2024)
    for x, p0 in ((1.0, 0.40), (0.0, 0.20)):
        cured = 1.0 - data.delta[data.x[:, 0] == x].mean()
        assert abs(cured - p0) <= 3 * math.sqrt(p0 * (1 - p0) / n)


def test_susceptible_survival_within_dkw_band():
    n = 100_000
    sc = BinaryScenario(n1=n, n2=n, c1=1e-12, c2=1e-12)
    data = generate(sc, 7)
    theta = sc.true_theta()
    eps = math.sqrt(math.log(2 / 0.01) / (2 * n))
    for x in (1.0, 0.0):
        t = np.sort(data.y[(data.x[:, 0] == x) & (data.delta == 1)])
        m = t.size
        band = math.sqrt(math.log(2 / 0.01) / (2 * m))
        assert band >= eps
        p0 = cure_rate([x], theta)
        grid = np.quantile(t, np.linspace(0.1, 0.9, 9))
        emp = 1.0 - np.searchsorted(t, grid, side="right") / m
        ana = (population_survival(grid, [x], theta) - p0) / (1 - p0)
        assert np.max(np.abs(emp - ana)) <= band


def test_constant_cure_rate_when_slope_is_zero():
    # p_high and p_low almost equal make beta1 ~ 0
    sc = ContinuousScenario(n=100_000, p_high=0.2 + 1e-12, p_low=0.2, c=1e-12)
    assert abs(sc.true_theta().beta[1]) < 1e-9
    data = generate(sc, 5)
    cured = 1.0 - data.delta.mean()
    assert abs(cured - 0.2) <= 3 * math.sqrt(0.16 / sc.n)


def test_continuous_mean_cure_rate_matches_quadrature():
    sc = ContinuousScenario(n=100_000, c=1e-12)
    theta = sc.true_theta()
    data = generate_continuous(sc, 11)
    x = data.x[:, 0]
    assert x.min() >= sc.x_min and x.max() <= sc.x_max
    p0 = cure_rate(x.reshape(-1, 1), theta)
    width = sc.x_max - sc.x_min
    expect, _ = integrate.quad(lambda v: cure_rate([v], theta) / width, sc.x_min, sc.x_max)
    assert abs(p0.mean() - expect) <= 3 * p0.std(ddof=1) / math.sqrt(sc.n)
    cured = 1.0 - data.delta.mean()
    assert abs(cured - expect) <= 3 * math.sqrt(expect * (1 - expect) / sc.n) + 3 * p0.std() / math.sqrt(sc.n)


def test_rng_streams_are_independent_of_order():
    a = rng_stream(9, 3).uniform(size=4)
    rng_stream(9, 2).uniform(size=100)
    np.testing.assert_array_equal(rng_stream(9, 3).uniform(size=4), a)
    assert not np.array_equal(rng_stream(9, 3, 1).uniform(size=4), a)


def test_censoring_calibration_hits_target():
    theta = BinaryScenario().true_theta()
    rate = calibrate_censoring_rate(0.6, 1.0, theta)
    assert expected_censoring(rate, 1.0, theta) == pytest.approx(0.6, abs=1e-9)
    with pytest.raises(ValueError):
        calibrate_censoring_rate(0.3, 1.0, theta)


def test_expected_censoring_matches_simulation():
    sc = BinaryScenario(n1=50_000, n2=50_000)
    data = generate(sc, 8)
    theta = sc.true_theta()
    for x, rate in ((1.0, 0.15), (0.0, 0.10)):
        p = expected_censoring(rate, x, theta)
        emp = 1.0 - data.delta[data.x[:, 0] == x].mean()
        assert abs(emp - p) <= 3 * math.sqrt(p * (1 - p) / 50_000)


def test_proportion_mode_uses_calibrated_rates():
    sc = BinaryScenario(c1=0.6, c2=0.5, censoring="proportion")
    r1, r2 = sc.censoring_rates()
    theta = sc.true_theta()
    assert expected_censoring(r1, 1.0, theta) == pytest.approx(0.6, abs=1e-9)
    assert expected_censoring(r2, 0.0, theta) == pytest.approx(0.5, abs=1e-9)


def test_scenario_validation():
    with pytest.raises(ValueError):
        BinaryScenario(p01=1.2)
    with pytest.raises(ValueError):
        BinaryScenario(n1=0)
    with pytest.raises(ValueError):
        BinaryScenario(censoring="percent")
    with pytest.raises(ValueError):
        ContinuousScenario(p_low=0.7)
    with pytest.raises(ValueError):
        ContinuousScenario(x_min=5.0, x_max=5.0)
