from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, stats

from cbandits.core import (
    DRAWS_PER_STEP,
    Arm,
    Bernoulli,
    Beta,
    Discrete,
    PointMass,
    ProblemInstance,
    UniformSource,
    ValidationError,
    distribution_from_config,
    experiment_key,
    instance_from_config,
    trial_stream,
)

# Frozen exact moments, computed by hand from the closed forms.
EXPECTED_MOMENTS = [
    (PointMass(0.3), 0.3, 0.0),
    (Bernoulli(0.25), 0.25, 0.1875),
    (Discrete((0.0, 0.5, 1.0), (0.2, 0.3, 0.5)), 0.65, 0.1525),
    (Beta(2.0, 3.0), 0.4, 0.04),
]


def two_point_instance() -> ProblemInstance:
    return ProblemInstance(
        arms=(
            Arm(PointMass(1.0), PointMass(0.0)),
            Arm(PointMass(0.0), PointMass(1.0)),
        ),
        constraint_level=0.5,
    )


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("dist,mean,variance", EXPECTED_MOMENTS)
def test_closed_form_moments(dist, mean, variance):
    assert dist.mean == pytest.approx(mean, abs=1e-12)
    assert dist.variance == pytest.approx(variance, abs=1e-12)


def test_beta_mean_matches_numerical_integration():
    # Independent check of the closed form against direct quadrature.
    dist = Beta(2.0, 3.0)
    pdf = stats.beta(2.0, 3.0).pdf
    mean_quad, err = integrate.quad(lambda x: x * pdf(x), 0.0, 1.0)
    assert err < 1e-10
    assert dist.mean == pytest.approx(mean_quad, abs=1e-9)
    second, _ = integrate.quad(lambda x: x * x * pdf(x), 0.0, 1.0)
    assert dist.variance == pytest.approx(second - mean_quad**2, abs=1e-9)


# ---------------------------------------------------------------------------
# quantile maps
# ---------------------------------------------------------------------------


def test_point_mass_quantile_is_constant():
    dist = PointMass(0.7)
    assert dist.quantile(0.0) == 0.7
    assert dist.quantile(0.999) == 0.7
    out = dist.quantile(np.array([0.1, 0.9]))
    assert np.array_equal(out, np.array([0.7, 0.7]))


def test_bernoulli_quantile_threshold():
    dist = Bernoulli(0.25)
    assert dist.quantile(0.0) == 1.0
    assert dist.quantile(0.2499) == 1.0
    assert dist.quantile(0.25) == 0.0
    assert dist.quantile(0.9) == 0.0
    out = dist.quantile(np.array([0.1, 0.25, 0.3]))
    assert np.array_equal(out, np.array([1.0, 0.0, 0.0]))


def test_discrete_quantile_cells():
    dist = Discrete((0.0, 0.5, 1.0), (0.2, 0.3, 0.5))
    # Cells: [0, 0.2) -> 0.0, [0.2, 0.5) -> 0.5, [0.5, 1) -> 1.0.
    assert dist.quantile(0.0) == 0.0
    assert dist.quantile(0.1999) == 0.0
    assert dist.quantile(0.2) == 0.5
    assert dist.quantile(0.4999) == 0.5
    assert dist.quantile(0.5) == 1.0
    assert dist.quantile(0.9999) == 1.0


def test_beta_quantile_inverts_cdf():
    dist = Beta(2.0, 3.0)
    u = np.linspace(0.01, 0.99, 23)
    x = dist.quantile(u)
    np.testing.assert_allclose(stats.beta.cdf(x, 2.0, 3.0), u, atol=1e-12)
    assert dist.quantile(0.5) == pytest.approx(stats.beta.ppf(0.5, 2.0, 3.0), abs=1e-14)


@pytest.mark.parametrize("dist,_m,_v", EXPECTED_MOMENTS)
def test_samples_stay_in_unit_interval(dist, _m, _v):
    source = UniformSource(np.random.default_rng(7))
    values = dist.sample_many(source, 20_000)
    assert values.min() >= 0.0
    assert values.max() <= 1.0


@pytest.mark.parametrize("dist,mean,variance", EXPECTED_MOMENTS)
def test_law_of_large_numbers(dist, mean, variance):
    n = 1_000_000
    source = UniformSource(np.random.default_rng(20260819))
    values = dist.sample_many(source, n)
    # Four-sigma band around the exact mean, plus float-summation slack.
    tol = 4.0 * math.sqrt(variance / n) + 1e-12
    assert abs(values.mean() - mean) <= tol
    if variance > 0.0:
        sample_var = values.var()
        assert abs(sample_var - variance) <= 12.0 * variance / math.sqrt(n) + 1e-12


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "build,code",
    [
        (lambda: PointMass(1.2), "out_of_support"),
        (lambda: PointMass(-0.1), "out_of_support"),
        (lambda: PointMass(float("nan")), "bad_parameter"),
        (lambda: Bernoulli(1.5), "bad_parameter"),
        (lambda: Discrete((0.2, 1.3), (0.5, 0.5)), "out_of_support"),
        (lambda: Discrete((0.2, 0.3), (0.6, 0.6)), "bad_probabilities"),
        (lambda: Discrete((0.2, 0.3), (-0.1, 1.1)), "bad_probabilities"),
        (lambda: Discrete((0.2, 0.3), (0.5,)), "bad_parameter"),
        (lambda: Discrete((), ()), "bad_parameter"),
        (lambda: Beta(0.0, 2.0), "bad_parameter"),
        (lambda: Beta(2.0, -1.0), "bad_parameter"),
    ],
)
def test_distribution_validation_codes(build, code):
    with pytest.raises(ValidationError) as err:
        build()
    assert err.value.code == code


def test_discrete_probability_sum_tolerance():
    # Within 1e-12 of one is accepted.
    Discrete((0.0, 1.0), (0.5, 0.5 + 4e-13))


def test_instance_requires_two_arms():
    with pytest.raises(ValidationError) as err:
        ProblemInstance(arms=(Arm(Bernoulli(0.5), Bernoulli(0.5)),), constraint_level=0.5)
    assert err.value.code == "too_few_arms"


def test_instance_requires_nonempty_feasible_set():
    with pytest.raises(ValidationError) as err:
        ProblemInstance(
            arms=(
                Arm(Bernoulli(0.5), PointMass(0.8)),
                Arm(Bernoulli(0.5), PointMass(0.9)),
            ),
            constraint_level=0.5,
        )
    assert err.value.code == "empty_feasible_set"


def test_instance_boundary_cost_is_feasible():
    ProblemInstance(
        arms=(
            Arm(Bernoulli(0.5), PointMass(0.5)),
            Arm(Bernoulli(0.5), PointMass(0.9)),
        ),
        constraint_level=0.5,
    )


def test_instance_mean_vectors():
    instance = two_point_instance()
    assert np.array_equal(instance.reward_means(), np.array([1.0, 0.0]))
    assert np.array_equal(instance.cost_means(), np.array([0.0, 1.0]))
    assert instance.num_arms == 2


# ---------------------------------------------------------------------------
# config round trips
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("dist,_m,_v", EXPECTED_MOMENTS)
def test_distribution_config_round_trip(dist, _m, _v):
    assert distribution_from_config(dist.to_config()) == dist


def test_distribution_config_unknown_kind():
    with pytest.raises(ValidationError) as err:
        distribution_from_config({"kind": "cauchy", "scale": 2.0})
    assert err.value.code == "unknown_kind"


def test_distribution_config_unknown_key():
    with pytest.raises(ValidationError) as err:
        distribution_from_config({"kind": "bernoulli", "p": 0.5, "q": 0.5})
    assert err.value.code == "unknown_key"
    assert "q" in str(err.value)


def test_instance_config_round_trip():
    instance = ProblemInstance(
        arms=(
            Arm(Bernoulli(0.7), Discrete((0.0, 1.0), (0.7, 0.3))),
            Arm(Beta(2.0, 3.0), PointMass(0.2)),
        ),
        constraint_level=0.5,
    )
    again = instance_from_config(instance.to_config())
    assert again == instance


def test_instance_config_rejects_unknown_key():
    config = two_point_instance().to_config()
    config["extra"] = 1
    with pytest.raises(ValidationError) as err:
        instance_from_config(config)
    assert err.value.code == "unknown_key"


# ---------------------------------------------------------------------------
# uniform streams
# ---------------------------------------------------------------------------


def test_uniform_source_scalar_equals_bulk():
    a = UniformSource(np.random.default_rng(11), block=3)
    b = UniformSource(np.random.default_rng(11), block=1000)
    scalars = np.array([a.uniform() for _ in range(257)])
    assert np.array_equal(scalars, b.uniforms(257))


def test_uniform_source_mixed_consumption_preserves_order():
    a = UniformSource(np.random.default_rng(5), block=7)
    b = np.random.default_rng(5).random(50)
    got = []
    got.extend(a.uniforms(3))
    got.append(a.uniform())
    got.extend(a.uniforms(20))
    got.append(a.uniform())
    got.extend(a.uniforms(25))
    assert np.array_equal(np.array(got), b)


def test_trial_stream_is_deterministic():
    s1 = trial_stream(123, 4, horizon=50)
    s2 = trial_stream(123, 4, horizon=50)
    assert np.array_equal(s1.uniforms(200), s2.uniforms(200))


def test_trial_streams_differ_across_replications_and_seeds():
    base = trial_stream(123, 0, horizon=50).uniforms(64)
    assert not np.array_equal(base, trial_stream(123, 1, horizon=50).uniforms(64))
    assert not np.array_equal(base, trial_stream(124, 0, horizon=50).uniforms(64))


def test_trial_streams_are_disjoint_windows():
    # Full-horizon consumption of consecutive replications tiles one
    # global counter sequence with no overlap.
    horizon = 13
    draws = DRAWS_PER_STEP * horizon
    tiled = np.concatenate(
        [trial_stream(9, r, horizon).uniforms(draws) for r in range(5)]
    )
    assert np.unique(tiled).size == tiled.size


def test_experiment_key_validation():
    with pytest.raises(ValidationError):
        experiment_key(-1)
    with pytest.raises(ValidationError):
        experiment_key(2**64)
    with pytest.raises(ValidationError):
        experiment_key("seed")
    assert experiment_key(7).shape == (2,)


def test_trial_stream_validation():
    with pytest.raises(ValidationError):
        trial_stream(1, -1, horizon=10)
    with pytest.raises(ValidationError):
        trial_stream(1, 0, horizon=0)
