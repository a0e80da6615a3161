import numpy as np
import pytest

from humanai_ese.core import (
    ConfigError,
    ExperimentConfig,
    Panel,
    PopulationConfig,
    PriorDistribution,
    PriorMode,
    PriorQualityConfig,
    Stream,
    StructuralParams,
    TreatmentPlan,
    assign_treatments,
    draw_population,
    draw_types_fixed,
    gen_priors_classifier,
    substream,
)


def test_substreams_are_reproducible_and_distinct():
    a = substream(3, Stream.NOISE, 2).random(5)
    assert np.array_equal(a, substream(3, Stream.NOISE, 2).random(5))
    assert not np.array_equal(a, substream(3, Stream.NOISE, 3).random(5))
    assert not np.array_equal(a, substream(4, Stream.NOISE, 2).random(5))


def test_experiment_plan_phases():
    plan = TreatmentPlan.experiment(4, 12)
    assert plan.horizon == 16
    assert np.all(plan.pi_schedule[:4] == 0)
    assert list(plan.pi_schedule[4:]) == [0.2] * 4 + [0.5] * 4 + [0.8] * 4
    assert TreatmentPlan.treatment(2, 3).pi_schedule.tolist() == [0, 0, 1, 1, 1]
    assert not TreatmentPlan.control(2, 3).pi_schedule.any()


def test_assignments_follow_schedule(rng):
    plan = TreatmentPlan.experiment(4, 12)
    w = assign_treatments(plan, 20_000, rng)
    assert w.shape == (20_000, 16)
    assert not w[:, :4].any()
    np.testing.assert_allclose(w.mean(axis=0)[4:], plan.pi_schedule[4:], atol=0.015)


def test_fixed_type_draw_exact_count(rng):
    u = draw_types_fixed(201, 0.5, rng)
    assert u.sum() == 100


def test_classifier_priors_clipped_and_centered(rng):
    u = np.r_[np.ones(5000, dtype=np.int8), np.zeros(5000, dtype=np.int8)]
    q = gen_priors_classifier(u, PriorQualityConfig(0.8, 0.15), rng)
    assert q.min() >= 0 and q.max() <= 1
    assert abs(q[:5000].mean() - 0.8) < 0.01
    assert abs(q[5000:].mean() - 0.2) < 0.01
    exact = gen_priors_classifier(u, PriorQualityConfig(0.9, 0.0), rng)
    assert set(np.unique(exact).round(12)) == {0.1, 0.9}


def test_model_faithful_types_follow_priors():
    pop = PopulationConfig(n_units=40_000, prior_mode=PriorMode.MODEL_FAITHFUL)
    types = draw_population(pop, p_u=PriorDistribution.two_point(0.1, 0.9))
    for v in (0.1, 0.9):
        assert abs(types.u[types.q == v].mean() - v) < 0.015


def test_prior_distribution_means():
    assert PriorDistribution.point(0.3).mean == 0.3
    assert PriorDistribution.uniform(0.2, 0.6).mean == pytest.approx(0.4)
    assert PriorDistribution.two_point(0.2, 0.8, 0.25).mean == pytest.approx(0.65)


@pytest.mark.parametrize("bad", [
    dict(n_units=1),
    dict(t_main=0),
    dict(human_fraction=1.5),
])
def test_population_config_validation(bad):
    with pytest.raises(ConfigError):
        PopulationConfig(**bad)


def test_structural_params_validation():
    with pytest.raises(ConfigError):
        StructuralParams(noise_sd=-1)


def test_panel_shape_checks():
    with pytest.raises(ConfigError):
        Panel(np.zeros((3, 4)), np.zeros((3, 4)), np.zeros(3))
    with pytest.raises(ConfigError):
        Panel(np.zeros((3, 4)), np.full((3, 3), 2), np.zeros(3))
    p = Panel(np.arange(12.0).reshape(3, 4), np.eye(3, dtype=int), np.array([0.1, 0.2, 0.3]))
    r = p.relabel(np.array([2, 0, 1]))
    assert r.q.tolist() == [0.3, 0.1, 0.2]
    assert r.y[0, 0] == 8.0


def test_experiment_config_round_trip():
    cfg = ExperimentConfig.from_dict({"population": {"n_units": 500}, "phases": [0.1, 0.9]})
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert again.experiment_plan().pi_schedule[-1] == 0.9
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"populaton": {}})
