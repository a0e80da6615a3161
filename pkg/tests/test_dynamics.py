import numpy as np
import pytest

from humanai_ese.core import ConfigError, PopulationConfig, StructuralParams, TreatmentPlan, draw_population
from humanai_ese.dynamics import (
    LazyGaussianOperator,
    build_interference,
    ground_truth_tte,
    population_tte,
    run_parallel_worlds,
    run_scenario,
    step,
)

P = StructuralParams()


def setup(n=300, seed=1, mode="conditional", params=P):
    pop = PopulationConfig(n_units=n, seed=seed)
    types = draw_population(pop)
    return pop, types, build_interference(params, types.u, n, mode, seed)


def test_dense_and_streamed_agree():
    _, types, dense = setup(mode="dense")
    _, _, streamed = setup(mode="streamed")
    np.testing.assert_array_equal(dense.matrix(), streamed.matrix())
    g = np.random.default_rng(0).standard_normal(300)
    np.testing.assert_allclose(dense.apply(g), streamed.apply(g), rtol=0, atol=1e-12)


def test_apply_matches_explicit_matrix():
    _, _, h = setup(mode="dense")
    g = np.random.default_rng(1).standard_normal((300, 2))
    np.testing.assert_allclose(h.apply(g), h.matrix() @ g, atol=1e-12)


def test_dense_refused_above_cap():
    with pytest.raises(ConfigError):
        build_interference(P, np.ones(50), 50, "dense", dense_max_n=10)
    with pytest.raises(ConfigError):
        build_interference(P, np.ones(50), 50, "bogus")


def test_conditional_has_same_second_moments():
    # E||G g||^2 = sigma^2 ||g||^2 for the Gaussian part, in every mode
    n = 400
    g = np.random.default_rng(2).standard_normal(n)
    norms = {m: [] for m in ("streamed", "conditional")}
    for seed in range(40):
        for m in norms:
            h = build_interference(P, np.ones(n), n, m, seed)
            norms[m].append(np.sum(h.deviation(g) ** 2))
    target = P.sigma_fixed ** 2 * np.sum(g ** 2)
    for m, vals in norms.items():
        assert np.mean(vals) == pytest.approx(target, rel=0.1), m


def test_lazy_operator_is_linear_and_consistent():
    op = LazyGaussianOperator(50, 1.0, np.random.default_rng(3))
    a, b = np.random.default_rng(4).standard_normal((2, 50))
    ga, gb = op.apply(a), op.apply(b)
    np.testing.assert_allclose(op.apply(2 * a - 3 * b), 2 * ga - 3 * gb, atol=1e-10)
    assert op.rank == 2
    np.testing.assert_allclose(op.apply(a), ga, atol=1e-12)


def test_step_shapes_and_determinism():
    pop, types, h = setup()
    y0 = np.ones(300)
    w = np.zeros(300)
    a = step(y0, w, types.u, h, P, 1, 5)
    b = step(y0, w, types.u, build_interference(P, types.u, 300, "conditional", 1), P, 1, 5)
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        step(np.ones(3), np.zeros(3), types.u, h, P)


def test_noiseless_step_by_hand():
    params = StructuralParams(sigma_fixed=0.0, sigma_time=0.0, noise_sd=0.0)
    u = np.array([1, 0, 1, 0])
    h = build_interference(params, u, 4, "dense")
    y_prev = np.array([1.0, 2.0, 0.0, -1.0])
    w = np.array([1.0, 0.0, 0.0, 1.0])
    g = params.alpha * w + params.beta * y_prev + params.gamma * w * y_prev
    expect = np.where(u == 1, params.delta_h, params.delta_a) + np.where(u == 1, params.tau_h, params.tau_a) * w + g.mean()
    np.testing.assert_allclose(step(y_prev, w, u, h, params), expect, atol=1e-14)


def test_parallel_worlds_share_warmup_and_noise():
    pop, types, h = setup()
    plan = TreatmentPlan.experiment(pop.t_warmup, pop.t_main)
    ws = run_parallel_worlds(pop, P, types, h, plan)
    tw = pop.t_warmup
    np.testing.assert_array_equal(ws.control.y[:, :tw + 1], ws.treatment.y[:, :tw + 1])
    np.testing.assert_array_equal(ws.control.y[:, :tw + 1], ws.experiment.y[:, :tw + 1])
    assert not ws.control.w.any() and ws.treatment.w[:, tw:].all()
    # identical inputs give bit-identical worlds
    again = run_parallel_worlds(pop, P, types, setup()[2], plan)
    np.testing.assert_array_equal(ws.experiment.y, again.experiment.y)


def test_parallel_control_matches_single_scenario():
    # pathwise equality needs the explicit operator; the conditional one only matches in law
    pop, types, h = setup(mode="dense")
    ctrl = run_scenario(pop, P, types, setup(mode="dense")[2], TreatmentPlan.control(pop.t_warmup, pop.t_main))
    ws = run_parallel_worlds(pop, P, types, h, TreatmentPlan.experiment(pop.t_warmup, pop.t_main))
    np.testing.assert_allclose(ws.control.y, ctrl.y, atol=1e-10)


def test_ground_truth_zero_before_treatment():
    pop, types, h = setup()
    ws = run_parallel_worlds(pop, P, types, h, TreatmentPlan.experiment(pop.t_warmup, pop.t_main))
    gt = ground_truth_tte(ws).values
    assert np.all(gt[:pop.t_warmup + 1] == 0)
    assert gt[-1] > 1.0
    assert ground_truth_tte(ws, humans=False).values[-1] < gt[-1]
    assert population_tte(ws).label == "ground_truth_pop"
