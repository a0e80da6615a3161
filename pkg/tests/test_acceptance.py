"""The nine acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are repeated in the pytest
terminal summary under "acceptance criteria".
"""

import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from conftest import record
from humanai_ese.baselines import dim, ht_q
from humanai_ese.core import (
    Panel,
    PopulationConfig,
    PriorDistribution,
    PriorQualityConfig,
    Stream,
    StructuralParams,
    TreatmentPlan,
    draw_population,
    gen_priors_classifier,
    substream,
)
from humanai_ese.dynamics import build_interference, ground_truth_tte, run_parallel_worlds
from humanai_ese.ese import analytic_tte_h, ese_trajectory, population_trajectory, reduce_params
from humanai_ese.estimator import (
    build_design,
    check_identifiability,
    estimate_tte_h,
    fit_theta,
    propagate_counterfactuals,
)
from humanai_ese.harness import ALG1, BenchmarkConfig, run_benchmark
from humanai_ese.subpop import PopulationSummary, SubpopSummary, construct_subpopulations, summarize

PARAMS = StructuralParams()  # delta_h=.5 delta_a=-.2 tau_h=1 tau_a=-.8 alpha=.3 beta=.5 gamma=.1 mu_h=mu_a=1
SEEDS = range(20)


def synthetic_worlds(n, seed, mode="classifier", p_u=None, params=PARAMS):
    pop = PopulationConfig(n_units=n, seed=seed, prior_mode=mode)
    types = draw_population(pop, PriorQualityConfig(), p_u)
    handle = build_interference(params, types.u, n, "conditional", seed)
    plan = TreatmentPlan.experiment(pop.t_warmup, pop.t_main, (0.2, 0.5, 0.8))
    return run_parallel_worlds(pop, params, types, handle, plan, seed), plan


@pytest.mark.slow
def test_criterion_1_ese_concentration():
    theta = reduce_params(PARAMS, 0.5)
    errs = {}
    for n in (10_000, 40_000):
        per_seed = []
        for s in SEEDS:
            ws, plan = synthetic_worlds(n, s)
            nu = population_trajectory(theta, 0.5, plan.pi_schedule, PARAMS.init_mean)
            per_seed.append(np.abs(ws.experiment.y.mean(axis=0) - nu))
        errs[n] = np.mean(per_seed, axis=0)  # per round, averaged over seeds
    worst = errs[10_000].max()
    ratio = errs[40_000].mean() / errs[10_000].mean()
    ok = worst <= 0.02 and ratio <= 0.6
    record(1, ok, f"max_t mean|err| at N=1e4 = {worst:.4f} (<= 0.02); error ratio 4e4/1e4 = {ratio:.3f} (<= 0.6)")
    assert ok


def _noiseless_design(theta, q_bar=0.5, T=16, tw=4, nu0=1.0):
    pi_pop = np.r_[np.zeros(tw), np.repeat([0.2, 0.5, 0.8], 4)]
    pop_path = population_trajectory(theta, q_bar, pi_pop, nu0)
    summaries = []
    for q in (0.15, 0.5, 0.85):
        for scale in (0.5, 1.0, 1.2):
            pi_s = np.clip(pi_pop * scale, 0, 1)
            y = ese_trajectory(theta, q, pi_s, pi_pop, nu0, T, q_bar).nu
            summaries.append(SubpopSummary(q, pi_s, y, 50, 0, 0))
    pop = PopulationSummary(q_bar, pi_pop, pop_path, 450)
    return summaries, pop


def test_criterion_2_exact_recovery():
    theta = reduce_params(PARAMS, 0.5)
    summaries, pop = _noiseless_design(theta)
    diag = check_identifiability(summaries, pop)
    fit = fit_theta(build_design(summaries, pop), strict=True)
    err_theta = np.max(np.abs(fit.theta_hat.as_array() - theta.as_array()))
    est = propagate_counterfactuals(fit.theta_hat, 1.0, 16, 0.5, treat_start=5).tte_h.values
    ref = analytic_tte_h(theta, 1.0, 16, 0.5, treat_start=5).values
    err_tte = np.max(np.abs(est - ref))
    ok = diag["passed"] and err_theta <= 1e-8 and err_tte <= 1e-8
    record(2, ok, f"|theta_hat - theta|_inf = {err_theta:.2e}; |tte - analytic|_inf = {err_tte:.2e} (<= 1e-8)")
    assert ok


@pytest.mark.slow
def test_criterion_3_consistency_in_n():
    uniform = PriorDistribution.uniform()
    truth = analytic_tte_h(reduce_params(PARAMS, 0.5), PARAMS.init_mean, 16, 0.5, treat_start=5).values[-1]
    med = {}
    for n in (2000, 32_000):
        errs = []
        for s in SEEDS:
            ws, _ = synthetic_worlds(n, s, "model_faithful", uniform)
            panel = ws.experiment
            batches = construct_subpopulations(panel.q, panel.w, substream(s, Stream.BATCHES), t_warmup=4)
            errs.append(abs(estimate_tte_h(panel, batches).effect.values[-1] - truth))
        med[n] = float(np.median(errs))
    ratio = med[32_000] / med[2000]
    rel = med[32_000] / abs(truth)
    ok = ratio <= 0.5 and rel <= 0.05
    record(3, ok, f"median |err| {med[2000]:.4f} -> {med[32_000]:.4f}, ratio {ratio:.3f} (<= 0.5); "
                  f"relative error {rel:.2%} of TTE_H(T)={truth:.4f} (<= 5%)")
    assert ok


@pytest.mark.slow
def test_criterion_4_ground_truth_vs_analytic():
    ref = analytic_tte_h(reduce_params(PARAMS, 0.5), PARAMS.init_mean, 16, 0.5, treat_start=5).values
    gts = np.array([ground_truth_tte(synthetic_worlds(40_000, s)[0]).values for s in SEEDS])
    mean = gts.mean(axis=0)
    se = gts.std(axis=0, ddof=1) / np.sqrt(len(gts))
    z = np.abs(mean - ref)
    ok = bool(np.all(z <= 3 * se + 1e-12))
    worst = np.max(np.where(se > 0, z / np.where(se > 0, se, 1), 0))
    record(4, ok, f"max_t |MC - analytic| / SE = {worst:.2f} (<= 3); final round {mean[-1]:.4f} vs {ref[-1]:.4f}")
    assert ok


def test_criterion_5_identifiability_diagnostics():
    # one composition stratum: every unit carries the same prior
    ws, _ = synthetic_worlds(2000, 0, "model_faithful", PriorDistribution.point(0.5))
    panel = ws.experiment
    batches = construct_subpopulations(panel.q, panel.w, substream(0, Stream.BATCHES), t_warmup=4)
    s1, p1 = summarize(panel, batches)
    bad_fit = fit_theta(build_design(s1, p1))
    bad_diag = check_identifiability(s1, p1)

    ws, _ = synthetic_worlds(1000, 0)
    panel = ws.experiment
    batches = construct_subpopulations(panel.q, panel.w, substream(0, Stream.BATCHES), t_warmup=4)
    s2, p2 = summarize(panel, batches)
    good_fit = fit_theta(build_design(s2, p2))
    good_diag = check_identifiability(s2, p2)

    ok = (bad_fit.design_rank <= 5 and bad_fit.identifiability_flags["rank_deficient"]
          and not bad_diag["cross_variation"]
          and good_diag["cross_variation"] and good_diag["temporal_ok"] and good_fit.design_rank == 7)
    record(5, ok, f"single stratum: rank {bad_fit.design_rank} (flagged); benchmark: rank {good_fit.design_rank}, "
                  f"cross-variation {good_diag['cross_variation']}, temporal rank {good_diag['temporal_rank']}")
    assert ok


def test_criterion_6_baseline_separation():
    res = run_benchmark(BenchmarkConfig(engine="agentsim", seeds=tuple(range(10)), prior_sweep=((0.8, 0.15),)))
    assert not res.failures
    truth = res.truth_means()
    est = {r["estimator"]: r["est_tte_mean"] for r in res.summary()}
    near_zero = {k: est[k] for k in ("DIM", "DIM-filtered", "HT-q", "CMP Basic")}
    ok = (truth["ground_truth_h"] > 0.3 and truth["ground_truth_a"] < 0
          and abs(truth["ground_truth_pop"]) < 0.15 and res.alg1_wins >= 8
          and all(abs(v) < 0.15 for v in near_zero.values()))
    detail = ", ".join(f"{k} {v:+.3f}" for k, v in near_zero.items())
    record(6, ok, f"GT human {truth['ground_truth_h']:+.3f}, AI {truth['ground_truth_a']:+.3f}, "
                  f"pop {truth['ground_truth_pop']:+.3f}; {ALG1} best on {res.alg1_wins}/10 seeds; {detail}")
    assert ok


def test_criterion_7_hand_oracles():
    y = np.array([[0, 3.0], [0, 1.0], [0, 2.0], [0, 0.0]])
    w = np.array([[1], [1], [0], [0]])
    d = dim(Panel(y, w, np.full(4, 0.5))).effect.values[1]
    h = ht_q(Panel(y, w, np.array([0.9, 0.1, 0.8, 0.2]))).effect.values[1]
    ok = d == 1.0 and abs(h - 1.2) <= 1e-12
    record(7, ok, f"dim = {float(d)!r} (1.0), ht_q = {float(h)!r} (1.2, tol 1e-12)")
    assert ok


def _run_cli(out: Path, threads: str, workers: str):
    env = {**os.environ, "OMP_NUM_THREADS": threads, "OPENBLAS_NUM_THREADS": threads, "MKL_NUM_THREADS": threads}
    cmd = [sys.executable, "-m", "humanai_ese.cli", "benchmark", "--engine", "agentsim", "--seed", "0-9",
           "--out", str(out), "--workers", workers]
    subprocess.run(cmd, check=True, env=env, capture_output=True)


def test_criterion_8_determinism(tmp_path):
    _run_cli(tmp_path / "a", "1", "1")
    _run_cli(tmp_path / "b", "4", "2")
    a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*.csv"))
    same = a == b and all((tmp_path / "a" / p).read_bytes() == (tmp_path / "b" / p).read_bytes() for p in a)
    record(8, same, f"{len(a)} CSV files byte-identical across thread counts 1/4 and workers 1/2")
    assert same and len(a) > 3


def test_criterion_9_prior_misclassification():
    n = 100_000
    u = np.r_[np.ones(n, dtype=np.int8), np.zeros(n, dtype=np.int8)]
    q = gen_priors_classifier(u, PriorQualityConfig(0.8, 0.15), substream(0, Stream.PRIORS))
    rate = float(np.mean((q > 0.5) != (u == 1)))
    ok = 0.01 <= rate <= 0.035
    record(9, ok, f"misclassification rate {rate:.4f} (in [0.01, 0.035])")
    assert ok
