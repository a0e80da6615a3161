"""Benchmark orchestration: worlds, ground truth, estimators, metrics, reports."""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import io
from .agentsim import AgentSimConfig, BehaviorKernel, run_platform
from .baselines import cmp_basic, cmp_full, dim, dim_filtered, ht_q
from .core import ConfigError, ExperimentConfig, PriorQualityConfig, Stream, draw_population, substream
from .dynamics import WorldSet, build_interference, ground_truth_tte, population_tte, run_parallel_worlds
from .estimator import IdentifiabilityError, check_identifiability, estimate_tte_h
from .subpop import construct_subpopulations, summarize, write_batch_manifest

log = logging.getLogger(__name__)

ENGINES = ("synthetic", "agentsim")
ALG1 = "Alg1"
ESTIMATORS = (ALG1, "CMP", "CMP Basic", "DIM", "DIM-filtered", "HT-q")
TRUTH = ("ground_truth_h", "ground_truth_a", "ground_truth_pop")
DEFAULT_SWEEP = ((0.7, 0.15), (0.8, 0.15), (0.9, 0.15))


@dataclass(frozen=True)
class SubpopParams:
    n_strata: int = 3
    n_anchors: int = 3
    block_size: int | None = None
    random_size: int | None = None
    min_size: int = 20
    min_traj_dist: float = 0.02


@dataclass(frozen=True)
class EstimatorFlags:
    post_warmup_only: bool = False
    strict: bool = False
    human_memory: bool = False
    dim_threshold: float = 0.5
    dim_median: bool = False


@dataclass(frozen=True)
class BenchmarkConfig:
    engine: str = "agentsim"
    seeds: tuple[int, ...] = tuple(range(10))
    prior_sweep: tuple[tuple[float, float], ...] = ((0.8, 0.15),)
    subpop: SubpopParams = SubpopParams()
    estimator: EstimatorFlags = EstimatorFlags()
    out_dir: str | None = None
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    agentsim: AgentSimConfig = AgentSimConfig()
    kernel: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}")
        if len(self.seeds) < 1:
            raise ConfigError("need at least one seed")
        if not self.prior_sweep:
            raise ConfigError("prior sweep is empty")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "prior_sweep", tuple((float(a), float(s)) for a, s in self.prior_sweep))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BenchmarkConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown benchmark keys: {sorted(unknown)}")
        kw = dict(data)
        try:
            if "subpop" in kw:
                kw["subpop"] = SubpopParams(**kw["subpop"])
            if "estimator" in kw:
                kw["estimator"] = EstimatorFlags(**kw["estimator"])
            if "experiment" in kw:
                kw["experiment"] = ExperimentConfig.from_dict(kw["experiment"])
            if "agentsim" in kw:
                a = dict(kw["agentsim"])
                if "prior_quality" in a:
                    a["prior_quality"] = PriorQualityConfig(**a["prior_quality"])
                if "phases" in a:
                    a["phases"] = tuple(a["phases"])
                kw["agentsim"] = AgentSimConfig(**a)
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["experiment"] = self.experiment.to_dict()
        out["seeds"] = list(self.seeds)
        out["prior_sweep"] = [list(p) for p in self.prior_sweep]
        return out

    def replace(self, **kw) -> "BenchmarkConfig":
        return dataclasses.replace(self, **kw)

    def horizon_and_warmup(self) -> tuple[int, int]:
        if self.engine == "agentsim":
            return self.agentsim.horizon, self.agentsim.t_warmup
        p = self.experiment.population
        return p.horizon, p.t_warmup


@dataclass(frozen=True)
class MetricsRow:
    estimator: str
    mae: float
    final_err: float
    est_tte: float


def _seq_mean(xs) -> float:
    # plain left-to-right sum so a naive recomputation from the CSVs matches bit for bit
    xs = [float(x) for x in xs]
    total = 0.0
    for x in xs:
        total += x
    return total / len(xs)


def metrics_row(name: str, est: np.ndarray, truth: np.ndarray, t_warmup: int) -> MetricsRow:
    """MAE, final-round signed error and mean estimate over rounds t_warmup+1..T."""
    T = len(truth) - 1
    rounds = range(t_warmup + 1, T + 1)
    return MetricsRow(
        name,
        _seq_mean(abs(float(est[t]) - float(truth[t])) for t in rounds),
        float(est[T]) - float(truth[T]),
        _seq_mean(float(est[t]) for t in rounds),
    )


@dataclass
class SeedResult:
    seed: int
    prior: tuple[float, float]
    truth: dict[str, np.ndarray]
    effects: dict[str, np.ndarray]
    metrics: list[MetricsRow]
    notes: dict = field(default_factory=dict)
    worlds: WorldSet | None = None
    batches: list | None = None
    fit: dict | None = None

    def mae(self, name: str) -> float:
        return next(m.mae for m in self.metrics if m.estimator == name)

    @property
    def alg1_wins(self) -> bool:
        a = self.mae(ALG1)
        return all(a < m.mae for m in self.metrics if m.estimator != ALG1)


@dataclass
class BenchmarkResult:
    config: BenchmarkConfig
    prior: tuple[float, float]
    seeds: list[SeedResult]
    failures: list[dict]

    def summary(self) -> list[dict]:
        """Mean and standard error across seeds per estimator."""
        out = []
        for name in ESTIMATORS:
            row = {"estimator": name, "accuracy": self.prior[0], "noise_sd": self.prior[1],
                   "n_seeds": len(self.seeds)}
            for key in ("mae", "final_err", "est_tte"):
                vals = [getattr(m, key) for s in self.seeds for m in s.metrics if m.estimator == name]
                row[f"{key}_mean"], row[f"{key}_se"] = mean_se(vals)
            out.append(row)
        return out

    @property
    def alg1_wins(self) -> int:
        return sum(s.alg1_wins for s in self.seeds)

    def truth_means(self) -> dict[str, float]:
        _, tw = self.config.horizon_and_warmup()
        return {k: float(np.mean([s.truth[k][tw + 1:].mean() for s in self.seeds])) for k in TRUTH}


def mean_se(vals: Sequence[float]) -> tuple[float, float]:
    vals = np.asarray(vals, dtype=float)
    if len(vals) == 0:
        return math.nan, math.nan
    m = _seq_mean(vals)
    se = float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else math.nan
    return m, se


def make_worlds(cfg: BenchmarkConfig, seed: int, prior: tuple[float, float]) -> WorldSet:
    pq = PriorQualityConfig(*prior)
    if cfg.engine == "agentsim":
        kernel = BehaviorKernel.load(cfg.kernel) if cfg.kernel else BehaviorKernel.default()
        return run_platform(dataclasses.replace(cfg.agentsim, prior_quality=pq), seed, kernel)
    ex = cfg.experiment
    pop = dataclasses.replace(ex.population, seed=seed)
    types = draw_population(pop, pq, ex.prior_distribution)
    handle = build_interference(ex.structural, types.u, pop.n_units, ex.interference_mode, seed)
    return run_parallel_worlds(pop, ex.structural, types, handle, ex.experiment_plan(), seed)


def run_estimators(cfg: BenchmarkConfig, panel, batches) -> tuple[dict[str, np.ndarray], dict, dict]:
    """All six estimators; one that fails yields a NaN series and a note."""
    flags = cfg.estimator
    T = panel.horizon
    effects, notes, fit = {}, {}, None
    calls = {
        ALG1: lambda: estimate_tte_h(panel, batches, post_warmup_only=flags.post_warmup_only,
                                     strict=flags.strict, human_memory=flags.human_memory),
        "CMP": lambda: cmp_full(panel, batches),
        "CMP Basic": lambda: cmp_basic(panel),
        "DIM": lambda: dim(panel),
        "DIM-filtered": lambda: dim_filtered(panel, flags.dim_threshold, flags.dim_median),
        "HT-q": lambda: ht_q(panel),
    }
    for name, call in calls.items():
        try:
            res = call()
        except IdentifiabilityError:
            if flags.strict:
                raise
            effects[name] = np.full(T + 1, np.nan)
            notes[name] = "identifiability failure"
            continue
        except (ArithmeticError, ValueError) as exc:
            effects[name] = np.full(T + 1, np.nan)
            notes[name] = f"{type(exc).__name__}: {exc}"
            continue
        effects[name] = np.asarray(res.effect.values, dtype=float)
        if name == ALG1:
            fit = res.fit.to_dict()
    return effects, notes, fit


def run_seed(cfg: BenchmarkConfig, seed: int, prior: tuple[float, float], keep: bool = False) -> SeedResult:
    worlds = make_worlds(cfg, seed, prior)
    panel = worlds.experiment
    sp = cfg.subpop
    batches = construct_subpopulations(
        panel.q, panel.w, substream(seed, Stream.BATCHES), sp.n_strata, sp.n_anchors,
        sp.block_size, sp.random_size, sp.min_size, sp.min_traj_dist, panel.t_warmup,
    )
    truth = {
        "ground_truth_h": ground_truth_tte(worlds).values,
        "ground_truth_a": ground_truth_tte(worlds, humans=False).values,
        "ground_truth_pop": population_tte(worlds).values,
    }
    effects, notes, fit = run_estimators(cfg, panel, batches)
    metrics = [metrics_row(n, effects[n], truth["ground_truth_h"], panel.t_warmup) for n in ESTIMATORS]
    return SeedResult(seed, prior, truth, effects, metrics, notes,
                      worlds if keep else None, batches if keep else None, fit)


def _run_seed_safe(args):
    cfg, seed, prior, keep = args
    try:
        return run_seed(cfg, seed, prior, keep)
    except IdentifiabilityError:
        raise
    except Exception as exc:  # isolate one bad seed from the rest
        return {"seed": seed, "prior": list(prior), "error": f"{type(exc).__name__}: {exc}"}


def run_benchmark(cfg: BenchmarkConfig, prior: tuple[float, float] | None = None,
                  keep: bool | None = None) -> BenchmarkResult:
    """Every seed at one prior-quality setting; writes reports when out_dir is set."""
    prior = tuple(prior or cfg.prior_sweep[0])
    keep = cfg.out_dir is not None if keep is None else keep
    jobs = [(cfg, s, prior, keep) for s in sorted(cfg.seeds)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            outs = list(pool.map(_run_seed_safe, jobs))
    else:
        outs = [_run_seed_safe(j) for j in jobs]
    seeds = [o for o in outs if isinstance(o, SeedResult)]
    failures = [o for o in outs if isinstance(o, dict)]
    for f in failures:
        log.warning("seed %s failed: %s", f["seed"], f["error"])
    result = BenchmarkResult(cfg, prior, seeds, failures)
    if cfg.out_dir is not None:
        report(result, cfg.out_dir)
    return result


def sweep_priors(cfg: BenchmarkConfig) -> tuple[list[BenchmarkResult], list[dict]]:
    """run_benchmark per (accuracy, noise_sd); returns results and the stacked comparison table."""
    results, table = [], []
    for prior in cfg.prior_sweep:
        sub = cfg if cfg.out_dir is None else cfg.replace(
            out_dir=str(Path(cfg.out_dir) / f"a{prior[0]:g}_s{prior[1]:g}"))
        res = run_benchmark(sub, prior)
        results.append(res)
        table += res.summary()
    if cfg.out_dir is not None:
        io.write_rows(Path(cfg.out_dir) / "sweep_summary.csv", SUMMARY_COLUMNS,
                      ([r[c] for c in SUMMARY_COLUMNS] for r in table))
    return results, table


SUMMARY_COLUMNS = ("estimator", "accuracy", "noise_sd", "n_seeds", "mae_mean", "mae_se",
                   "final_err_mean", "final_err_se", "est_tte_mean", "est_tte_se")


def trajectory_rows(result: BenchmarkResult):
    for s in result.seeds:
        series = {**s.truth, **s.effects}
        for name in (*TRUTH, *ESTIMATORS):
            for t, v in enumerate(series[name]):
                yield [s.seed, name, t, v]


def mean_trajectories(result: BenchmarkResult) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    out = {}
    for name in (*TRUTH, *ESTIMATORS):
        stack = np.array([{**s.truth, **s.effects}[name] for s in result.seeds])
        se = stack.std(axis=0, ddof=1) / np.sqrt(len(stack)) if len(stack) > 1 else np.full(stack.shape[1], np.nan)
        out[name] = (stack.mean(axis=0), se)
    return out


def _persist_seed(s: SeedResult, cfg: BenchmarkConfig, root: Path) -> None:
    d = root / "runs" / f"{cfg.engine}_seed{s.seed}"
    d.mkdir(parents=True, exist_ok=True)
    if s.worlds is not None:
        io.write_panels(s.worlds.panels(), d / "panels.csv")
        io.write_rows(d / "types.csv", ["unit_id", "u", "q"],
                      ([i, int(u), q] for i, (u, q) in enumerate(zip(s.worlds.types.u, s.worlds.types.q))))
    if s.batches is not None:
        write_batch_manifest(s.batches, s.worlds.experiment, d / "batches.json")
        summaries, pop = summarize(s.worlds.experiment, s.batches)
        diag = check_identifiability(summaries, pop)
        io.write_json({k: diag[k] for k in ("cross_variation", "temporal_rank", "temporal_ok", "passed")},
                      d / "diagnostics.json")
    if s.fit is not None:
        io.write_json(s.fit, d / "fit.json")
    io.write_effects({**s.truth, **s.effects}, d / "effects.csv")
    manifest = {"engine": cfg.engine, "seed": s.seed, "prior": list(s.prior),
                "config_hash": io.content_hash(cfg.to_dict()), "notes": s.notes,
                "files": sorted(p.name for p in d.iterdir() if p.name != "manifest.json")}
    io.write_json(manifest, d / "manifest.json")


def report(result: BenchmarkResult, out_dir: str | Path) -> Path:
    """metrics.csv, summary.csv, trajectories.csv, effects_mean.csv, effects.svg, per-seed runs/."""
    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {root}: {exc}") from exc
    cfg = result.config
    io.write_json(cfg.to_dict(), root / "config.json")
    io.write_rows(root / "metrics.csv", ["seed", "estimator", "mae", "final_err", "est_tte"],
                  ([s.seed, m.estimator, m.mae, m.final_err, m.est_tte] for s in result.seeds for m in s.metrics))
    io.write_rows(root / "summary.csv", SUMMARY_COLUMNS,
                  ([r[c] for c in SUMMARY_COLUMNS] for r in result.summary()))
    io.write_rows(root / "trajectories.csv", ["seed", "series", "t", "value"], trajectory_rows(result))
    io.write_json({"failures": result.failures, "alg1_wins": result.alg1_wins,
                   "n_seeds": len(result.seeds), "truth_post_warmup_mean": result.truth_means()},
                  root / "run_summary.json")
    if result.seeds:
        means = mean_trajectories(result)
        io.write_rows(root / "effects_mean.csv", ["series", "t", "mean", "se"],
                      ([n, t, m[t], e[t]] for n, (m, e) in means.items() for t in range(len(m))))
        plot_effects(means, root / "effects.svg", cfg.horizon_and_warmup()[1])
    for s in result.seeds:
        _persist_seed(s, cfg, root)
    return root


def plot_effects(means: dict, path: str | Path, t_warmup: int) -> None:
    """Mean effect lines with +-1 SE bands; the SVG is byte-stable across runs."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "humanai-ese", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 4))
        for name in ("ground_truth_h", *ESTIMATORS):
            m, se = means[name]
            t = np.arange(len(m))
            style = {"color": "black", "lw": 2.2} if name == "ground_truth_h" else {"lw": 1.3}
            line, = ax.plot(t, m, label="ground truth (humans)" if name == "ground_truth_h" else name, **style)
            if np.all(np.isfinite(se)):
                ax.fill_between(t, m - se, m + se, color=line.get_color(), alpha=0.18, lw=0)
        gt = means["ground_truth_h"][0]
        span = max(1.0, float(np.ptp(gt)))
        ax.set_ylim(min(-0.5, gt.min() - span), gt.max() + span)  # keep diverging estimators from hiding the rest
        ax.axvline(t_warmup + 0.5, color="grey", ls=":", lw=1)
        ax.axhline(0, color="grey", lw=0.6)
        ax.set_xlabel("round")
        ax.set_ylabel("estimated TTE (humans)")
        ax.legend(fontsize=7, ncol=2)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
