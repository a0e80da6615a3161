"""Shared domain types, type/prior generation and Bernoulli treatment assignment."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

__all__ = [
    "ConfigError",
    "PriorMode",
    "PopulationConfig",
    "StructuralParams",
    "PriorQualityConfig",
    "PriorDistribution",
    "TypeAssignment",
    "TreatmentPlan",
    "Panel",
    "EffectSeries",
    "Stream",
    "substream",
    "draw_types_model",
    "draw_types_fixed",
    "gen_priors_classifier",
    "assign_treatments",
    "draw_population",
]


class ConfigError(ValueError):
    """Invalid configuration or domain-object construction."""


class PriorMode(str, enum.Enum):
    MODEL_FAITHFUL = "model_faithful"
    CLASSIFIER = "classifier"


class Stream(enum.IntEnum):
    """Named RNG substreams; every random draw in the package hangs off one of these."""

    TYPES = 1
    PRIORS = 2
    TREATMENT = 3
    INIT = 4
    FIXED_INTERFERENCE = 5
    NOISE = 6
    TIME_INTERFERENCE = 7
    BATCHES = 8
    PLATFORM = 9
    ROUND = 10


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``.

    Streams are derived with ``SeedSequence`` spawn keys, so the draws for one
    key never depend on how many draws were taken from another.
    """
    if seed < 0 or seed >= 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class PopulationConfig:
    n_units: int = 1000
    t_warmup: int = 4
    t_main: int = 12
    seed: int = 0
    human_fraction: float = 0.5
    prior_mode: PriorMode = PriorMode.CLASSIFIER

    def __post_init__(self):
        object.__setattr__(self, "prior_mode", PriorMode(self.prior_mode))
        if self.n_units < 2:
            raise ConfigError("n_units must be >= 2")
        if self.t_warmup < 0:
            raise ConfigError("t_warmup must be >= 0")
        if self.t_main < 3:
            raise ConfigError("t_main must be >= 3")
        if not 0.0 <= self.human_fraction <= 1.0:
            raise ConfigError("human_fraction must lie in [0, 1]")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def horizon(self) -> int:
        """T: number of observed rounds after round 0."""
        return self.t_warmup + self.t_main


@dataclass(frozen=True)
class StructuralParams:
    """Coefficients of the outcome model and the laws of its random parts.

    ``mu_h``/``mu_a`` carry the whole mean interference strength received by
    human/AI units; the per-round component is zero-mean.  ``sigma_time`` is
    either a scalar or a per-round sequence of length T.
    """

    delta_h: float = 0.5
    delta_a: float = -0.2
    tau_h: float = 1.0
    tau_a: float = -0.8
    alpha: float = 0.3
    beta: float = 0.5
    gamma: float = 0.1
    mu_h: float = 1.0
    mu_a: float = 1.0
    sigma_fixed: float = 0.5
    sigma_time: float | tuple[float, ...] = 0.25
    noise_sd: float = 0.5
    init_mean: float = 1.0
    init_sd: float = 0.5
    stability_cap: float = 0.99

    def __post_init__(self):
        if isinstance(self.sigma_time, (list, np.ndarray)):
            object.__setattr__(self, "sigma_time", tuple(float(s) for s in self.sigma_time))
        for name in ("sigma_fixed", "noise_sd", "init_sd"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        st = np.atleast_1d(np.asarray(self.sigma_time, dtype=float))
        if np.any(st < 0):
            raise ConfigError("sigma_time must be >= 0")
        vals = [getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "sigma_time"]
        if not np.all(np.isfinite(np.asarray(vals, dtype=float))) or not np.all(np.isfinite(st)):
            raise ConfigError("structural parameters must be finite")
        if abs(self.beta) > self.stability_cap or abs(self.beta + self.gamma) > self.stability_cap:
            raise ConfigError(
                f"|beta| and |beta + gamma| must not exceed the stability cap {self.stability_cap}"
            )

    def sigma_time_at(self, t: int) -> float:
        if isinstance(self.sigma_time, tuple):
            return self.sigma_time[t - 1]
        return float(self.sigma_time)

    def replace(self, **changes) -> "StructuralParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class PriorQualityConfig:
    accuracy: float = 0.8
    noise_sd: float = 0.15

    def __post_init__(self):
        if not 0.5 <= self.accuracy <= 1.0:
            raise ConfigError("accuracy must lie in [0.5, 1]")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be >= 0")


@dataclass(frozen=True)
class PriorDistribution:
    """Law of the human priors q_i in the model-faithful mode.

    kind: ``point`` (value), ``uniform`` (low, high) or ``two_point``
    (values=(a, b), weight = P(q = a)).
    """

    kind: str = "uniform"
    value: float = 0.5
    low: float = 0.0
    high: float = 1.0
    values: tuple[float, float] = (0.2, 0.8)
    weight: float = 0.5

    def __post_init__(self):
        if self.kind == "point":
            support = [self.value]
        elif self.kind == "uniform":
            if self.low > self.high:
                raise ConfigError("uniform prior needs low <= high")
            support = [self.low, self.high]
        elif self.kind == "two_point":
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
            if len(self.values) != 2 or not 0.0 <= self.weight <= 1.0:
                raise ConfigError("two_point prior needs two values and a weight in [0, 1]")
            support = list(self.values)
        else:
            raise ConfigError(f"unknown prior distribution kind {self.kind!r}")
        if min(support) < 0.0 or max(support) > 1.0:
            raise ConfigError("prior distribution must be supported on [0, 1]")

    @classmethod
    def point(cls, value: float) -> "PriorDistribution":
        return cls(kind="point", value=value)

    @classmethod
    def uniform(cls, low: float = 0.0, high: float = 1.0) -> "PriorDistribution":
        return cls(kind="uniform", low=low, high=high)

    @classmethod
    def two_point(cls, a: float, b: float, weight: float = 0.5) -> "PriorDistribution":
        return cls(kind="two_point", values=(a, b), weight=weight)

    @property
    def mean(self) -> float:
        if self.kind == "point":
            return self.value
        if self.kind == "uniform":
            return 0.5 * (self.low + self.high)
        return self.weight * self.values[0] + (1 - self.weight) * self.values[1]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "point":
            return np.full(n, float(self.value))
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size=n)
        pick_a = rng.random(n) < self.weight
        return np.where(pick_a, self.values[0], self.values[1]).astype(float)


@dataclass(frozen=True)
class TypeAssignment:
    """Latent types ``u`` (1 = human) and observed priors ``q``.

    ``u`` is ground truth: only simulation and evaluation code may read it.
    """

    u: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.int8)
        q = np.asarray(self.q, dtype=float)
        if u.ndim != 1 or u.shape != q.shape:
            raise ConfigError("u and q must be vectors of equal length")
        if not np.all((u == 0) | (u == 1)):
            raise ConfigError("u must be binary")
        if np.any(q < 0) or np.any(q > 1) or not np.all(np.isfinite(q)):
            raise ConfigError("priors must lie in [0, 1]")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return len(self.u)

    @property
    def human_fraction(self) -> float:
        return float(self.u.mean())


@dataclass(frozen=True)
class TreatmentPlan:
    """Per-round treatment probabilities for rounds 1..T."""

    pi_schedule: np.ndarray
    scenario: str = "custom"
    t_warmup: int = 0

    def __post_init__(self):
        pi = np.asarray(self.pi_schedule, dtype=float)
        if pi.ndim != 1 or np.any(pi < 0) or np.any(pi > 1):
            raise ConfigError("pi_schedule must be a vector of probabilities")
        if self.scenario not in ("control", "treatment", "experiment", "custom"):
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.t_warmup > len(pi) or np.any(pi[: self.t_warmup] != 0):
            raise ConfigError("warmup rounds must carry zero treatment probability")
        main = pi[self.t_warmup:]
        if self.scenario == "control" and np.any(main != 0):
            raise ConfigError("control plan must be all zeros")
        if self.scenario == "treatment" and np.any(main != 1):
            raise ConfigError("treatment plan must be all ones over main rounds")
        object.__setattr__(self, "pi_schedule", pi)

    @property
    def horizon(self) -> int:
        return len(self.pi_schedule)

    @classmethod
    def control(cls, t_warmup: int, t_main: int) -> "TreatmentPlan":
        return cls(np.zeros(t_warmup + t_main), "control", t_warmup)

    @classmethod
    def treatment(cls, t_warmup: int, t_main: int) -> "TreatmentPlan":
        pi = np.concatenate([np.zeros(t_warmup), np.ones(t_main)])
        return cls(pi, "treatment", t_warmup)

    @classmethod
    def experiment(
        cls, t_warmup: int, t_main: int, phases: Sequence[float] = (0.2, 0.5, 0.8)
    ) -> "TreatmentPlan":
        """Escalating phases splitting the main rounds as evenly as possible."""
        blocks = np.array_split(np.arange(t_main), len(phases))
        main = np.empty(t_main)
        for p, idx in zip(phases, blocks):
            main[idx] = p
        return cls(np.concatenate([np.zeros(t_warmup), main]), "experiment", t_warmup)


@dataclass(frozen=True)
class Panel:
    """Observed experiment record.

    y has shape (N, T+1) with column 0 the pre-treatment outcome; w has shape
    (N, T) where column t-1 holds round t.
    """

    y: np.ndarray
    w: np.ndarray
    q: np.ndarray
    scenario: str = "experiment"
    seed: int = 0
    t_warmup: int = 0

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        w = np.asarray(self.w, dtype=np.int8)
        q = np.asarray(self.q, dtype=float)
        if y.ndim != 2 or w.ndim != 2 or q.ndim != 1:
            raise ConfigError("panel arrays have the wrong rank")
        n, tp1 = y.shape
        if w.shape != (n, tp1 - 1) or q.shape != (n,):
            raise ConfigError(f"inconsistent panel shapes y{y.shape} w{w.shape} q{q.shape}")
        if not np.all((w == 0) | (w == 1)):
            raise ConfigError("treatments must be binary")
        if not 0 <= self.t_warmup <= tp1 - 1:
            raise ConfigError("t_warmup outside the horizon")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "q", q)

    @property
    def n_units(self) -> int:
        return self.y.shape[0]

    @property
    def horizon(self) -> int:
        return self.w.shape[1]

    def relabel(self, perm: np.ndarray) -> "Panel":
        """Panel with unit ``perm[k]`` moved to position ``k``."""
        return dataclasses.replace(self, y=self.y[perm], w=self.w[perm], q=self.q[perm])


@dataclass(frozen=True)
class EffectSeries:
    """Per-round effect values for rounds 0..T; round 0 is 0 by definition.

    NaN marks rounds where an estimator is undefined.
    """

    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or len(v) < 1:
            raise ConfigError("effect series must be a non-empty vector")
        if v[0] != 0:
            raise ConfigError("effect at round 0 must be 0")
        object.__setattr__(self, "values", v)

    @property
    def horizon(self) -> int:
        return len(self.values) - 1

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, t):
        return self.values[t]


def draw_types_model(n: int, p_u: PriorDistribution, rng: np.random.Generator) -> TypeAssignment:
    """q_i ~ p_u i.i.d., then u_i ~ Bernoulli(q_i)."""
    if not isinstance(p_u, PriorDistribution):
        p_u = PriorDistribution(**dict(p_u))
    q = p_u.sample(n, rng)
    u = (rng.random(n) < q).astype(np.int8)
    return TypeAssignment(u=u, q=q)


def draw_types_fixed(n: int, human_fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Exactly round(n * human_fraction) humans at random positions."""
    n_h = int(round(n * human_fraction))
    u = np.zeros(n, dtype=np.int8)
    u[rng.permutation(n)[:n_h]] = 1
    return u


def gen_priors_classifier(
    u: np.ndarray, cfg: PriorQualityConfig, rng: np.random.Generator
) -> np.ndarray:
    """Noisy classifier priors q_i = clip(u_i a + (1 - u_i)(1 - a) + eps_i, 0, 1)."""
    u = np.asarray(u)
    if not np.all((u == 0) | (u == 1)):
        raise ConfigError("u must be binary")
    a = cfg.accuracy
    eps = rng.normal(0.0, cfg.noise_sd, size=u.shape) if cfg.noise_sd > 0 else np.zeros(u.shape)
    return np.clip(u * a + (1 - u) * (1 - a) + eps, 0.0, 1.0)


def assign_treatments(plan: TreatmentPlan, n: int, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli(pi_t) assignments, independent across units and rounds; shape (n, T)."""
    pi = plan.pi_schedule
    w = (rng.random((n, len(pi))) < pi[None, :]).astype(np.int8)
    return w


def draw_population(
    config: PopulationConfig,
    prior_quality: PriorQualityConfig | None = None,
    p_u: PriorDistribution | None = None,
) -> TypeAssignment:
    """Types and priors for one experiment instance, in the configured prior mode."""
    if config.prior_mode is PriorMode.MODEL_FAITHFUL:
        return draw_types_model(
            config.n_units, p_u or PriorDistribution.uniform(), substream(config.seed, Stream.TYPES)
        )
    u = draw_types_fixed(config.n_units, config.human_fraction, substream(config.seed, Stream.TYPES))
    q = gen_priors_classifier(
        u, prior_quality or PriorQualityConfig(), substream(config.seed, Stream.PRIORS)
    )
    return TypeAssignment(u=u, q=q)


def _coerce(cls, data: Mapping[str, Any] | None):
    if data is None:
        return cls()
    if isinstance(data, cls):
        return data
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation instance: the JSON config file maps onto this one-to-one."""

    population: PopulationConfig = field(default_factory=PopulationConfig)
    structural: StructuralParams = field(default_factory=StructuralParams)
    prior_quality: PriorQualityConfig = field(default_factory=PriorQualityConfig)
    prior_distribution: PriorDistribution = field(default_factory=PriorDistribution)
    phases: tuple[float, ...] = (0.2, 0.5, 0.8)
    interference_mode: str = "conditional"

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        known = {"population", "structural", "prior_quality", "prior_distribution", "phases",
                 "interference_mode"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        try:
            return cls(
                population=_coerce(PopulationConfig, data.get("population")),
                structural=_coerce(StructuralParams, data.get("structural")),
                prior_quality=_coerce(PriorQualityConfig, data.get("prior_quality")),
                prior_distribution=_coerce(PriorDistribution, data.get("prior_distribution")),
                phases=tuple(data.get("phases", (0.2, 0.5, 0.8))),
                interference_mode=data.get("interference_mode", "conditional"),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["population"]["prior_mode"] = self.population.prior_mode.value
        out["phases"] = list(self.phases)
        return out

    def experiment_plan(self) -> TreatmentPlan:
        p = self.population
        return TreatmentPlan.experiment(p.t_warmup, p.t_main, self.phases)


__all__ += ["ExperimentConfig"]
