"""Outcome dynamics under type-dependent Gaussian interference.

Y_{i,t} = delta(u_i) + tau(u_i) W_{i,t} + sum_j (A_ij + A^t_ij) g_j + e_{i,t},
g_j = alpha W_{j,t} + beta Y_{j,t-1} + gamma W_{j,t} Y_{j,t-1}.

The fixed matrix A is the receiver-type mean divided by N plus a zero-mean
Gaussian part G with variance sigma^2/N.  G can be held in three ways:

* ``dense``: the full N x N matrix in memory;
* ``streamed``: rows regenerated on demand from per-row counter-based streams
  (bit-identical to ``dense``);
* ``conditional``: never materialised.  G is only ever applied to vectors, so
  each new product is drawn from its exact conditional law given the products
  already revealed (the component along previous directions is fixed, the
  orthogonal component is fresh Gaussian).  O(N k) per product after k
  directions, which is what makes N = 4e4 practical.

The per-round matrix A^t is fresh each round and is realised with the same
conditional construction, shared by every world simulated in lockstep.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .core import (
    ConfigError,
    EffectSeries,
    Panel,
    PopulationConfig,
    StructuralParams,
    Stream,
    TreatmentPlan,
    TypeAssignment,
    assign_treatments,
    substream,
)

DENSE_MAX_N = 20_000
_ROW_BLOCK = 256
MODES = ("dense", "streamed", "conditional")


class LazyGaussianOperator:
    """Linear map with i.i.d. N(0, scale^2) entries, revealed one direction at a time."""

    def __init__(self, n: int, scale: float, rng: np.random.Generator, tol: float = 1e-10):
        self.n = n
        self.scale = float(scale)
        self.rng = rng
        self.tol = tol
        self._basis: list[np.ndarray] = []
        self._images: list[np.ndarray] = []

    @property
    def rank(self) -> int:
        return len(self._basis)

    def _apply_one(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n)
        if self.scale == 0.0:
            return out
        norm_v = np.linalg.norm(v)
        if norm_v == 0.0:
            return out
        r = v.astype(float, copy=True)
        coef = np.zeros(len(self._basis))
        if self._basis:
            Q = np.column_stack(self._basis)
            # two passes of Gram-Schmidt keep the residual orthogonal to Q
            for _ in range(2):
                c = Q.T @ r
                r -= Q @ c
                coef += c
            out += np.column_stack(self._images) @ coef
        nr = np.linalg.norm(r)
        if nr > self.tol * norm_v:
            z = self.scale * self.rng.standard_normal(self.n)
            self._basis.append(r / nr)
            self._images.append(z)
            out += nr * z
        return out

    def apply(self, vecs: np.ndarray) -> np.ndarray:
        """Products with each column of ``vecs`` (shape (n,) or (n, m)), in column order."""
        vecs = np.asarray(vecs, dtype=float)
        if vecs.ndim == 1:
            return self._apply_one(vecs)
        return np.column_stack([self._apply_one(vecs[:, k]) for k in range(vecs.shape[1])])


@dataclass
class InterferenceHandle:
    """The fixed interference component of one experiment instance."""

    mode: str
    mu_h: float
    mu_a: float
    sigma_fixed: float
    receiver_mean: np.ndarray
    seed: int
    dense: np.ndarray | None = None
    lazy: LazyGaussianOperator | None = None

    @property
    def n(self) -> int:
        return len(self.receiver_mean)

    def _rows(self, start: int, stop: int) -> np.ndarray:
        if self.dense is not None:
            return self.dense[start:stop]
        return _gen_rows(self.seed, self.n, self.sigma_fixed, start, stop)

    def deviation(self, g: np.ndarray) -> np.ndarray:
        """sum_j G_ij g_j for each column of g."""
        if self.mode == "conditional":
            return self.lazy.apply(g)
        g = np.asarray(g, dtype=float)
        out = np.empty((self.n,) + g.shape[1:])
        for start in range(0, self.n, _ROW_BLOCK):
            stop = min(start + _ROW_BLOCK, self.n)
            out[start:stop] = self._rows(start, stop) @ g
        return out

    def apply(self, g: np.ndarray) -> np.ndarray:
        """sum_j A_ij g_j: receiver-type mean times mean(g), plus the Gaussian part."""
        g = np.asarray(g, dtype=float)
        gbar = g.mean(axis=0)
        mean_part = np.multiply.outer(self.receiver_mean, gbar)
        return mean_part + self.deviation(g)

    def matrix(self) -> np.ndarray:
        """Explicit A (dense/streamed only)."""
        if self.mode == "conditional":
            raise ConfigError("the conditional mode never materialises A")
        G = self.dense if self.dense is not None else _gen_rows(
            self.seed, self.n, self.sigma_fixed, 0, self.n
        )
        return self.receiver_mean[:, None] / self.n + G


def _gen_rows(seed: int, n: int, sigma: float, start: int, stop: int) -> np.ndarray:
    scale = sigma / np.sqrt(n)
    rows = np.empty((stop - start, n))
    for k, i in enumerate(range(start, stop)):
        bitgen = np.random.Philox(key=np.array([seed, (Stream.FIXED_INTERFERENCE << 48) | i], dtype=np.uint64))
        rows[k] = np.random.Generator(bitgen).standard_normal(n)
    return rows * scale


def build_interference(
    params: StructuralParams,
    u: np.ndarray,
    n: int,
    mode: str = "conditional",
    seed: int = 0,
    dense_max_n: int = DENSE_MAX_N,
) -> InterferenceHandle:
    if n < 2:
        raise ConfigError("need at least two units")
    if mode not in MODES:
        raise ConfigError(f"unknown interference mode {mode!r}")
    if mode == "dense" and n > dense_max_n:
        raise ConfigError(f"dense interference refused for N={n} > {dense_max_n}; use streamed")
    u = np.asarray(u)
    receiver_mean = u * params.mu_h + (1 - u) * params.mu_a
    handle = InterferenceHandle(mode, params.mu_h, params.mu_a, params.sigma_fixed,
                                receiver_mean.astype(float), seed)
    if mode == "dense":
        handle.dense = _gen_rows(seed, n, params.sigma_fixed, 0, n)
    elif mode == "conditional":
        handle.lazy = LazyGaussianOperator(
            n, params.sigma_fixed / np.sqrt(n), substream(seed, Stream.FIXED_INTERFERENCE)
        )
    return handle


def interaction_inputs(y_prev: np.ndarray, w: np.ndarray, params: StructuralParams) -> np.ndarray:
    return params.alpha * w + params.beta * y_prev + params.gamma * w * y_prev


def _unique_columns(g: np.ndarray) -> tuple[np.ndarray, list[int]]:
    keep: list[int] = []
    back: list[int] = []
    for k in range(g.shape[1]):
        for pos, j in enumerate(keep):
            if np.array_equal(g[:, j], g[:, k]):
                back.append(pos)
                break
        else:
            back.append(len(keep))
            keep.append(k)
    return g[:, keep], back


def _advance(
    y_prev: np.ndarray,
    w: np.ndarray,
    u: np.ndarray,
    handle: InterferenceHandle,
    params: StructuralParams,
    t: int,
    seed: int,
) -> np.ndarray:
    """One round for m worlds at once; y_prev and w have shape (N, m).

    The noise and the per-round interference are drawn from streams keyed by
    (seed, t) and are shared by all m worlds.
    """
    if not (np.all(np.isfinite(y_prev)) and np.all(np.isfinite(w))):
        raise ValueError("non-finite input to step")
    n = len(u)
    u = u[:, None]
    base = params.delta_h * u + params.delta_a * (1 - u)
    direct = (params.tau_h * u + params.tau_a * (1 - u)) * w
    g = interaction_inputs(y_prev, w, params)
    # identical worlds must receive bit-identical interference
    g_unique, back = _unique_columns(g)
    inter = handle.apply(g_unique)
    sigma_t = params.sigma_time_at(t)
    if sigma_t > 0:
        tv = LazyGaussianOperator(n, sigma_t / np.sqrt(n), substream(seed, Stream.TIME_INTERFERENCE, t))
        inter = inter + tv.apply(g_unique)
    inter = inter[:, back]
    out = base + direct + inter
    if params.noise_sd > 0:
        out = out + params.noise_sd * substream(seed, Stream.NOISE, t).standard_normal(n)[:, None]
    return out


def step(
    y_prev: np.ndarray,
    w_t: np.ndarray,
    u: np.ndarray,
    handle: InterferenceHandle,
    params: StructuralParams,
    t: int = 1,
    seed: int = 0,
) -> np.ndarray:
    """Outcomes at round t from outcomes at t-1 and treatments at t (one world)."""
    y_prev = np.asarray(y_prev, dtype=float)
    w_t = np.asarray(w_t, dtype=float)
    if y_prev.shape != (len(u),) or w_t.shape != (len(u),):
        raise ValueError("vector lengths must equal N")
    return _advance(y_prev[:, None], w_t[:, None], np.asarray(u), handle, params, t, seed)[:, 0]


def initial_outcomes(n: int, params: StructuralParams, seed: int) -> np.ndarray:
    z = substream(seed, Stream.INIT).standard_normal(n)
    return params.init_mean + params.init_sd * z


def run_scenario(
    config: PopulationConfig,
    params: StructuralParams,
    types: TypeAssignment,
    handle: InterferenceHandle,
    plan: TreatmentPlan,
    seed: int | None = None,
    w: np.ndarray | None = None,
) -> Panel:
    """Simulate one world from round 0 through T."""
    seed = config.seed if seed is None else seed
    n, T = config.n_units, config.horizon
    if plan.horizon != T or types.n != n:
        raise ConfigError("plan/types inconsistent with config")
    if w is None:
        w = assign_treatments(plan, n, substream(seed, Stream.TREATMENT))
    y = np.empty((n, T + 1))
    y[:, 0] = initial_outcomes(n, params, seed)
    for t in range(1, T + 1):
        y[:, t] = step(y[:, t - 1], w[:, t - 1], types.u, handle, params, t, seed)
    return Panel(y, w, types.q, plan.scenario, seed, plan.t_warmup)


@dataclass(frozen=True)
class WorldSet:
    control: Panel
    treatment: Panel
    experiment: Panel
    types: TypeAssignment
    warmup_state: np.ndarray
    metadata: dict = dataclasses.field(default_factory=dict)

    def panels(self) -> dict[str, Panel]:
        return {"control": self.control, "treatment": self.treatment, "experiment": self.experiment}


def run_parallel_worlds(
    config: PopulationConfig,
    params: StructuralParams,
    types: TypeAssignment,
    handle: InterferenceHandle,
    experiment_plan: TreatmentPlan,
    seed: int | None = None,
) -> WorldSet:
    """Shared warmup, then control / treatment / experiment branches in lockstep.

    Branches reuse the same interference realisation and the same per-round
    noise deviates (common random numbers).
    """
    seed = config.seed if seed is None else seed
    n, T, tw = config.n_units, config.horizon, config.t_warmup
    if experiment_plan.horizon != T or experiment_plan.t_warmup != tw:
        raise ConfigError("experiment plan must cover the configured horizon and warmup")
    w_exp = assign_treatments(experiment_plan, n, substream(seed, Stream.TREATMENT))
    y = np.empty((n, T + 1))
    y[:, 0] = initial_outcomes(n, params, seed)
    zeros = np.zeros(n)
    for t in range(1, tw + 1):
        y[:, t] = step(y[:, t - 1], zeros, types.u, handle, params, t, seed)
    # columns: control, treatment, experiment
    ys = np.repeat(y[:, :, None], 3, axis=2)
    ws = np.zeros((n, T, 3), dtype=np.int8)
    ws[:, tw:, 1] = 1
    ws[:, :, 2] = w_exp
    for t in range(tw + 1, T + 1):
        ys[:, t, :] = _advance(ys[:, t - 1, :], ws[:, t - 1, :].astype(float), types.u, handle,
                               params, t, seed)
    panels = [
        Panel(ys[:, :, k], ws[:, :, k], types.q, name, seed, tw)
        for k, name in enumerate(("control", "treatment", "experiment"))
    ]
    meta = {"common_random_numbers": ["fixed_interference", "time_interference", "noise"],
            "interference_mode": handle.mode}
    return WorldSet(*panels, types=types, warmup_state=y[:, tw].copy(), metadata=meta)


def ground_truth_tte(worlds: WorldSet, humans: bool = True) -> EffectSeries:
    """Mean treatment-minus-control outcome over true humans (or true AI units)."""
    mask = worlds.types.u == (1 if humans else 0)
    if not mask.any():
        raise ValueError("no units of the requested type in the population")
    diff = (worlds.treatment.y[mask] - worlds.control.y[mask]).mean(axis=0)
    diff[0] = 0.0
    return EffectSeries(diff, "ground_truth_h" if humans else "ground_truth_a")


def population_tte(worlds: WorldSet) -> EffectSeries:
    diff = (worlds.treatment.y - worlds.control.y).mean(axis=0)
    diff[0] = 0.0
    return EffectSeries(diff, "ground_truth_pop")
