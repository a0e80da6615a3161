"""Deterministic experimental state evolution.

The large-population limit of subpopulation sample means is the recursion

    nu_t^S = F(nu_{t-1}, pi_t^S, q^S, pi_t; theta)
    F = delta_H q + delta_A (1-q) + (tau_H q + tau_A (1-q)) pi^S
        + alpha_bar pi + beta_bar nu + gamma_bar pi nu

where the memory argument ``nu`` is always the population trajectory.
"""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .core import EffectSeries, StructuralParams

DIVERGENCE_CAP = 1e6


class DivergenceError(ArithmeticError):
    """A propagated trajectory left the configured magnitude cap."""


@dataclass(frozen=True)
class ThetaReduced:
    delta_h: float
    delta_a: float
    tau_h: float
    tau_a: float
    alpha_bar: float
    beta_bar: float
    gamma_bar: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("theta entries must be finite")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, arr) -> "ThetaReduced":
        arr = np.asarray(arr, dtype=float).ravel()
        if arr.shape != (7,):
            raise ValueError("theta needs exactly 7 entries")
        return cls(*(float(v) for v in arr))

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict[str, float]:
        return dict(zip(self.names(), astuple(self)))


@dataclass(frozen=True)
class ESETrajectory:
    nu: np.ndarray
    pi: np.ndarray
    q_bar: float

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "nu", "pi"])
            for t, nu in enumerate(self.nu):
                pi = "" if t == 0 else repr(float(self.pi[t - 1]))
                wr.writerow([t, repr(float(nu)), pi])


def reduce_params(params: StructuralParams, q_bar: float) -> ThetaReduced:
    """Collapse interference means into alpha_bar, beta_bar, gamma_bar at composition q_bar."""
    if not 0.0 <= q_bar <= 1.0:
        raise ValueError("q_bar must lie in [0, 1]")
    mu_bar = params.mu_h * q_bar + params.mu_a * (1.0 - q_bar)
    return ThetaReduced(
        params.delta_h,
        params.delta_a,
        params.tau_h,
        params.tau_a,
        mu_bar * params.alpha,
        mu_bar * params.beta,
        mu_bar * params.gamma,
    )


def ese_step(nu_prev, pi_s, q_s, pi_pop, theta: ThetaReduced):
    """One application of F; broadcasts over numpy inputs."""
    th = theta
    out = (
        th.delta_h * q_s
        + th.delta_a * (1 - q_s)
        + (th.tau_h * q_s + th.tau_a * (1 - q_s)) * pi_s
        + th.alpha_bar * pi_pop
        + th.beta_bar * nu_prev
        + th.gamma_bar * pi_pop * nu_prev
    )
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite input to ese_step")
    return out


def _guard(value: float, t: int, cap: float) -> float:
    if not abs(value) <= cap:
        raise DivergenceError(f"|nu_{t}| = {abs(value):.3g} exceeds cap {cap:g}")
    return value


def population_trajectory(
    theta: ThetaReduced, q_bar: float, pi_path, nu0: float, cap: float = DIVERGENCE_CAP
) -> np.ndarray:
    """Population recursion (batch = whole population)."""
    pi_path = np.asarray(pi_path, dtype=float)
    nu = np.empty(len(pi_path) + 1)
    nu[0] = nu0
    for t in range(1, len(nu)):
        p = pi_path[t - 1]
        nu[t] = _guard(ese_step(nu[t - 1], p, q_bar, p, theta), t, cap)
    return nu


def ese_trajectory(
    theta: ThetaReduced,
    q_s: float,
    pi_s_path,
    pi_pop_path,
    nu0: float,
    t_max: int,
    q_bar: float | None = None,
    cap: float = DIVERGENCE_CAP,
) -> ESETrajectory:
    """Batch trajectory driven by the population memory.

    ``q_bar`` is the population composition; when omitted the batch is taken
    to be the population itself (``q_bar = q_s``), and with ``pi_s_path ==
    pi_pop_path`` this is the full-population recursion.
    """
    pi_s = np.asarray(pi_s_path, dtype=float)
    pi_pop = np.asarray(pi_pop_path, dtype=float)
    if len(pi_s) != t_max or len(pi_pop) != t_max:
        raise ValueError("path lengths must equal t_max")
    q_bar = q_s if q_bar is None else q_bar
    pop = population_trajectory(theta, q_bar, pi_pop, nu0, cap)
    nu = np.empty(t_max + 1)
    nu[0] = nu0
    for t in range(1, t_max + 1):
        nu[t] = _guard(ese_step(pop[t - 1], pi_s[t - 1], q_s, pi_pop[t - 1], theta), t, cap)
    return ESETrajectory(nu=nu, pi=pi_s, q_bar=q_s)


@dataclass(frozen=True)
class CounterfactualPaths:
    tte_h: EffectSeries
    human_treated: np.ndarray
    human_control: np.ndarray
    population_treated: np.ndarray
    population_control: np.ndarray


def counterfactual_paths(
    theta: ThetaReduced,
    nu0: float,
    t_max: int,
    q_bar: float,
    treat_start: int = 1,
    human_memory: bool = False,
    cap: float = DIVERGENCE_CAP,
) -> CounterfactualPaths:
    """All-treated versus all-control propagation with a human (q = 1) readout.

    Rounds before ``treat_start`` are untreated in both worlds.  By default the
    human readout takes the population counterfactual as its memory argument;
    ``human_memory=True`` feeds the human path its own previous value instead.
    """
    if treat_start < 1:
        raise ValueError("treat_start must be >= 1")
    pop = {1: np.empty(t_max + 1), 0: np.empty(t_max + 1)}
    hum = {1: np.empty(t_max + 1), 0: np.empty(t_max + 1)}
    for arm in (1, 0):
        pop[arm][0] = hum[arm][0] = nu0
        for t in range(1, t_max + 1):
            p = float(arm) if t >= treat_start else 0.0
            mem_h = hum[arm][t - 1] if human_memory else pop[arm][t - 1]
            hum[arm][t] = _guard(ese_step(mem_h, p, 1.0, p, theta), t, cap)
            pop[arm][t] = _guard(ese_step(pop[arm][t - 1], p, q_bar, p, theta), t, cap)
    tte = hum[1] - hum[0]
    tte[0] = 0.0
    return CounterfactualPaths(EffectSeries(tte, "tte_h"), hum[1], hum[0], pop[1], pop[0])


def analytic_tte_h(
    theta: ThetaReduced,
    nu0: float,
    t_max: int,
    q_bar: float = 0.5,
    treat_start: int = 1,
    human_memory: bool = False,
) -> EffectSeries:
    """Limit human total treatment effect implied by theta."""
    return counterfactual_paths(theta, nu0, t_max, q_bar, treat_start, human_memory).tte_h


def analytic_population_tte(
    theta: ThetaReduced, nu0: float, t_max: int, q_bar: float, treat_start: int = 1
) -> EffectSeries:
    cf = counterfactual_paths(theta, nu0, t_max, q_bar, treat_start)
    diff = cf.population_treated - cf.population_control
    diff[0] = 0.0
    return EffectSeries(diff, "tte_pop")


def fixed_point(theta: ThetaReduced, q: float, pi: float) -> float:
    """Stationary value of the population recursion at constant (q, pi)."""
    slope = theta.beta_bar + theta.gamma_bar * pi
    if slope == 1.0:
        raise ValueError("recursion has no unique fixed point")
    intercept = (
        theta.delta_h * q
        + theta.delta_a * (1 - q)
        + (theta.tau_h * q + theta.tau_a * (1 - q)) * pi
        + theta.alpha_bar * pi
    )
    return intercept / (1.0 - slope)
