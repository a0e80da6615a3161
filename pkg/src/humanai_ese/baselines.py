"""Reference estimators. Rounds where an estimator is undefined carry NaN."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import EffectSeries, Panel
from .estimator import IdentifiabilityError, numerical_rank
from .subpop import Subpopulation, summarize


@dataclass(frozen=True)
class BaselineResult:
    name: str
    effect: EffectSeries
    fit: dict = field(default_factory=dict)


def _with_round0(vals: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], vals])


def _dim_values(y: np.ndarray, w: np.ndarray) -> np.ndarray:
    treated = w == 1
    n1 = treated.sum(axis=0)
    n0 = (~treated).sum(axis=0)
    s1 = np.where(treated, y, 0.0).sum(axis=0)
    s0 = np.where(~treated, y, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = s1 / n1 - s0 / n0
    out[(n1 == 0) | (n0 == 0)] = np.nan
    return out


def dim(panel: Panel) -> BaselineResult:
    """Per-round treated-minus-control mean outcome."""
    return BaselineResult("DIM", EffectSeries(_with_round0(_dim_values(panel.y[:, 1:], panel.w)), "DIM"))


def dim_filtered(panel: Panel, threshold: float | None = 0.5, use_median: bool = False) -> BaselineResult:
    """DIM restricted to units whose prior exceeds the threshold (or the median prior)."""
    cut = float(np.median(panel.q)) if use_median else threshold
    keep = panel.q > cut
    if not keep.any():
        raise ValueError(f"no unit has a prior above {cut}")
    vals = _dim_values(panel.y[keep, 1:], panel.w[keep])
    return BaselineResult("DIM-filtered", EffectSeries(_with_round0(vals), "DIM-filtered"),
                          {"threshold": cut, "n_kept": int(keep.sum())})


def ht_q(panel: Panel) -> BaselineResult:
    """Hajek contrast with the human priors as weights."""
    y, w, q = panel.y[:, 1:], panel.w == 1, panel.q[:, None]
    m1 = np.where(w, q, 0.0).sum(axis=0)
    m0 = np.where(~w, q, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(w, q * y, 0.0).sum(axis=0) / m1 - np.where(~w, q * y, 0.0).sum(axis=0) / m0
    vals[(m1 <= 0) | (m0 <= 0)] = np.nan
    return BaselineResult("HT-q", EffectSeries(_with_round0(vals), "HT-q"))


def _propagate(step, y0: float, t_max: int, treat_start: int) -> np.ndarray:
    paths = {}
    for arm in (1.0, 0.0):
        nu = np.empty(t_max + 1)
        nu[0] = y0
        for t in range(1, t_max + 1):
            nu[t] = step(nu[t - 1], arm if t >= treat_start else 0.0)
        paths[arm] = nu
    eff = paths[1.0] - paths[0.0]
    eff[0] = 0.0
    return eff


def cmp_basic(panel: Panel, treat_start: int | None = None) -> BaselineResult:
    """Population recursion Y_t = lam pi_t + xi Y_{t-1} + g pi_t Y_{t-1}, no intercept."""
    y_bar = panel.y.mean(axis=0)
    pi = panel.w.mean(axis=0)
    X = np.column_stack([pi, y_bar[:-1], pi * y_bar[:-1]])
    if X.shape[0] < 3:
        raise ValueError("need at least 3 rounds")
    rank, _ = numerical_rank(X)
    if rank < 3:
        raise IdentifiabilityError(f"CMP Basic design has rank {rank} < 3")
    (lam, xi, g), *_ = np.linalg.lstsq(X, y_bar[1:], rcond=None)
    start = panel.t_warmup + 1 if treat_start is None else treat_start
    eff = _propagate(lambda nu, p: lam * p + xi * nu + g * p * nu, y_bar[0], panel.horizon, start)
    return BaselineResult("CMP Basic", EffectSeries(eff, "CMP Basic"),
                          {"lambda": lam, "xi": xi, "gamma": g})


def cmp_full(
    panel: Panel, batches: Sequence[Subpopulation], treat_start: int | None = None
) -> BaselineResult:
    """Composition-blind batch recursion c + tau pi_S + a pi + b Y_{t-1} + g pi Y_{t-1}.

    Targets the population-average effect.
    """
    summaries, pop = summarize(panel, batches)
    T = panel.horizon
    rows, resp = [], []
    for s in summaries:
        for t in range(1, T + 1):
            p, yp = pop.pi_path[t - 1], pop.y_path[t - 1]
            rows.append([1.0, s.pi_path[t - 1], p, yp, p * yp])
            resp.append(s.y_path[t])
    X, y = np.asarray(rows), np.asarray(resp)
    rank, _ = numerical_rank(X)
    if rank < 5:
        raise IdentifiabilityError(f"CMP design has rank {rank} < 5")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    c, tau, a, b, g = coef
    start = panel.t_warmup + 1 if treat_start is None else treat_start
    eff = _propagate(lambda nu, p: c + tau * p + a * p + b * nu + g * p * nu,
                     pop.y_path[0], T, start)
    names = ("intercept", "tau", "alpha", "beta", "gamma")
    return BaselineResult("CMP", EffectSeries(eff, "CMP"), dict(zip(names, coef)))


def run_all(panel: Panel, batches: Sequence[Subpopulation], dim_threshold: float = 0.5,
            dim_median: bool = False) -> list[BaselineResult]:
    return [
        cmp_full(panel, batches),
        cmp_basic(panel),
        dim(panel),
        dim_filtered(panel, dim_threshold, dim_median),
        ht_q(panel),
    ]
