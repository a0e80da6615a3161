"""Three-step human-TTE estimator: summaries, least-squares fit of theta, propagation."""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import EffectSeries, Panel
from .ese import CounterfactualPaths, ThetaReduced, counterfactual_paths
from .subpop import PopulationSummary, SubpopSummary, Subpopulation, summarize

N_PARAMS = 7
COLUMN_NAMES = ["q", "1-q", "q*pi_S", "(1-q)*pi_S", "pi", "Y_prev", "pi*Y_prev"]


class IdentifiabilityError(RuntimeError):
    """Rank-deficient design in strict mode."""


class RankDeficiencyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DesignSystem:
    rows: np.ndarray
    response: np.ndarray
    index: list[tuple[int, int]]

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape


@dataclass(frozen=True)
class FitReport:
    theta_hat: ThetaReduced
    residual_sum_squares: float
    design_rank: int
    condition_estimate: float
    identifiability_flags: dict = field(default_factory=dict)

    @property
    def rank_deficient(self) -> bool:
        return self.design_rank < N_PARAMS

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat.to_dict(),
            "rss": self.residual_sum_squares,
            "rank": self.design_rank,
            "condition": self.condition_estimate,
            "flags": self.identifiability_flags,
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, default=_jsonable))


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj))


def build_design(
    summaries: Sequence[SubpopSummary],
    pop: PopulationSummary,
    fit_window: Sequence[int] | None = None,
) -> DesignSystem:
    """One row per (batch, round); memory regressor is the population mean at t-1."""
    T = len(pop.pi_path)
    window = list(range(1, T + 1)) if fit_window is None else list(fit_window)
    if not window:
        raise ValueError("empty fit window")
    if min(window) < 1 or max(window) > T:
        raise ValueError(f"fit window must lie within 1..{T}")
    rows, resp, index = [], [], []
    for k, s in enumerate(summaries):
        q = s.q_k
        for t in window:
            pi_s = s.pi_path[t - 1]
            pi = pop.pi_path[t - 1]
            y_prev = pop.y_path[t - 1]
            rows.append([q, 1 - q, q * pi_s, (1 - q) * pi_s, pi, y_prev, pi * y_prev])
            resp.append(s.y_path[t])
            index.append((k, t))
    rows = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(rows)):
        raise ValueError("non-finite design rows")
    return DesignSystem(rows, np.asarray(resp, dtype=float), index)


def numerical_rank(mat: np.ndarray) -> tuple[int, np.ndarray]:
    """Rank with threshold max(shape) * eps * largest singular value."""
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0, sv
    tol = max(mat.shape) * np.finfo(float).eps * sv[0]
    return int(np.sum(sv > tol)), sv


def fit_theta(design: DesignSystem, strict: bool = False) -> FitReport:
    """Least squares via SVD; minimum-norm solution when the design is rank deficient."""
    X, y = design.rows, design.response
    if X.shape[0] < X.shape[1]:
        raise ValueError(f"need at least {X.shape[1]} rows, got {X.shape[0]}")
    rank, sv = numerical_rank(X)
    rcond = max(X.shape) * np.finfo(float).eps
    theta, *_ = np.linalg.lstsq(X, y, rcond=rcond)
    resid = y - X @ theta
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    flags = {"rank_deficient": rank < N_PARAMS}
    if rank < N_PARAMS:
        msg = f"design rank {rank} < {N_PARAMS}; returning the minimum-norm solution"
        if strict:
            raise IdentifiabilityError(msg)
        warnings.warn(msg, RankDeficiencyWarning, stacklevel=2)
    return FitReport(ThetaReduced.from_array(theta), float(resid @ resid), rank, cond, flags)


def _z4_det(q_lo, q_hi, p_lo, p_hi) -> float:
    z4 = np.array([[1, q, p, q * p] for q in (q_lo, q_hi) for p in (p_lo, p_hi)], dtype=float)
    return float(np.linalg.det(z4))


def check_identifiability(
    summaries: Sequence[SubpopSummary],
    pop: PopulationSummary,
    q_gap: float = 0.05,
    p_gap: float = 0.05,
    match_tol: float = 0.025,
) -> dict:
    """Composition-exposure cross-variation and temporal rank diagnostics.

    Cross-variation: two batches whose compositions differ by at least
    ``q_gap`` must both show two treatment rates (matched across the batches
    within ``match_tol``) that differ by at least ``p_gap``.  The witness with
    the largest |det Z4| is reported.  Temporal: numerical rank of the T x 3
    matrix [pi_t, Y_{t-1}, pi_t Y_{t-1}].
    """
    best = None
    for a, b in itertools.combinations(range(len(summaries)), 2):
        sa, sb = summaries[a], summaries[b]
        if abs(sa.q_k - sb.q_k) < q_gap:
            continue
        pa, pb = np.asarray(sa.pi_path), np.asarray(sb.pi_path)
        close = np.abs(pa[:, None] - pb[None, :]) <= match_tol
        ta, tb = np.nonzero(close)
        if ta.size < 2:
            continue
        levels = 0.5 * (pa[ta] + pb[tb])
        lo, hi = int(np.argmin(levels)), int(np.argmax(levels))
        if levels[hi] - levels[lo] < p_gap:
            continue
        q_lo, q_hi = sorted((sa.q_k, sb.q_k))
        det = _z4_det(q_lo, q_hi, levels[lo], levels[hi])
        if best is None or abs(det) > abs(best["z4_det"]):
            best = {
                "batches": [a, b],
                "rounds": [[int(ta[lo]) + 1, int(tb[lo]) + 1], [int(ta[hi]) + 1, int(tb[hi]) + 1]],
                "q": [q_lo, q_hi],
                "p": [float(levels[lo]), float(levels[hi])],
                "z4_det": det,
            }
    pi = np.asarray(pop.pi_path)
    y_prev = np.asarray(pop.y_path)[:-1]
    m_pop = np.column_stack([pi, y_prev, pi * y_prev])
    temporal_rank, _ = numerical_rank(m_pop)
    return {
        "cross_variation": best is not None,
        "witness": best,
        "temporal_rank": temporal_rank,
        "temporal_ok": temporal_rank == 3,
        "passed": best is not None and temporal_rank == 3,
    }


def propagate_counterfactuals(
    theta_hat: ThetaReduced,
    y0: float,
    t_max: int,
    q_bar: float,
    treat_start: int = 1,
    human_memory: bool = False,
) -> CounterfactualPaths:
    return counterfactual_paths(theta_hat, y0, t_max, q_bar, treat_start, human_memory)


@dataclass(frozen=True)
class Estimate:
    effect: EffectSeries
    fit: FitReport
    paths: CounterfactualPaths
    diagnostics: dict


def estimate_tte_h(
    panel: Panel,
    batches: Sequence[Subpopulation],
    fit_window: Sequence[int] | None = None,
    post_warmup_only: bool = False,
    treat_start: int | None = None,
    strict: bool = False,
    human_memory: bool = False,
) -> Estimate:
    """Summaries, fit and counterfactual propagation from the population mean at round 0.

    Treatment in the counterfactual worlds starts after the panel's warmup
    rounds unless ``treat_start`` says otherwise.
    """
    summaries, pop = summarize(panel, batches)
    if fit_window is None and post_warmup_only:
        fit_window = range(panel.t_warmup + 1, panel.horizon + 1)
    design = build_design(summaries, pop, fit_window)
    diag = check_identifiability(summaries, pop)
    fit = fit_theta(design, strict=strict)
    fit.identifiability_flags.update(
        cross_variation=diag["cross_variation"], temporal_ok=diag["temporal_ok"]
    )
    start = panel.t_warmup + 1 if treat_start is None else treat_start
    paths = propagate_counterfactuals(
        fit.theta_hat, float(pop.y_path[0]), panel.horizon, pop.q_bar, start, human_memory
    )
    return Estimate(paths.tte_h, fit, paths, diag)
