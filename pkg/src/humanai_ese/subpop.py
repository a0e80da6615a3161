"""Outcome-free construction of composition- and exposure-diverse subpopulations.

Nothing here reads outcomes: batches are a function of the priors, the
treatment matrix and an RNG only.  ``summarize`` is the one place outcomes
enter, and it only averages them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Panel


class SubpopError(ValueError):
    pass


@dataclass(frozen=True)
class Subpopulation:
    indices: np.ndarray
    stratum_id: int = 0
    anchor_rank: int = 0

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        if idx.size == 0:
            raise SubpopError("subpopulation must be non-empty")
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True)
class SubpopSummary:
    q_k: float
    pi_path: np.ndarray
    y_path: np.ndarray
    size: int
    stratum_id: int = 0
    anchor_rank: int = 0


def stratify_by_prior(q: np.ndarray, n_strata: int) -> list[np.ndarray]:
    """Quantile bins of q of near-equal size, lowest priors first; ties go by unit index."""
    q = np.asarray(q, dtype=float)
    if n_strata < 1:
        raise SubpopError("n_strata must be >= 1")
    if n_strata > len(q):
        raise SubpopError("more strata than units")
    order = np.lexsort((np.arange(len(q)), q))
    return [np.sort(chunk) for chunk in np.array_split(order, n_strata)]


def treatment_duration(w: np.ndarray, t_warmup: int = 0) -> np.ndarray:
    """d_i over the main rounds."""
    return np.asarray(w)[:, t_warmup:].sum(axis=1)


def default_sizes(pool_size: int, n_anchors: int) -> tuple[int, int]:
    half = max(1, pool_size // (2 * n_anchors))
    return half, half


def build_batches(
    pool: np.ndarray,
    w: np.ndarray,
    n_anchors: int,
    block_size: int | None,
    random_size: int | None,
    rng: np.random.Generator,
    stratum_id: int = 0,
    t_warmup: int = 0,
) -> list[Subpopulation]:
    """Duration-sorted anchor blocks plus random fill from the same pool.

    Units are sorted by (d_i, unit id); ``n_anchors`` positions are spread
    evenly from the lowest to the highest duration, a contiguous block of
    ``block_size`` is centred on each, and ``random_size`` further units are
    drawn without replacement from the rest of the pool.
    """
    pool = np.asarray(pool, dtype=np.int64)
    if pool.size == 0:
        raise SubpopError("empty pool")
    if n_anchors < 1:
        raise SubpopError("n_anchors must be >= 1")
    dflt_block, dflt_random = default_sizes(pool.size, n_anchors)
    block_size = dflt_block if block_size is None else block_size
    random_size = dflt_random if random_size is None else random_size
    if block_size + random_size < 1:
        raise SubpopError("block_size + random_size must be >= 1")
    d = treatment_duration(w, t_warmup)[pool]
    ranked = pool[np.lexsort((pool, d))]
    m = ranked.size
    block_size = min(block_size, m)
    positions = np.rint(np.linspace(0, m - 1, n_anchors)).astype(int)
    batches = []
    for rank, pos in enumerate(positions):
        start = int(np.clip(pos - block_size // 2, 0, m - block_size))
        block = ranked[start:start + block_size]
        rest = np.setdiff1d(pool, block, assume_unique=True)
        k = min(random_size, rest.size)
        extra = rng.choice(rest, size=k, replace=False) if k else rest[:0]
        batches.append(Subpopulation(np.concatenate([block, extra]), stratum_id, rank))
    return batches


def batch_pi_path(batch: Subpopulation, w: np.ndarray) -> np.ndarray:
    return np.asarray(w)[batch.indices].mean(axis=0)


def prune_batches(
    batches: Sequence[Subpopulation],
    w: np.ndarray,
    min_size: int = 20,
    min_traj_dist: float = 0.02,
) -> list[Subpopulation]:
    """Drop small batches and near-duplicate treatment trajectories (first one wins)."""
    kept: list[Subpopulation] = []
    paths: list[np.ndarray] = []
    for b in batches:
        if b.size < min_size:
            continue
        pi = batch_pi_path(b, w)
        dup = any(
            k.stratum_id == b.stratum_id and np.max(np.abs(pi - p)) <= min_traj_dist
            for k, p in zip(kept, paths)
        )
        if dup:
            continue
        kept.append(b)
        paths.append(pi)
    if not kept:
        raise SubpopError("every batch was pruned")
    return kept


def construct_subpopulations(
    q: np.ndarray,
    w: np.ndarray,
    rng: np.random.Generator,
    n_strata: int = 3,
    n_anchors: int = 3,
    block_size: int | None = None,
    random_size: int | None = None,
    min_size: int = 20,
    min_traj_dist: float = 0.02,
    t_warmup: int = 0,
) -> list[Subpopulation]:
    """Stratify, build batches per stratum, prune."""
    batches: list[Subpopulation] = []
    for s, pool in enumerate(stratify_by_prior(q, n_strata)):
        batches += build_batches(pool, w, n_anchors, block_size, random_size, rng, s, t_warmup)
    return prune_batches(batches, w, min_size, min_traj_dist)


@dataclass(frozen=True)
class PopulationSummary:
    q_bar: float
    pi_path: np.ndarray
    y_path: np.ndarray
    size: int


def summarize(panel: Panel, batches: Sequence[Subpopulation]):
    """Batch and population means of priors, treatments and outcomes."""
    summaries = []
    for b in batches:
        idx = b.indices
        if idx.max() >= panel.n_units:
            raise SubpopError("batch indices outside the panel")
        summaries.append(SubpopSummary(
            q_k=float(panel.q[idx].mean()),
            pi_path=panel.w[idx].mean(axis=0),
            y_path=panel.y[idx].mean(axis=0),
            size=b.size,
            stratum_id=b.stratum_id,
            anchor_rank=b.anchor_rank,
        ))
    pop = PopulationSummary(
        q_bar=float(panel.q.mean()),
        pi_path=panel.w.mean(axis=0),
        y_path=panel.y.mean(axis=0),
        size=panel.n_units,
    )
    return summaries, pop


def batch_manifest(batches: Sequence[Subpopulation], panel: Panel) -> list[dict]:
    out = []
    for b in batches:
        out.append({
            "stratum": b.stratum_id,
            "anchor": b.anchor_rank,
            "indices": b.indices.tolist(),
            "q_k": float(panel.q[b.indices].mean()),
            "pi_path": panel.w[b.indices].mean(axis=0).tolist(),
        })
    return out


def write_batch_manifest(batches, panel: Panel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(batch_manifest(batches, panel), indent=1))


def read_batch_manifest(path: str | Path) -> list[Subpopulation]:
    data = json.loads(Path(path).read_text())
    return [Subpopulation(np.array(d["indices"]), d["stratum"], d["anchor"]) for d in data]
