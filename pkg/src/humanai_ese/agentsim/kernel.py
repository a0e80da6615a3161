"""Rule-based behaviour tables standing in for LLM personas."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

TYPES = ("ai", "human")
VALENCES = ("positive", "negative", "sponsored")
ACTIONS = ("reply", "like", "skip")
MOOD_MIN, MOOD_MAX = 0, 4

POSITIVE, NEGATIVE, SPONSORED = 0, 1, 2
REPLY, LIKE, SKIP = 0, 1, 2


def mood_bucket(mood):
    """0-1 -> 0, 2 -> 1, 3-4 -> 2."""
    mood = np.asarray(mood)
    return np.where(mood <= 1, 0, np.where(mood == 2, 1, 2))


@dataclass(frozen=True)
class MoodRule:
    initial: float
    baseline: float
    pull: float
    w_positive: float
    w_negative: float
    w_treatment: float


@dataclass(frozen=True)
class BehaviorKernel:
    """probs[type, valence, bucket] = (p_reply, p_like, p_skip); type 0 = AI, 1 = human."""

    probs: np.ndarray
    mood: tuple[MoodRule, MoodRule]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (2, 3, 3, 3):
            raise ValueError(f"kernel table must have shape (2, 3, 3, 3), got {p.shape}")
        if np.any(p < 0) or not np.allclose(p.sum(axis=-1), 1.0):
            raise ValueError("action probabilities must be non-negative and sum to 1 per cell")
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_dict(cls, data: dict) -> "BehaviorKernel":
        probs = np.empty((2, 3, 3, 3))
        for ti, tname in enumerate(TYPES):
            for vi, vname in enumerate(VALENCES):
                probs[ti, vi] = np.asarray(data["actions"][tname][vname], dtype=float)
        mood = tuple(MoodRule(**data["mood"][tname]) for tname in TYPES)
        return cls(probs, mood)

    def to_dict(self) -> dict:
        return {
            "actions": {
                t: {v: self.probs[ti, vi].tolist() for vi, v in enumerate(VALENCES)}
                for ti, t in enumerate(TYPES)
            },
            "mood": {t: vars(self.mood[ti]) for ti, t in enumerate(TYPES)},
        }

    @classmethod
    def load(cls, path: str | Path) -> "BehaviorKernel":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def default(cls) -> "BehaviorKernel":
        text = resources.files("humanai_ese.agentsim").joinpath("assets/default_kernel.json").read_text()
        return cls.from_dict(json.loads(text))

    @classmethod
    def constant(cls, action: str) -> "BehaviorKernel":
        """Every cell deterministic on one action; mood frozen."""
        probs = np.zeros((2, 3, 3, 3))
        probs[..., ACTIONS.index(action)] = 1.0
        still = MoodRule(2.0, 2.0, 0.0, 0.0, 0.0, 0.0)
        return cls(probs, (still, still))

    def engage_prob(self, unit_type, valence, mood):
        return 1.0 - self.probs[unit_type, valence, mood_bucket(mood), SKIP]

    def expected_outcome(self, unit_type: int, mood: int, valences) -> float:
        """Expected number of non-skip actions for one feed."""
        return float(sum(self.engage_prob(unit_type, v, mood) for v in valences))

    def expected_mood(self, unit_type: int, mood: float, valences) -> float:
        """Mean of the next mood before clamping."""
        r = self.mood[unit_type]
        v = np.asarray(valences)
        return (mood + r.pull * (r.baseline - mood) + r.w_positive * np.sum(v == POSITIVE)
                + r.w_negative * np.sum(v == NEGATIVE) + r.w_treatment * np.sum(v == SPONSORED))
