"""Discussion-platform simulation: threads, popularity-weighted feeds, sponsored treatment.

Each round every user sees 4 threads drawn without replacement with weight
log(reply_count + 1) + floor, acts on each (reply / like / skip) and reports a
new mood.  The outcome is the number of non-skip actions.  Actions are
computed against the start-of-round pool and replies are committed once, in
unit order, at the end of the round.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..core import (
    ConfigError,
    Panel,
    PriorQualityConfig,
    Stream,
    TreatmentPlan,
    TypeAssignment,
    assign_treatments,
    draw_types_fixed,
    gen_priors_classifier,
    substream,
)
from ..dynamics import WorldSet
from .kernel import MOOD_MAX, MOOD_MIN, NEGATIVE, POSITIVE, REPLY, SKIP, SPONSORED, BehaviorKernel, mood_bucket

FEED_SIZE = 4
WEIGHT_FLOOR = np.log(2.0) / 10
SPONSORED_ID = -1

FIRST_NAMES = (
    "Sarah", "Michael", "James", "Emily", "David", "Olivia", "Daniel", "Sophia", "Ethan", "Mia",
    "Noah", "Ava", "Lucas", "Chloe", "Mateo", "Priya", "Omar", "Hana", "Leo", "Zoe",
    "Ravi", "Grace", "Samuel", "Nora", "Isaac", "Lena", "Caleb", "Aisha", "Felix", "Maya",
)
GENDERS = ("woman", "man", "non-binary person")
OCCUPATIONS = (
    "teacher", "software engineer", "nurse", "graphic designer", "accountant", "chef",
    "marketing manager", "physician", "lawyer", "barista", "architect", "social worker",
    "data analyst", "photographer", "electrician", "musician",
)
INTERESTS = (
    "hiking", "cooking", "travel", "yoga", "board games", "photography", "reading", "running",
    "live music", "painting", "gardening", "cycling", "film", "podcasts", "climbing", "baking",
    "dancing", "volunteering", "video games", "wine tasting", "surfing", "museums", "pets",
    "languages",
)


@dataclass(frozen=True)
class Persona:
    name: str
    gender: str
    age: int
    occupation: str
    interests: tuple[str, ...]
    unit_type: str

    def __post_init__(self):
        if len(set(self.interests)) != 4:
            raise ValueError("a persona has exactly 4 distinct interests")
        if not 20 <= self.age <= 40:
            raise ValueError("age must lie in [20, 40]")
        if self.unit_type not in ("human", "ai"):
            raise ValueError("unit_type must be human or ai")


@dataclass(frozen=True)
class Thread:
    id: int
    author: int
    valence: str
    reply_count: int = 0


@dataclass
class PlatformState:
    """Mutable platform: organic thread pool plus per-user moods."""

    personas: list[Persona]
    u: np.ndarray
    thread_author: np.ndarray
    thread_valence: np.ndarray
    reply_count: np.ndarray
    mood: np.ndarray
    own_thread: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.own_thread is None:
            own = np.full(len(self.u), -1)
            own[self.thread_author] = np.arange(len(self.thread_author))
            self.own_thread = own

    @property
    def n_users(self) -> int:
        return len(self.u)

    @property
    def pool_size(self) -> int:
        return len(self.thread_author)

    def threads(self) -> list[Thread]:
        names = ("positive", "negative")
        return [Thread(k, int(a), names[v], int(c)) for k, (a, v, c) in
                enumerate(zip(self.thread_author, self.thread_valence, self.reply_count))]

    def weights(self) -> np.ndarray:
        return np.log(self.reply_count + 1.0) + WEIGHT_FLOOR

    def copy(self) -> "PlatformState":
        return copy.deepcopy(self)


def make_persona(rng: np.random.Generator, unit_type: str) -> Persona:
    return Persona(
        name=str(rng.choice(FIRST_NAMES)),
        gender=str(rng.choice(GENDERS)),
        age=int(rng.integers(20, 41)),
        occupation=str(rng.choice(OCCUPATIONS)),
        interests=tuple(str(s) for s in rng.choice(INTERESTS, size=4, replace=False)),
        unit_type=unit_type,
    )


def init_platform(
    n_units: int, human_fraction: float, rng: np.random.Generator, kernel: BehaviorKernel | None = None
) -> PlatformState:
    """Personas plus one seed thread per user: positive if human-authored, negative if AI."""
    if n_units < FEED_SIZE + 1:
        raise ConfigError(f"need more than {FEED_SIZE} users")
    kernel = kernel or BehaviorKernel.default()
    u = draw_types_fixed(n_units, human_fraction, rng)
    personas = [make_persona(rng, "human" if ui else "ai") for ui in u]
    valence = np.where(u == 1, POSITIVE, NEGATIVE).astype(np.int8)
    start = np.array([kernel.mood[int(t)].initial for t in u])
    mood = np.clip(np.floor(start + rng.random(n_units)), MOOD_MIN, MOOD_MAX).astype(np.int64)
    return PlatformState(personas, u, np.arange(n_units), valence, np.zeros(n_units, dtype=np.int64), mood)


def _top_k_feeds(weights: np.ndarray, exclude: np.ndarray, gumbel: np.ndarray) -> np.ndarray:
    """Gumbel-top-k: same law as sequential weighted sampling without replacement."""
    keys = np.log(weights)[None, :] + gumbel
    rows = np.arange(len(exclude))
    valid = exclude >= 0
    keys[rows[valid], exclude[valid]] = -np.inf
    top = np.argpartition(-keys, FEED_SIZE - 1, axis=1)[:, :FEED_SIZE]
    order = np.argsort(-np.take_along_axis(keys, top, axis=1), axis=1, kind="stable")
    return np.take_along_axis(top, order, axis=1)


def sample_feeds(state: PlatformState, rng: np.random.Generator) -> np.ndarray:
    """Feeds for every user at once, shape (N, 4) of thread indices."""
    if state.pool_size - 1 < FEED_SIZE:
        raise ConfigError("thread pool too small for a feed")
    gumbel = rng.gumbel(size=(state.n_users, state.pool_size))
    return _top_k_feeds(state.weights(), state.own_thread, gumbel)


def sample_feed(state: PlatformState, user: int, rng: np.random.Generator) -> np.ndarray:
    """Four thread indices for one user, never including the user's own seed thread."""
    if state.pool_size - (state.own_thread[user] >= 0) < FEED_SIZE:
        raise ConfigError("thread pool too small for a feed")
    gumbel = rng.gumbel(size=(1, state.pool_size))
    return _top_k_feeds(state.weights(), state.own_thread[[user]], gumbel)[0]


def apply_treatment(feed: np.ndarray, treated: bool, rng: np.random.Generator) -> np.ndarray:
    """Replace a uniformly random slot by the sponsored thread when treated."""
    feed = np.array(feed, copy=True)
    if len(feed) != FEED_SIZE:
        raise ValueError("feed must have 4 slots")
    if treated:
        feed[rng.integers(FEED_SIZE)] = SPONSORED_ID
    return feed


def apply_treatments(feeds: np.ndarray, w_t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    feeds = feeds.copy()
    slots = rng.integers(FEED_SIZE, size=len(feeds))
    rows = np.nonzero(w_t)[0]
    feeds[rows, slots[rows]] = SPONSORED_ID
    return feeds


def feed_valences(state: PlatformState, feeds: np.ndarray) -> np.ndarray:
    v = state.thread_valence[np.where(feeds >= 0, feeds, 0)]
    return np.where(feeds >= 0, v, SPONSORED).astype(np.int8)


@dataclass(frozen=True)
class ActResult:
    actions: np.ndarray
    outcome: np.ndarray
    mood: np.ndarray


def act(
    unit_type: np.ndarray,
    mood: np.ndarray,
    valences: np.ndarray,
    kernel: BehaviorKernel,
    rng: np.random.Generator,
) -> ActResult:
    """Vectorised actions and mood updates; inputs are per-user rows."""
    unit_type = np.asarray(unit_type)
    mood = np.asarray(mood)
    n = len(unit_type)
    cells = kernel.probs[unit_type[:, None], valences, mood_bucket(mood)[:, None]]  # (n, 4, 3)
    draw = rng.random((n, FEED_SIZE))
    cum = np.cumsum(cells, axis=-1)
    actions = np.minimum((draw[..., None] >= cum[..., :2]).sum(axis=-1), SKIP)
    outcome = (actions != SKIP).sum(axis=1)

    pull = np.array([kernel.mood[t].pull for t in (0, 1)])[unit_type]
    base = np.array([kernel.mood[t].baseline for t in (0, 1)])[unit_type]
    wts = np.array([[kernel.mood[t].w_positive, kernel.mood[t].w_negative, kernel.mood[t].w_treatment]
                    for t in (0, 1)])[unit_type]
    counts = np.stack([(valences == k).sum(axis=1) for k in (POSITIVE, NEGATIVE, SPONSORED)], axis=1)
    target = mood + pull * (base - mood) + (wts * counts).sum(axis=1)
    new_mood = np.clip(np.floor(target + rng.random(n)), MOOD_MIN, MOOD_MAX).astype(np.int64)
    return ActResult(actions, outcome, new_mood)


def user_act(
    state: PlatformState, user: int, feed: np.ndarray, kernel: BehaviorKernel, rng: np.random.Generator
) -> ActResult:
    """One user's actions on a 4-slot feed (no state mutation)."""
    val = feed_valences(state, np.asarray(feed)[None, :])
    res = act(state.u[[user]], state.mood[[user]], val, kernel, rng)
    return ActResult(res.actions[0], res.outcome[0], res.mood[0])


def play_round(
    state: PlatformState,
    w_t: np.ndarray,
    kernel: BehaviorKernel,
    rng: np.random.Generator,
) -> np.ndarray:
    """Advance the platform one round in place; returns per-user outcomes."""
    feeds = apply_treatments(sample_feeds(state, rng), w_t, rng)
    res = act(state.u, state.mood, feed_valences(state, feeds), kernel, rng)
    replied = feeds[(res.actions == REPLY) & (feeds >= 0)]
    np.add.at(state.reply_count, replied, 1)
    state.mood = res.mood
    return res.outcome


@dataclass(frozen=True)
class AgentSimConfig:
    n_units: int = 200
    human_fraction: float = 0.5
    t_warmup: int = 4
    t_main: int = 12
    phases: tuple[float, ...] = (0.2, 0.5, 0.8)
    prior_quality: PriorQualityConfig = PriorQualityConfig()

    @property
    def horizon(self) -> int:
        return self.t_warmup + self.t_main

    def experiment_plan(self) -> TreatmentPlan:
        return TreatmentPlan.experiment(self.t_warmup, self.t_main, self.phases)


def run_platform(
    config: AgentSimConfig,
    seed: int,
    kernel: BehaviorKernel | None = None,
    plan: TreatmentPlan | None = None,
) -> WorldSet:
    """Round 0 and warmup shared, then control / treatment / experiment branches.

    Each branch replays the same per-round random streams (common random numbers).
    """
    kernel = kernel or BehaviorKernel.default()
    plan = plan or config.experiment_plan()
    n, T, tw = config.n_units, config.horizon, config.t_warmup
    if plan.horizon != T or plan.t_warmup != tw:
        raise ConfigError("plan does not match the configured horizon/warmup")
    state = init_platform(n, config.human_fraction, substream(seed, Stream.PLATFORM), kernel)
    q = gen_priors_classifier(state.u, config.prior_quality, substream(seed, Stream.PRIORS))
    types = TypeAssignment(u=state.u, q=q)
    w_exp = assign_treatments(plan, n, substream(seed, Stream.TREATMENT))

    y = np.zeros((n, T + 1))
    zeros = np.zeros(n, dtype=np.int8)
    y[:, 0] = play_round(state, zeros, kernel, substream(seed, Stream.ROUND, 0))
    for t in range(1, tw + 1):
        y[:, t] = play_round(state, zeros, kernel, substream(seed, Stream.ROUND, t))
    warm = state.mood.copy()

    ws = {
        "control": np.zeros((n, T), dtype=np.int8),
        "treatment": np.concatenate([np.zeros((n, tw)), np.ones((n, T - tw))], axis=1).astype(np.int8),
        "experiment": w_exp,
    }
    panels = {}
    for name, w in ws.items():
        st = state.copy()
        yy = y.copy()
        for t in range(tw + 1, T + 1):
            yy[:, t] = play_round(st, w[:, t - 1], kernel, substream(seed, Stream.ROUND, t))
        panels[name] = Panel(yy, w, q, name, seed, tw)
    meta = {"engine": "agentsim", "common_random_numbers": ["round_streams"]}
    return WorldSet(panels["control"], panels["treatment"], panels["experiment"], types,
                    warm.astype(float), meta)
