from .kernel import BehaviorKernel, MoodRule, mood_bucket
from .platform import (
    AgentSimConfig,
    Persona,
    PlatformState,
    Thread,
    act,
    apply_treatment,
    init_platform,
    play_round,
    run_platform,
    sample_feed,
    sample_feeds,
    user_act,
)

__all__ = [
    "AgentSimConfig",
    "BehaviorKernel",
    "MoodRule",
    "Persona",
    "PlatformState",
    "Thread",
    "act",
    "apply_treatment",
    "init_platform",
    "mood_bucket",
    "play_round",
    "run_platform",
    "sample_feed",
    "sample_feeds",
    "user_act",
]
