"""Optional text-generation backend: prompt templates, request building, response parsing.

Nothing here is needed by the rule-based simulator.  The templates live in
assets/prompts as plain text with {field} placeholders.
"""

from __future__ import annotations

import json
import os
import re
import urllib.request
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Callable, Sequence

from .platform import SPONSORED_ID, Persona

TEMPLATE_IDS = ("human_personality", "ai_personality", "base", "treatment_thread", "seed_human", "seed_ai", "feed")
TEMPERATURE = {"human": 1.0, "ai": 0.2}
ENDPOINT_ENV = "HUMANAI_ESE_LLM_ENDPOINT"
ACTION_NAMES = ("reply", "like", "skip")
MAX_RECENT_REPLIES = 5

_FIELD = re.compile(r"\{([a-z_]+)\}")


class LLMResponseError(ValueError):
    """Response text does not follow the documented JSON schema."""


class MoodRangeError(LLMResponseError):
    pass


def load_template(template_id: str) -> str:
    if template_id not in TEMPLATE_IDS:
        raise KeyError(f"unknown template {template_id!r}")
    path = resources.files("humanai_ese.agentsim").joinpath(f"assets/prompts/{template_id}.txt")
    return path.read_text().rstrip("\n")


def fill(template: str, **fields) -> str:
    """Replace {name} placeholders that have a value; JSON braces are left alone."""
    return _FIELD.sub(lambda m: str(fields[m.group(1)]) if m.group(1) in fields else m.group(0), template)


def persona_fields(p: Persona) -> dict:
    return {"name": p.name, "age": p.age, "gender": p.gender,
            "occupation": p.occupation, "interests": ", ".join(p.interests)}


@dataclass(frozen=True)
class FeedItem:
    thread_id: int
    author: str
    text: str
    reply_count: int = 0
    recent_replies: tuple[tuple[str, str], ...] = ()


def render_thread(item: FeedItem) -> str:
    if item.thread_id == SPONSORED_ID:
        return load_template("treatment_thread")
    lines = [f"Thread #{item.thread_id} by {item.author}:", f'  "{item.text}"']
    recent = item.recent_replies[-MAX_RECENT_REPLIES:]
    if recent:
        lines.append(f"  [{item.reply_count} replies] Recent replies:")
        lines += [f'    - {who}: "{what}"' for who, what in recent]
    else:
        lines.append(f"  [{item.reply_count} replies]")
    return "\n".join(lines)


def sponsored_item() -> FeedItem:
    return FeedItem(SPONSORED_ID, "DatingSuccess", "")


@dataclass(frozen=True)
class LLMRequest:
    template_id: str
    prompt: str
    temperature: float
    unit_type: str

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def engagement_prompt(persona: Persona, feed: Sequence[FeedItem], mood: int, round_num: int,
                      match: Persona | None = None) -> str:
    if len(feed) != 4:
        raise ValueError("feed must hold 4 threads")
    match = match or persona
    parts = [
        fill(load_template("base"), round_num=round_num, prev_mood=int(mood), **persona_fields(persona)),
        load_template(f"{persona.unit_type}_personality"),
        fill(load_template("feed"), threads="\n\n".join(render_thread(f) for f in feed),
             match_name=match.name, match_age=match.age, match_occupation=match.occupation,
             match_interests=", ".join(match.interests)),
    ]
    return "\n\n".join(parts)


def llm_backend_request(template_id: str, persona: Persona, feed: Sequence[FeedItem] = (),
                        mood: int = 2, round_num: int = 1, match: Persona | None = None) -> LLMRequest:
    """Build the request for one template.  'base' yields the full engagement prompt."""
    if template_id == "base":
        text = engagement_prompt(persona, feed, mood, round_num, match)
    elif template_id in ("seed_human", "seed_ai"):
        text = fill(load_template(template_id), **persona_fields(persona))
    else:
        text = load_template(template_id)
    return LLMRequest(template_id, text, TEMPERATURE[persona.unit_type], persona.unit_type)


@dataclass(frozen=True)
class ThreadAction:
    thread_id: int
    action: str
    reply_text: str | None = None


@dataclass(frozen=True)
class LLMResponse:
    actions: tuple[ThreadAction, ...]
    mood: int
    date_interest: int
    reasoning: str = ""

    @property
    def outcome(self) -> int:
        return sum(a.action != "skip" for a in self.actions)


def _score(data: dict, key: str, err: type[LLMResponseError]) -> int:
    v = data.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
        raise LLMResponseError(f"{key} must be an integer")
    if not 0 <= v <= 4:
        raise err(f"{key}={v} outside 0..4")
    return int(v)


def parse_llm_response(text: str, expected_ids: Sequence[int] | None = None) -> LLMResponse:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise LLMResponseError(f"not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise LLMResponseError("top level must be an object")
    threads = data.get("threads")
    if not isinstance(threads, list) or len(threads) != 4:
        raise LLMResponseError("threads must be a list of 4 entries")
    actions = []
    for entry in threads:
        if not isinstance(entry, dict):
            raise LLMResponseError("thread entry must be an object")
        tid, act = entry.get("thread_id"), entry.get("action")
        if isinstance(tid, bool) or not isinstance(tid, int):
            raise LLMResponseError("thread_id must be an integer")
        if act not in ACTION_NAMES:
            raise LLMResponseError(f"unknown action {act!r}")
        reply = entry.get("reply_text")
        if act == "reply" and (not isinstance(reply, str) or not reply.strip()):
            raise LLMResponseError("reply needs a non-empty reply_text")
        actions.append(ThreadAction(tid, act, reply if act == "reply" else None))
    if expected_ids is not None and sorted(a.thread_id for a in actions) != sorted(expected_ids):
        raise LLMResponseError("thread ids do not match the feed")
    return LLMResponse(tuple(actions), _score(data, "mood_after_feed", MoodRangeError),
                       _score(data, "date_interest", MoodRangeError), str(data.get("reasoning", "")))


@dataclass
class HTTPBackend:
    """POSTs the request JSON and expects {"text": ...} back."""

    endpoint: str | None = None
    timeout: float = 60.0
    headers: dict = field(default_factory=lambda: {"Content-Type": "application/json"})

    def __post_init__(self):
        self.endpoint = self.endpoint or os.environ.get(ENDPOINT_ENV)
        if not self.endpoint:
            raise RuntimeError(f"no endpoint given and {ENDPOINT_ENV} is unset")

    def __call__(self, request: LLMRequest) -> str:
        req = urllib.request.Request(self.endpoint, data=request.to_json().encode(), headers=self.headers)
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            body = json.loads(resp.read().decode())
        if "text" not in body:
            raise LLMResponseError("backend reply lacks a text field")
        return body["text"]


def query(backend: Callable[[LLMRequest], str], persona: Persona, feed: Sequence[FeedItem],
          mood: int, round_num: int, match: Persona | None = None) -> LLMResponse:
    """One engagement call: build, send, parse."""
    req = llm_backend_request("base", persona, feed, mood, round_num, match)
    return parse_llm_response(backend(req), [f.thread_id for f in feed])
