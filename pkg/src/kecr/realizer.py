"""Surface realization: deterministic templates plus an optional hook
for an external generator service.

Templates live in a JSON file mapping action -> list of template
strings with {STEP1}, {STEP2}, {REL} slots.  Selection filters to
templates whose slots are all fillable, prefers those that use every
provided entity (a recommendation should name its explanation), then
rotates by seed.  Category entities render as their trimmed display
name ("GenreCategory" -> "genre"), relations as short connective
phrases ("Director" -> "directed by").

The external adapter posts {action, entities, context} as JSON and
expects {"text": ...} back; any failure falls back to the template
path and bumps an error counter, so serving never depends on the
network.
"""

from __future__ import annotations

import json
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from importlib import resources

from .corpus import ACTIONS
from .errors import RealizationError
from .kg import CATEGORY, INVERSE_SUFFIX, KnowledgeGraph, category_display_name

SLOT_RE = re.compile(r"\{(STEP1|STEP2|REL)\}")

REL_PHRASES = {
    "Director": "directed by",
    "Actor": "starring",
    "Genre": "a",
    "Time": "from",
    "Subject": "about",
}
DEFAULT_REL_PHRASE = "related to"


class TemplateSet:
    def __init__(self, by_action: dict[str, list[str]]):
        for action in ACTIONS:
            if not by_action.get(action):
                raise RealizationError(f"no templates for action {action!r}")
        self.by_action = {a: list(ts) for a, ts in by_action.items()}

    @staticmethod
    def load(path) -> "TemplateSet":
        with open(path, "r", encoding="utf-8") as fh:
            return TemplateSet(json.load(fh))

    @staticmethod
    def bundled() -> "TemplateSet":
        raw = resources.files("kecr").joinpath("data/templates.json").read_text("utf-8")
        return TemplateSet(json.loads(raw))


def relation_phrase(g: KnowledgeGraph, rel: int | None) -> str | None:
    if rel is None:
        return None
    name = g.relation(rel).name
    if name.endswith(INVERSE_SUFFIX):
        name = name[: -len(INVERSE_SUFFIX)]
    return REL_PHRASES.get(name, DEFAULT_REL_PHRASE)


def entity_surface(g: KnowledgeGraph, eid: int) -> str:
    ent = g.entity(eid)
    if ent.kind == CATEGORY:
        return category_display_name(ent.name)
    return ent.name


def realize(
    ts: TemplateSet,
    g: KnowledgeGraph,
    action: str,
    step1: int | None = None,
    step2: int | None = None,
    rel: int | None = None,
    seed: int = 0,
) -> str:
    """Deterministic template fill; raises when no template fits the slots."""
    fills = {}
    if step1 is not None:
        fills["STEP1"] = entity_surface(g, step1)
    if step2 is not None:
        fills["STEP2"] = entity_surface(g, step2)
    phrase = relation_phrase(g, rel)
    if phrase is not None:
        fills["REL"] = phrase

    eligible = []
    for tpl in ts.by_action[action]:
        needs = set(SLOT_RE.findall(tpl))
        if needs <= set(fills):
            eligible.append((tpl, needs))
    if not eligible:
        raise RealizationError(
            f"no {action!r} template fillable with slots {sorted(fills)}"
        )
    # a template that names every provided entity beats one that drops some
    entity_slots = {s for s in ("STEP1", "STEP2") if s in fills}
    full = [(tpl, needs) for tpl, needs in eligible if entity_slots <= needs]
    pool = full or eligible
    tpl, _ = pool[seed % len(pool)]
    text = SLOT_RE.sub(lambda m: fills[m.group(1)], tpl)
    if SLOT_RE.search(text):
        raise RealizationError(f"unfilled slot in template {tpl!r}")
    return text


@dataclass
class GeneratorAdapter:
    endpoint: str = ""
    timeout: float = 2.0
    enabled: bool = False
    errors: int = 0


def realize_external(
    adapter: GeneratorAdapter,
    ts: TemplateSet,
    g: KnowledgeGraph,
    action: str,
    step1: int | None = None,
    step2: int | None = None,
    rel: int | None = None,
    seed: int = 0,
    context: str = "",
) -> str:
    """Ask the configured generator for text; fall back to templates."""
    fallback = lambda: realize(ts, g, action, step1, step2, rel, seed)
    if not adapter.enabled:
        return fallback()
    entities = [entity_surface(g, v) for v in (step1, step2) if v is not None]
    body = json.dumps(
        {"action": action, "entities": entities, "context": context}
    ).encode("utf-8")
    req = urllib.request.Request(
        adapter.endpoint, data=body, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(req, timeout=adapter.timeout) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
        text = payload["text"]
        if not isinstance(text, str):
            raise ValueError("generator returned a non-string text field")
        return text
    except (urllib.error.URLError, OSError, ValueError, KeyError, json.JSONDecodeError):
        adapter.errors += 1
        return fallback()
