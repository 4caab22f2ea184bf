"""Dialogue corpus: JSONL loading, entity linking, and label derivation.

Conversations alternate seeker/wizard turns starting with the seeker;
loading repairs violations (consecutive same-speaker turns merge with a
space, a leading wizard turn gets an empty seeker turn in front) so the
rest of the system can rely on the round structure.

Wizard turns carry an action label.  Explicit labels in the data always
win; derivation only fills gaps:
  recommend  at least one item-kind mention
  query      else, an attribute/category mention or text ending in '?'
  chat       otherwise

Reasoning labels name the supervised two-hop walk for a wizard turn:
start is the most recent previously mentioned entity, the first target
is the turn's first mention adjacent to it, the second target the first
mention adjacent to that.  When the wizard names an item two hops away
and nothing adjacent, the bridging attribute becomes the first target
and the item the second.  Turns where no target is derivable are skipped.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .errors import ParseError
from .kg import CATEGORY, ITEM, KnowledgeGraph

log = logging.getLogger(__name__)

SEEKER = "seeker"
WIZARD = "wizard"

ACTIONS = ("query", "recommend", "chat")
QUERY, RECOMMEND, CHAT = ACTIONS


@dataclass
class Turn:
    speaker: str
    text: str
    entities: list[int] = field(default_factory=list)
    action: str | None = None


@dataclass
class ConversationRecord:
    id: str
    turns: list[Turn]


@dataclass
class Round:
    """One seeker/wizard exchange. A trailing seeker turn has wizard=None."""

    index: int
    seeker: Turn
    wizard: Turn | None


@dataclass
class ReasoningLabel:
    turn_index: int
    start: int
    first_target: int
    second_target: int | None


@dataclass
class CorpusReport:
    conversations: int = 0
    dropped_mentions: int = 0
    merged_turns: int = 0
    inserted_leading_turns: int = 0


def _repair(turns: list[Turn], report: CorpusReport) -> list[Turn]:
    if not turns:
        return turns
    if turns[0].speaker == WIZARD:
        turns = [Turn(SEEKER, "")] + turns
        report.inserted_leading_turns += 1
    out: list[Turn] = []
    for t in turns:
        if out and out[-1].speaker == t.speaker:
            prev = out[-1]
            prev.text = (prev.text + " " + t.text).strip()
            prev.entities.extend(t.entities)
            if prev.action is None:
                prev.action = t.action
            report.merged_turns += 1
        else:
            out.append(t)
    return out


def load_corpus(path, g: KnowledgeGraph) -> tuple[list[ConversationRecord], CorpusReport]:
    """Parse conversations; resolve or link mentions against the graph.

    A turn with an explicit "entities" list has its names resolved by
    canonical name (unresolvable ones are dropped, keeping the text);
    without the field, mentions come from alias linking over the text.
    """
    report = CorpusReport()
    records: list[ConversationRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"bad JSON: {exc.msg}") from None
            if "id" not in obj or "turns" not in obj:
                raise ParseError(path, line_no, "conversation needs 'id' and 'turns'")
            turns: list[Turn] = []
            for k, spec in enumerate(obj["turns"]):
                speaker = spec.get("speaker")
                if speaker not in (SEEKER, WIZARD):
                    raise ParseError(path, line_no, f"turn {k}: bad speaker {speaker!r}")
                text = str(spec.get("text", ""))
                action = spec.get("action")
                if action is not None and action not in ACTIONS:
                    raise ParseError(path, line_no, f"turn {k}: unknown action {action!r}")
                if "entities" in spec:
                    ids = []
                    for name in spec["entities"]:
                        if g.has_entity(name):
                            ids.append(g.entity_id(name))
                        else:
                            report.dropped_mentions += 1
                            log.warning("%s:%d: unresolvable mention %r", path, line_no, name)
                else:
                    ids = g.lexicon.link(text)
                turns.append(Turn(speaker, text, ids, action))
            records.append(ConversationRecord(str(obj["id"]), _repair(turns, report)))
    report.conversations = len(records)
    return records, report


def rounds(rec: ConversationRecord) -> list[Round]:
    out = []
    for i in range(0, len(rec.turns), 2):
        seeker = rec.turns[i]
        wizard = rec.turns[i + 1] if i + 1 < len(rec.turns) else None
        out.append(Round(i // 2, seeker, wizard))
    return out


def derive_action_labels(records: list[ConversationRecord], g: KnowledgeGraph):
    """Fill missing wizard action labels in place; explicit labels stay."""
    for rec in records:
        for turn in rec.turns:
            if turn.speaker != WIZARD or turn.action is not None:
                continue
            kinds = {g.entity(e).kind for e in turn.entities}
            if ITEM in kinds:
                turn.action = RECOMMEND
            elif kinds or turn.text.rstrip().endswith("?"):
                turn.action = QUERY
            else:
                turn.action = CHAT
    return records


def derive_reasoning_labels(rec: ConversationRecord, g: KnowledgeGraph) -> list[ReasoningLabel]:
    labels: list[ReasoningLabel] = []
    mentioned_before: list[int] = []
    for i, turn in enumerate(rec.turns):
        if turn.speaker == WIZARD and turn.action in (QUERY, RECOMMEND) and mentioned_before:
            start = mentioned_before[-1]
            label = _label_for_turn(g, start, turn.entities, i)
            if label is not None:
                labels.append(label)
        mentioned_before.extend(turn.entities)
    return labels


def _label_for_turn(
    g: KnowledgeGraph, start: int, mentions: list[int], turn_index: int
) -> ReasoningLabel | None:
    first = None
    for e in mentions:
        if e != start and g.is_adjacent(start, e):
            first = e
            break
    if first is not None:
        second = None
        for e in mentions:
            if e not in (start, first) and g.is_adjacent(first, e):
                second = e
                break
        return ReasoningLabel(turn_index, start, first, second)

    # No adjacent mention: widen to items two hops out, the bridging
    # attribute becomes the first target.
    for e in mentions:
        if e == start or g.entity(e).kind != ITEM:
            continue
        bridges = g.common_neighbors(start, e)
        if not bridges:
            continue
        in_turn = [b for b in mentions if b in set(bridges)]
        bridge = in_turn[0] if in_turn else bridges[0]
        return ReasoningLabel(turn_index, start, bridge, e)
    return None
