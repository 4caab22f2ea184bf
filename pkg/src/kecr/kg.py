"""Knowledge graph store: TSV ingestion, bidirectional expansion, neighbor index.

Triples arrive as head<TAB>relation<TAB>tail over a fixed retained
relation vocabulary.  Expansion adds one inverse relation per forward
relation (all triples reversed), plus a Belong relation linking every
attribute value to a per-relation category entity.  Belong itself gets
no inverse: the stated triple budget after expansion is
2*|forward| + |attribute values|, and the closure invariant quantifies
over invertible relations only, so category entities act purely as
question subjects rather than walkable hubs.

Entity and relation ids are dense and assigned in first-appearance
order, which makes loading the same files twice reproduce identical ids.
"""

from __future__ import annotations

import json
import logging
import string
from dataclasses import dataclass, field

from .errors import NotFoundError, ParseError, RejectedRelationError

log = logging.getLogger(__name__)

ITEM = "item"
ATTRIBUTE = "attribute"
CATEGORY = "category"
KINDS = (ITEM, ATTRIBUTE, CATEGORY)

RETAINED_RELATIONS = ("Actor", "Director", "Time", "Genre", "Subject")
BELONG = "Belong"
INVERSE_SUFFIX = "_inv"
CATEGORY_SUFFIX = "Category"

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


def normalize_tokens(text: str) -> list[str]:
    """Lowercase, replace punctuation with spaces, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


@dataclass(frozen=True)
class Entity:
    id: int
    name: str
    kind: str


@dataclass(frozen=True)
class Relation:
    id: int
    name: str
    inverse_of: int | None = None


class Lexicon:
    """Alias strings mapped to entity ids for longest-match-first linking.

    Aliases and scanned text share one normalization, so 'Annabelle.'
    in running text still hits the 'annabelle' alias.  When two aliases
    normalize identically the smaller entity id wins.
    """

    def __init__(self):
        self._by_tokens: dict[tuple[str, ...], int] = {}
        self._max_len = 0

    def add(self, alias: str, entity_id: int):
        toks = tuple(normalize_tokens(alias))
        if not toks:
            return
        prev = self._by_tokens.get(toks)
        if prev is None or entity_id < prev:
            self._by_tokens[toks] = entity_id
        self._max_len = max(self._max_len, len(toks))

    def copy(self) -> "Lexicon":
        other = Lexicon()
        other._by_tokens = dict(self._by_tokens)
        other._max_len = self._max_len
        return other

    def entries(self) -> list[tuple[str, int]]:
        """(alias string, entity id) pairs, sorted for stable output."""
        return sorted((" ".join(toks), eid) for toks, eid in self._by_tokens.items())

    def __len__(self):
        return len(self._by_tokens)

    def link(self, text: str) -> list[int]:
        """Every alias occurrence in textual order; longest match first.

        The scan is greedy left to right: after a match it resumes past
        the matched span, so repeated names yield repeated mentions and
        overlapping candidates resolve to the earlier, longer one.
        """
        toks = normalize_tokens(text)
        found: list[int] = []
        i = 0
        n = len(toks)
        while i < n:
            hit = None
            for width in range(min(self._max_len, n - i), 0, -1):
                ent = self._by_tokens.get(tuple(toks[i : i + width]))
                if ent is not None:
                    hit = (ent, width)
                    break
            if hit is None:
                i += 1
            else:
                found.append(hit[0])
                i += hit[1]
        return found


@dataclass
class GraphReport:
    """Ingestion diagnostics; exit status is never tied to these."""

    duplicate_triples: int = 0
    self_loops_dropped: int = 0
    unknown_alias_entities: int = 0


class KnowledgeGraph:
    def __init__(self):
        self.entities: list[Entity] = []
        self.relations: list[Relation] = []
        self.triples: set[tuple[int, int, int]] = set()
        self._name_to_id: dict[str, int] = {}
        self._rel_name_to_id: dict[str, int] = {}
        # v -> r -> sorted list of neighbor ids
        self._nbr: dict[int, dict[int, list[int]]] = {}
        self.lexicon = Lexicon()
        self.report = GraphReport()

    # -- construction ------------------------------------------------------

    def add_entity(self, name: str, kind: str) -> int:
        if kind not in KINDS:
            raise ParseError("<entity>", 0, f"unknown entity kind {kind!r}")
        existing = self._name_to_id.get(name)
        if existing is not None:
            return existing
        eid = len(self.entities)
        self.entities.append(Entity(eid, name, kind))
        self._name_to_id[name] = eid
        return eid

    def add_relation(self, name: str, inverse_of: int | None = None) -> int:
        existing = self._rel_name_to_id.get(name)
        if existing is not None:
            return existing
        rid = len(self.relations)
        self.relations.append(Relation(rid, name, inverse_of))
        self._rel_name_to_id[name] = rid
        return rid

    def add_triple(self, h: int, r: int, t: int) -> bool:
        """Insert with set semantics; self-loops are dropped. True if new."""
        if h == t:
            self.report.self_loops_dropped += 1
            return False
        key = (h, r, t)
        if key in self.triples:
            self.report.duplicate_triples += 1
            return False
        self.triples.add(key)
        bucket = self._nbr.setdefault(h, {}).setdefault(r, [])
        # insertion keeps the per-relation list sorted by entity id
        lo, hi = 0, len(bucket)
        while lo < hi:
            mid = (lo + hi) // 2
            if bucket[mid] < t:
                lo = mid + 1
            else:
                hi = mid
        bucket.insert(lo, t)
        return True

    # -- lookups -----------------------------------------------------------

    def entity(self, eid: int) -> Entity:
        if not (0 <= eid < len(self.entities)):
            raise NotFoundError(f"no entity with id {eid}")
        return self.entities[eid]

    def entity_id(self, name: str) -> int:
        try:
            return self._name_to_id[name]
        except KeyError:
            raise NotFoundError(f"no entity named {name!r}") from None

    def has_entity(self, name: str) -> bool:
        return name in self._name_to_id

    def relation(self, rid: int) -> Relation:
        if not (0 <= rid < len(self.relations)):
            raise NotFoundError(f"no relation with id {rid}")
        return self.relations[rid]

    def relation_id(self, name: str) -> int:
        try:
            return self._rel_name_to_id[name]
        except KeyError:
            raise NotFoundError(f"no relation named {name!r}") from None

    def n_entities(self) -> int:
        return len(self.entities)

    def neighbors_by_relation(self, v: int, r: int) -> list[int]:
        self.entity(v)
        self.relation(r)
        return list(self._nbr.get(v, {}).get(r, ()))

    def neighbors(self, v: int) -> list[tuple[int, int]]:
        """All (entity, relation) pairs out of v, ordered by (relation id, entity id)."""
        self.entity(v)
        out: list[tuple[int, int]] = []
        buckets = self._nbr.get(v, {})
        for r in sorted(buckets):
            out.extend((t, r) for t in buckets[r])
        return out

    def neighbor_ids(self, v: int) -> list[int]:
        """Distinct neighbor entities of v, ascending id."""
        buckets = self._nbr.get(v, {})
        seen: set[int] = set()
        for ts in buckets.values():
            seen.update(ts)
        return sorted(seen)

    def is_adjacent(self, u: int, v: int) -> bool:
        return any(v in ts for ts in self._nbr.get(u, {}).values())

    def relation_between(self, u: int, v: int) -> int | None:
        """Smallest relation id carrying an edge u -> v, if any."""
        for r in sorted(self._nbr.get(u, {})):
            if v in self._nbr[u][r]:
                return r
        return None

    def common_neighbors(self, u: int, v: int) -> list[int]:
        return sorted(set(self.neighbor_ids(u)) & set(self.neighbor_ids(v)))

    def entities_of_kind(self, kind: str) -> list[int]:
        return [e.id for e in self.entities if e.kind == kind]

    def item_ids(self) -> list[int]:
        return self.entities_of_kind(ITEM)

    def category_ids(self) -> list[int]:
        return self.entities_of_kind(CATEGORY)

    def is_item(self, eid: int) -> bool:
        return self.entity(eid).kind == ITEM

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "entities": [{"name": e.name, "kind": e.kind} for e in self.entities],
            "relations": [{"name": r.name, "inverse_of": r.inverse_of} for r in self.relations],
            "triples": sorted(self.triples),
            "aliases": sorted(
                (" ".join(toks), eid) for toks, eid in self.lexicon._by_tokens.items()
            ),
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "KnowledgeGraph":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        g = cls()
        for spec in obj["entities"]:
            g.add_entity(spec["name"], spec["kind"])
        for spec in obj["relations"]:
            g.add_relation(spec["name"], spec.get("inverse_of"))
        for h, r, t in obj["triples"]:
            g.add_triple(int(h), int(r), int(t))
        for alias, eid in obj.get("aliases", []):
            g.lexicon.add(alias, int(eid))
        return g


def _read_aliases(alias_path) -> list[dict]:
    entries = []
    with open(alias_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(alias_path, line_no, f"bad JSON: {exc.msg}") from None
            if not isinstance(obj, dict) or "entity" not in obj:
                raise ParseError(alias_path, line_no, "alias entry needs an 'entity' field")
            kind = obj.get("kind")
            if kind is not None and kind not in KINDS:
                raise ParseError(alias_path, line_no, f"unknown entity kind {kind!r}")
            entries.append(
                {
                    "entity": str(obj["entity"]),
                    "kind": kind,
                    "aliases": [str(a) for a in obj.get("aliases", [])],
                }
            )
    return entries


def load_triples(path, alias_path=None) -> KnowledgeGraph:
    """Parse a TSV triple file (and optional alias JSONL) into a graph.

    Relations outside the retained vocabulary are a hard error: silent
    acceptance would let typos fork the schema.  Entity kinds come from
    the alias file when given; otherwise heads are items and tails are
    attribute values, first assignment winning.
    """
    alias_entries = _read_aliases(alias_path) if alias_path is not None else []
    kind_hint = {e["entity"]: e["kind"] for e in alias_entries if e["kind"]}

    g = KnowledgeGraph()
    retained = set(RETAINED_RELATIONS)
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3 or not all(f.strip() for f in fields):
                raise ParseError(path, line_no, f"expected head<TAB>relation<TAB>tail, got {line!r}")
            head, rel, tail = (f.strip() for f in fields)
            if rel not in retained:
                raise RejectedRelationError(
                    f"{path}:{line_no}: relation {rel!r} is not one of {sorted(retained)}"
                )
            h = g.add_entity(head, kind_hint.get(head, ITEM))
            t = g.add_entity(tail, kind_hint.get(tail, ATTRIBUTE))
            r = g.add_relation(rel)
            g.add_triple(h, r, t)

    for entry in alias_entries:
        if not g.has_entity(entry["entity"]):
            g.report.unknown_alias_entities += 1
            log.warning("alias entry for unknown entity %r dropped", entry["entity"])
            continue
        eid = g.entity_id(entry["entity"])
        g.lexicon.add(entry["entity"], eid)
        for alias in entry["aliases"]:
            g.lexicon.add(alias, eid)
    if g.report.duplicate_triples or g.report.self_loops_dropped:
        log.warning(
            "triple ingestion: %d duplicates collapsed, %d self-loops dropped",
            g.report.duplicate_triples,
            g.report.self_loops_dropped,
        )
    return g


def expand_graph(g: KnowledgeGraph) -> KnowledgeGraph:
    """Return a new graph with inverse relations, categories, Belong links.

    The input is never mutated.  Inverse relations take a block of ids
    after the forward ones (so Belong sorts after every inverse), each
    forward triple gains its reversal, category entities exist for all
    five retained relation names even without instances, and every
    distinct (relation, tail) pair contributes one Belong triple.
    """
    out = KnowledgeGraph()
    for e in g.entities:
        out.add_entity(e.name, e.kind)

    forward = list(g.relations)
    for r in forward:
        out.add_relation(r.name)
    for r in forward:
        inv_id = out.add_relation(r.name + INVERSE_SUFFIX)
        out.relations[r.id] = Relation(r.id, r.name, inv_id)
        out.relations[inv_id] = Relation(inv_id, r.name + INVERSE_SUFFIX, r.id)
        out._rel_name_to_id[r.name] = r.id
    belong = out.add_relation(BELONG)

    category_names = list(RETAINED_RELATIONS) + [
        r.name for r in forward if r.name not in RETAINED_RELATIONS
    ]
    cat_ids = {name: out.add_entity(name + CATEGORY_SUFFIX, CATEGORY) for name in category_names}

    for h, r, t in sorted(g.triples):
        out.add_triple(h, r, t)
        out.add_triple(t, out.relations[r].inverse_of, h)
    seen_values = set()
    for h, r, t in sorted(g.triples):
        key = (g.relations[r].name, t)
        if key not in seen_values:
            seen_values.add(key)
            out.add_triple(t, belong, cat_ids[key[0]])

    out.lexicon = g.lexicon.copy()
    for name, cid in cat_ids.items():
        # "genre" in running text should hit GenreCategory
        out.lexicon.add(name, cid)
        out.lexicon.add(name + CATEGORY_SUFFIX, cid)
    return out


def category_display_name(name: str) -> str:
    """Surface form for a category entity: 'GenreCategory' -> 'genre'."""
    if name.endswith(CATEGORY_SUFFIX):
        name = name[: -len(CATEGORY_SUFFIX)]
    return name.lower()


GRAPH_FORMAT_VERSION = 1


def save_graph(g: KnowledgeGraph, path):
    """Persist an expanded graph as sorted JSON; ids survive the round trip."""
    obj = {
        "format_version": GRAPH_FORMAT_VERSION,
        "entities": [[e.name, e.kind] for e in g.entities],
        "relations": [[r.name, r.inverse_of] for r in g.relations],
        "triples": sorted(list(t) for t in g.triples),
        "aliases": g.lexicon.entries(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True)


def load_graph(path) -> KnowledgeGraph:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    version = obj.get("format_version")
    if version != GRAPH_FORMAT_VERSION:
        raise ParseError(str(path), 0, f"unsupported graph format_version {version!r}")
    g = KnowledgeGraph()
    for name, kind in obj["entities"]:
        g.add_entity(name, kind)
    for name, inverse_of in obj["relations"]:
        rid = g.add_relation(name)
        g.relations[rid] = Relation(rid, name, inverse_of)
    for h, r, t in obj["triples"]:
        g.add_triple(int(h), int(r), int(t))
    for alias, eid in obj["aliases"]:
        g.lexicon.add(alias, int(eid))
    return g
