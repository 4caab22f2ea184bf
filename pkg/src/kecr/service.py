"""Conversational serving: a stateless model behind stateful sessions.

The checkpoint is loaded once and never mutated; each session keeps only
its DialogueState plus a transcript.  Every request runs the same
pipeline training optimized for: embed the seeker text, advance a
prediction context, choose an action, mine the belief, walk the graph
two steps, rank items, realize a reply, then commit the full round into
the recurrent state.

Start-entity sampling is seeded from (server seed, session index,
round), so a transcript replays exactly given the same inputs.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import dataclass, field, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import autodiff as ad
from .config import Config, config_from_dict
from .context import (
    DialogueState,
    UtteranceEmbedder,
    advance_context,
    combine_round,
    gru_step,
    initial_state,
    update_belief,
)
from .corpus import CHAT, QUERY, RECOMMEND
from .errors import (
    CannotStartError,
    NoNeighborsError,
    NoPathError,
    NotFoundError,
    RealizationError,
)
from .graph_encoder import encode_entities
from .kg import CATEGORY, KnowledgeGraph
from .params import ParameterStore, load_checkpoint
from .policy import executed_action, predict_action
from .preference import belief_matrix, mine_preference
from .realizer import GeneratorAdapter, TemplateSet, realize_external
from .reasoner import pick_start, rank_items, reason_two_step

log = logging.getLogger("kecr.service")

TOP_K = 10


@dataclass
class _Session:
    id: str
    index: int
    state: DialogueState
    transcript: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


class Engine:
    """Owns the frozen model and the live sessions."""

    def __init__(
        self,
        g: KnowledgeGraph,
        store: ParameterStore,
        embedder: UtteranceEmbedder,
        cfg: Config,
        templates: TemplateSet | None = None,
        seed: int = 0,
        top_k: int = TOP_K,
        adapter: GeneratorAdapter | None = None,
    ):
        self.g = g
        self.store = store
        self.embedder = embedder
        self.cfg = cfg
        self.templates = templates or TemplateSet.bundled()
        self.seed = seed
        self.top_k = top_k
        self.adapter = adapter or GeneratorAdapter()
        # entity encodings are fixed at load time; copy them out of the tape
        self.table = encode_entities(store, g, cfg.rgcn_layers, cfg.norm_mode).value.copy()
        self._sessions: dict[str, _Session] = {}
        self._counter = 0
        self._lock = threading.Lock()

    @classmethod
    def from_checkpoint(
        cls,
        path,
        g: KnowledgeGraph,
        templates: TemplateSet | None = None,
        seed: int = 0,
        adapter: GeneratorAdapter | None = None,
    ) -> "Engine":
        store, echo = load_checkpoint(path)
        cfg = config_from_dict(echo)
        embedder = UtteranceEmbedder(cfg.embed_buckets, cfg.embed_dim)
        return cls(g, store, embedder, cfg, templates=templates, seed=seed, adapter=adapter)

    # -- session bookkeeping ------------------------------------------------

    def open_session(self) -> str:
        with self._lock:
            self._counter += 1
            sid = "s%06d" % self._counter
            self._sessions[sid] = _Session(
                id=sid, index=self._counter, state=initial_state(self.cfg.embed_dim)
            )
        log.info("opened session %s", sid)
        return sid

    def _get(self, sid: str) -> _Session:
        sess = self._sessions.get(sid)
        if sess is None:
            raise NotFoundError(f"unknown session {sid!r}")
        return sess

    def close(self, sid: str) -> dict:
        with self._lock:
            if self._sessions.pop(sid, None) is None:
                raise NotFoundError(f"unknown session {sid!r}")
        log.info("closed session %s", sid)
        return {"session_id": sid, "closed": True}

    def transcript(self, sid: str) -> dict:
        sess = self._get(sid)
        with sess.lock:
            st = sess.state
            return {
                "session_id": sid,
                "transcript": list(sess.transcript),
                "state": {
                    "round": st.round,
                    "last_action": st.last_action,
                    "mentioned": [self.g.entity(v).name for v in st.mentioned],
                    "belief_size": len(st.belief),
                },
            }

    # -- the serving pipeline -----------------------------------------------

    def utterance(self, sid: str, text: str) -> dict:
        sess = self._get(sid)
        with sess.lock:
            return self._respond(sess, text)

    def _respond(self, sess: _Session, text: str) -> dict:
        g = self.g
        state = sess.state
        rng = np.random.default_rng((self.seed, sess.index, state.round))
        seed = int(rng.integers(1 << 30))

        mentions = g.lexicon.link(text)
        state = update_belief(state, mentions, self.table)
        q_hat = gru_step(self.store, state.q, self.embedder.embed(self.store, text)).value
        probs = predict_action(self.store, q_hat).value
        action = executed_action(probs)

        u = np.zeros(self.cfg.embed_dim)
        if state.belief:
            u = mine_preference(
                self.store,
                belief_matrix(list(state.belief)),
                self.cfg.gamma,
                self.cfg.damp_normalize,
            ).value

        start = None
        result = None
        item = None
        explanation = None
        if action in (QUERY, RECOMMEND):
            try:
                start = pick_start(state, g, rng)
            except CannotStartError:
                action = CHAT
        if start is not None and g.entity(start).kind == CATEGORY:
            # nothing concrete to walk from: ask about the category itself
            action = QUERY
            result = None
        elif start is not None:
            try:
                result = reason_two_step(
                    self.store, g, start, action,
                    ad.Var(probs), ad.Var(u), ad.Var(q_hat), ad.Var(self.table),
                    mentioned=set(state.mentioned),
                )
            except (NoNeighborsError, NoPathError):
                action = CHAT
                start = None

        ranked = rank_items(
            self.store, g, list(state.mentioned), probs, u, q_hat, self.table, self.top_k
        )

        reply, named = self._realize_reply(action, start, result, seed, text)
        if action == RECOMMEND and result is not None:
            step1 = result.step1[0]
            step2 = result.step2[0] if result.step2 is not None else None
            if g.is_item(step1):
                item, explanation = step1, step2
            elif step2 is not None and g.is_item(step2):
                item, explanation = step2, step1

        state = update_belief(state, named, self.table)
        x = self.embedder.embed(self.store, combine_round(text, reply))
        state = replace(advance_context(state, self.store, x), last_action=action)
        sess.state = state
        sess.transcript.append({"speaker": "seeker", "text": text})
        sess.transcript.append({"speaker": "wizard", "text": reply, "action": action})

        out = {
            "session_id": sess.id,
            "reply": reply,
            "action": action,
            "top_k_items": [g.entity(v).name for v, _ in ranked],
            "scores": [float(s) for _, s in ranked],
        }
        if start is not None:
            out["start"] = g.entity(start).name
        if result is not None:
            out["step1"] = g.entity(result.step1[0]).name
            if result.step2 is not None:
                out["step2"] = g.entity(result.step2[0]).name
        elif action == QUERY and start is not None:
            out["step1"] = g.entity(start).name
        if item is not None:
            out["item"] = g.entity(item).name
        if explanation is not None:
            out["explanation"] = g.entity(explanation).name
        return out

    def _realize_reply(self, action, start, result, seed, text) -> tuple[str, list[int]]:
        """Fill a template for the chosen action; returns the reply and the
        entity ids it names (they join the mention history)."""
        g = self.g
        step1 = step2 = rel = None
        if action == QUERY:
            step1 = result.step1[0] if result is not None else start
        elif action == RECOMMEND and result is not None:
            first = result.step1[0]
            second = result.step2[0] if result.step2 is not None else None
            if g.is_item(first) or second is None:
                step1, step2 = first, second
            else:
                # surface order is always item first, justification second
                step1, step2 = second, first
            if step1 is not None and step2 is not None:
                rel = g.relation_between(step1, step2)
        try:
            reply = realize_external(
                self.adapter, self.templates, g, action, step1, step2, rel,
                seed=seed, context=text,
            )
        except RealizationError:
            log.warning("no %r template fit; degrading to chat", action)
            reply = realize_external(
                self.adapter, self.templates, g, CHAT, seed=seed, context=text
            )
            return reply, []
        named = [v for v in (step1, step2) if v is not None]
        return reply, named


# -- HTTP front ---------------------------------------------------------------

_UTTERANCE_RE = re.compile(r"^/session/([^/\s]+)/utterance$")
_SESSION_RE = re.compile(r"^/session/([^/\s]+)$")


class Handler(BaseHTTPRequestHandler):
    engine: Engine  # bound by make_server

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send(self, code: int, obj: dict):
        body = json.dumps(obj).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> dict | None:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            obj = json.loads(raw.decode("utf-8")) if raw else None
        except (ValueError, UnicodeDecodeError):
            return None
        return obj if isinstance(obj, dict) else None

    def do_OPTIONS(self):
        self._send(204, {})

    def do_POST(self):
        if self.path == "/session":
            self._send(200, {"session_id": self.engine.open_session()})
            return
        m = _UTTERANCE_RE.match(self.path)
        if m is None:
            self._send(404, {"error": f"no such route {self.path!r}"})
            return
        body = self._read_body()
        if body is None:
            self._send(400, {"error": "request body must be a JSON object", "field": "body"})
            return
        text = body.get("text")
        if not isinstance(text, str):
            self._send(400, {"error": "missing or non-string field", "field": "text"})
            return
        try:
            self._send(200, self.engine.utterance(m.group(1), text))
        except NotFoundError as exc:
            self._send(404, {"error": str(exc)})

    def do_GET(self):
        m = _SESSION_RE.match(self.path)
        if m is None:
            self._send(404, {"error": f"no such route {self.path!r}"})
            return
        try:
            self._send(200, self.engine.transcript(m.group(1)))
        except NotFoundError as exc:
            self._send(404, {"error": str(exc)})

    def do_DELETE(self):
        m = _SESSION_RE.match(self.path)
        if m is None:
            self._send(404, {"error": f"no such route {self.path!r}"})
            return
        try:
            self._send(200, self.engine.close(m.group(1)))
        except NotFoundError as exc:
            self._send(404, {"error": str(exc)})


def make_server(engine: Engine, port: int) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (Handler,), {"engine": engine})
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def serve(engine: Engine, port: int):
    server = make_server(engine, port)
    log.info("serving on port %d", server.server_address[1])
    try:
        server.serve_forever()
    finally:
        server.server_close()
