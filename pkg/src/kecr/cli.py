"""Command line front: build the graph, run the training phases, score
a corpus, chat in the terminal, or serve the session API.

Every subcommand validates its input paths up front and exits with
status 2 naming the first missing one, so batch scripts fail loudly
instead of deep inside a load.  KECR_LOG sets the log level
(DEBUG/INFO/WARNING/...).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import service, trainer
from .config import Config, config_from_dict, load_config, override
from .context import UtteranceEmbedder
from .corpus import load_corpus
from .kg import expand_graph, load_graph, load_triples, save_graph
from .params import load_checkpoint
from .realizer import TemplateSet

log = logging.getLogger("kecr.cli")


class MissingFileError(Exception):
    def __init__(self, path):
        super().__init__(f"no such file: {path}")
        self.path = path


def _require(path):
    if path is not None and not os.path.exists(path):
        raise MissingFileError(path)
    return path


def _load_cfg(args) -> Config:
    cfg = load_config(_require(args.config)) if args.config else Config()
    if getattr(args, "seed", None) is not None:
        cfg = override(cfg, seed=args.seed)
    return cfg


def _load_templates(args) -> TemplateSet:
    if getattr(args, "templates", None):
        return TemplateSet.load(_require(args.templates))
    return TemplateSet.bundled()


def cmd_build_kg(args) -> int:
    g = load_triples(_require(args.triples), _require(args.aliases))
    g = expand_graph(g)
    save_graph(g, args.out)
    print(f"entities: {len(g.entities)}")
    print(f"relations: {len(g.relations)}")
    print(f"triples: {len(g.triples)}")
    log.info("graph written to %s", args.out)
    return 0


def _run_training(args, joint: bool) -> int:
    g = load_graph(_require(args.kg))
    cfg = _load_cfg(args)
    if not joint:
        cfg = override(cfg, joint_epochs=0)
    records, report = load_corpus(_require(args.corpus), g)
    log.info("loaded %d conversations (%s)", len(records), report)
    result = trainer.train_to_checkpoint(
        g, records, cfg, args.checkpoint, trace_dir=args.trace_dir
    )
    if result.pretrain_trace:
        last = result.pretrain_trace[-1]
        print(f"pretrain: {len(result.pretrain_trace)} epochs, "
              f"final L_MI {last['mean_L_MI']:.4f}")
    if result.joint_trace:
        last = result.joint_trace[-1]
        print(f"joint: {len(result.joint_trace)} epochs, "
              f"final train loss {last['train_loss']:.4f}")
    print(f"checkpoint: {args.checkpoint}")
    return 0


def cmd_pretrain(args) -> int:
    return _run_training(args, joint=False)


def cmd_train(args) -> int:
    return _run_training(args, joint=True)


def cmd_eval(args) -> int:
    g = load_graph(_require(args.kg))
    store, echo = load_checkpoint(_require(args.checkpoint))
    cfg = config_from_dict(echo)
    embedder = UtteranceEmbedder(cfg.embed_buckets, cfg.embed_dim)
    records, _ = load_corpus(_require(args.corpus), g)
    _, _, test = trainer.split_conversations(records, cfg.seed)
    if not test:
        log.warning("test split is empty; scoring the whole corpus")
        test = records
    metrics = trainer.evaluate(g, test, store, embedder, cfg)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for key in sorted(metrics):
        print(f"{key}: {metrics[key]:.4f}")
    return 0


def _make_engine(args) -> service.Engine:
    g = load_graph(_require(args.kg))
    return service.Engine.from_checkpoint(
        _require(args.checkpoint), g,
        templates=_load_templates(args), seed=args.seed or 0,
    )


def cmd_chat(args) -> int:
    engine = _make_engine(args)
    sid = engine.open_session()
    print("type your message ('/quit' to leave)")
    while True:
        try:
            line = input("you> ")
        except EOFError:
            break
        line = line.strip()
        if not line:
            continue
        if line == "/quit":
            break
        out = engine.utterance(sid, line)
        print(f"[{out['action']}] {out['reply']}")
        if out["top_k_items"]:
            print("     candidates: " + ", ".join(out["top_k_items"][:5]))
    engine.close(sid)
    print("bye")
    return 0


def cmd_serve(args) -> int:
    engine = _make_engine(args)
    print(f"session API listening on 127.0.0.1:{args.port}")
    service.serve(engine, args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kecr",
        description="knowledge-grounded conversational recommendation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-kg", help="expand raw triples into a graph file")
    p.add_argument("--triples", required=True, help="TSV of head, relation, tail")
    p.add_argument("--aliases", default=None, help="JSONL of entity kinds and aliases")
    p.add_argument("--out", required=True, help="output graph JSON")
    p.set_defaults(func=cmd_build_kg)

    for name, func in (("pretrain", cmd_pretrain), ("train", cmd_train)):
        p = sub.add_parser(name, help=f"{name} on a corpus and write a checkpoint")
        p.add_argument("--kg", required=True, help="graph JSON from build-kg")
        p.add_argument("--corpus", required=True, help="JSONL conversations")
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--checkpoint", required=True, help="output checkpoint path")
        p.add_argument("--trace-dir", default=None, help="write loss traces here")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="score a checkpoint on the corpus test split")
    p.add_argument("--kg", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default="metrics.json", help="metrics JSON path")
    p.set_defaults(func=cmd_eval)

    for name, func in (("chat", cmd_chat), ("serve", cmd_serve)):
        p = sub.add_parser(name, help=f"{name} over a trained checkpoint")
        p.add_argument("--kg", required=True)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--templates", default=None, help="reply template JSON")
        p.add_argument("--seed", type=int, default=None, help="start-sampling seed")
        if name == "serve":
            p.add_argument("--port", type=int, default=8040)
        p.set_defaults(func=func)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("KECR_LOG", "WARNING").upper(), logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MissingFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
