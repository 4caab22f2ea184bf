import io
import json

import pytest

from kecr.cli import main
from kecr.kg import load_graph
from kecr.params import load_checkpoint
from kecr.toydata import write_toy_corpus, write_toy_kg

FAST_CFG = """
embed_dim = 8
embed_buckets = 53
pretrain_epochs = 1
joint_epochs = 2
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    td = tmp_path_factory.mktemp("cli")
    triples, aliases = write_toy_kg(td)
    corpus = write_toy_corpus(td / "corpus.jsonl", n=20, seed=0)
    cfg = td / "fast.cfg"
    cfg.write_text(FAST_CFG)
    assert main(["build-kg", "--triples", triples, "--aliases", aliases,
                 "--out", str(td / "graph.json")]) == 0
    return {
        "dir": td,
        "triples": triples,
        "aliases": aliases,
        "corpus": corpus,
        "config": str(cfg),
        "graph": str(td / "graph.json"),
    }


@pytest.fixture(scope="module")
def checkpoint(workdir):
    path = str(workdir["dir"] / "model.json")
    code = main(["train", "--kg", workdir["graph"], "--corpus", workdir["corpus"],
                 "--config", workdir["config"], "--checkpoint", path])
    assert code == 0
    return path


class TestBuildKg:
    def test_counts_printed(self, workdir, capsys):
        out = str(workdir["dir"] / "again.json")
        assert main(["build-kg", "--triples", workdir["triples"],
                     "--aliases", workdir["aliases"], "--out", out]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "entities: 10"
        assert lines[1] == "relations: 5"
        # 5 forward + 5 inverse + 2 distinct (relation, value) pairs
        assert lines[2] == "triples: 12"

    def test_graph_round_trips(self, workdir):
        g = load_graph(workdir["graph"])
        assert [e.name for e in g.entities][:5] == [
            "Annabelle", "Horror Film", "James Wan", "Dead Silence", "Saw"
        ]
        assert g.lexicon.link("I love horror movies") == [g.entity_id("Horror Film")]
        assert g.relation_between(g.entity_id("Dead Silence"), g.entity_id("James Wan")) is not None

    def test_missing_triples_exits_2(self, workdir, capsys):
        code = main(["build-kg", "--triples", "/nope/gone.tsv", "--out", "x.json"])
        assert code == 2
        assert "/nope/gone.tsv" in capsys.readouterr().err


class TestTraining:
    def test_pretrain_writes_checkpoint_without_joint(self, workdir):
        path = str(workdir["dir"] / "pre.json")
        traces = workdir["dir"] / "pre_traces"
        code = main(["pretrain", "--kg", workdir["graph"], "--corpus", workdir["corpus"],
                     "--config", workdir["config"], "--checkpoint", path,
                     "--trace-dir", str(traces)])
        assert code == 0
        store, echo = load_checkpoint(path)
        assert echo["joint_epochs"] == 0
        assert (traces / "pretrain_trace.csv").exists()
        assert not (traces / "joint_trace.csv").exists()

    def test_train_echoes_config(self, checkpoint):
        _, echo = load_checkpoint(checkpoint)
        assert echo["embed_dim"] == 8
        assert echo["joint_epochs"] == 2
        assert echo["lambda"] == 0.3

    def test_same_seed_byte_identical(self, workdir):
        a = str(workdir["dir"] / "rep_a.json")
        b = str(workdir["dir"] / "rep_b.json")
        argv = ["train", "--kg", workdir["graph"], "--corpus", workdir["corpus"],
                "--config", workdir["config"], "--seed", "7"]
        assert main(argv + ["--checkpoint", a]) == 0
        assert main(argv + ["--checkpoint", b]) == 0
        with open(a, "rb") as fa, open(b, "rb") as fb:
            assert fa.read() == fb.read()

    def test_seed_flag_overrides_config(self, workdir):
        path = str(workdir["dir"] / "seeded.json")
        assert main(["train", "--kg", workdir["graph"], "--corpus", workdir["corpus"],
                     "--config", workdir["config"], "--seed", "9",
                     "--checkpoint", path]) == 0
        _, echo = load_checkpoint(path)
        assert echo["seed"] == 9

    def test_missing_corpus_exits_2(self, workdir, capsys):
        code = main(["train", "--kg", workdir["graph"], "--corpus", "/nope/c.jsonl",
                     "--checkpoint", "x.json"])
        assert code == 2
        assert "/nope/c.jsonl" in capsys.readouterr().err


class TestEval:
    def test_metrics_file_shape(self, workdir, checkpoint):
        out = str(workdir["dir"] / "metrics.json")
        code = main(["eval", "--kg", workdir["graph"], "--corpus", workdir["corpus"],
                     "--checkpoint", checkpoint, "--out", out])
        assert code == 0
        with open(out) as fh:
            metrics = json.load(fh)
        assert set(metrics) == {"recall@1", "recall@10", "dist-2", "dist-3", "dist-4", "bleu"}

    def test_missing_checkpoint_exits_2(self, workdir, capsys):
        code = main(["eval", "--kg", workdir["graph"], "--corpus", workdir["corpus"],
                     "--checkpoint", "/nope/ckpt.json"])
        assert code == 2
        assert "/nope/ckpt.json" in capsys.readouterr().err


class TestChat:
    def test_scripted_exchange(self, workdir, checkpoint, capsys, monkeypatch):
        monkeypatch.setattr("sys.stdin", io.StringIO("Hi, I need a movie.\n/quit\n"))
        code = main(["chat", "--kg", workdir["graph"], "--checkpoint", checkpoint,
                     "--seed", "0"])
        assert code == 0
        out = capsys.readouterr().out
        assert "[" in out and "]" in out  # an action badge was printed
        assert out.rstrip().endswith("bye")

    def test_eof_ends_cleanly(self, workdir, checkpoint, capsys, monkeypatch):
        monkeypatch.setattr("sys.stdin", io.StringIO(""))
        assert main(["chat", "--kg", workdir["graph"], "--checkpoint", checkpoint]) == 0
