"""A small movie domain for demos and end-to-end tests.

Five domain entities (two horror films, a distractor film, their shared
genre, their shared director) plus a templated conversation generator.
Every generated dialogue walks the same arc: optional greeting, a taste
statement naming the genre and/or the anchor film, a recommendation of
Dead Silence justified by James Wan, and a short goodbye.
"""

from __future__ import annotations

import json

import numpy as np

from .kg import KnowledgeGraph, expand_graph, load_triples

TOY_TRIPLES = [
    ("Annabelle", "Genre", "Horror Film"),
    ("Annabelle", "Director", "James Wan"),
    ("Dead Silence", "Genre", "Horror Film"),
    ("Dead Silence", "Director", "James Wan"),
    ("Saw", "Director", "James Wan"),
]

TOY_ALIASES = [
    {"entity": "Annabelle", "kind": "item", "aliases": []},
    {"entity": "Dead Silence", "kind": "item", "aliases": []},
    {"entity": "Saw", "kind": "item", "aliases": []},
    {"entity": "Horror Film", "kind": "attribute", "aliases": ["horror", "horror movies"]},
    {"entity": "James Wan", "kind": "attribute", "aliases": []},
]

GREETINGS = [
    "Hi, I am looking for a movie recommendation.",
    "Hello! Any movie suggestions for me?",
    "Hi there, I need something to watch tonight.",
]

PREFERENCES = [
    "I love horror movies similar to Annabelle. I never knew a doll could be so scary.",
    "I love horror movies.",
    "Have you seen Annabelle? I want something like it.",
]

RECOMMENDS = [
    "Dead Silence might be suitable for you! It is directed by James Wan.",
    "Have you seen Dead Silence? It is directed by James Wan.",
    "I think you would enjoy Dead Silence. It is directed by James Wan.",
]

CLOSINGS = [
    "Thank you! That sounds great.",
    "Really? I would like to have a try!",
    "Thanks, I will check it out.",
]

ASK_GENRE = "What kind of genre do you like?"
GOODBYE = "You are welcome, bye!"


def write_toy_kg(directory) -> tuple[str, str]:
    triples_path = str(directory / "triples.tsv") if hasattr(directory, "joinpath") else f"{directory}/triples.tsv"
    aliases_path = triples_path.replace("triples.tsv", "aliases.jsonl")
    with open(triples_path, "w", encoding="utf-8") as fh:
        for h, r, t in TOY_TRIPLES:
            fh.write(f"{h}\t{r}\t{t}\n")
    with open(aliases_path, "w", encoding="utf-8") as fh:
        for entry in TOY_ALIASES:
            fh.write(json.dumps(entry) + "\n")
    return triples_path, aliases_path


def toy_graph(directory) -> KnowledgeGraph:
    triples_path, aliases_path = write_toy_kg(directory)
    return expand_graph(load_triples(triples_path, aliases_path))


def write_toy_corpus(path, n: int = 50, seed: int = 0) -> str:
    """Generate n templated conversations as JSONL; texts carry the mentions."""
    rng = np.random.default_rng(seed)
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(n):
            turns = []
            if rng.random() < 0.8:
                turns.append({"speaker": "seeker", "text": GREETINGS[int(rng.integers(3))]})
                turns.append({"speaker": "wizard", "text": ASK_GENRE})
            turns.append({"speaker": "seeker", "text": PREFERENCES[int(rng.integers(3))]})
            turns.append({"speaker": "wizard", "text": RECOMMENDS[int(rng.integers(3))]})
            turns.append({"speaker": "seeker", "text": CLOSINGS[int(rng.integers(3))]})
            turns.append({"speaker": "wizard", "text": GOODBYE})
            fh.write(json.dumps({"id": f"toy-{i:03d}", "turns": turns}) + "\n")
    return str(path)
