"""Ranking, diversity, and overlap metrics.

Tokenization throughout is plain whitespace splitting of the raw text;
no lowercasing or punctuation stripping, so the numbers are a pure
function of the strings handed in.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

BLEU_EPS = 1e-9
BLEU_MAX_N = 4


def recall_at_k(ranked: Sequence[int], gold: int, k: int) -> int:
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    return 1 if gold in list(ranked)[:k] else 0


def _ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def distinct_n(texts: Sequence[str], n: int) -> float:
    """Unique n-grams across the whole set over total n-gram count."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    unique: set[tuple[str, ...]] = set()
    total = 0
    for text in texts:
        grams = _ngrams(text.split(), n)
        unique.update(grams)
        total += len(grams)
    return len(unique) / total if total else 0.0


def bleu(candidate: str, references: Sequence[str]) -> float:
    """n <= 4, uniform weights, brevity penalty, add-epsilon smoothing.

    Epsilon rides on both numerator and denominator, so precision levels
    the candidate is too short to populate contribute a neutral 1.0 and
    bleu(x, [x]) is exactly 1.
    """
    cand = candidate.split()
    if not cand or not references:
        return 0.0
    refs = [r.split() for r in references]

    log_sum = 0.0
    for n in range(1, BLEU_MAX_N + 1):
        cand_counts = Counter(_ngrams(cand, n))
        max_ref: Counter = Counter()
        for ref in refs:
            for gram, cnt in Counter(_ngrams(ref, n)).items():
                if cnt > max_ref[gram]:
                    max_ref[gram] = cnt
        matched = sum(min(cnt, max_ref[gram]) for gram, cnt in cand_counts.items())
        total = sum(cand_counts.values())
        log_sum += math.log((matched + BLEU_EPS) / (total + BLEU_EPS))
    geo = math.exp(log_sum / BLEU_MAX_N)

    c = len(cand)
    # closest reference length; ties go to the shorter reference
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * geo


def corpus_metrics(
    rankings: Sequence[tuple[Sequence[int], int]],
    generated: Sequence[str],
    gold_texts: Sequence[str],
) -> dict:
    """The metrics bundle the eval command writes out.

    rankings pairs each labeled recommend round's ranked item ids with
    its gold item; generated and gold_texts align one reply per round.
    """
    out = {
        "recall@1": 0.0,
        "recall@10": 0.0,
        "dist-2": distinct_n(generated, 2),
        "dist-3": distinct_n(generated, 3),
        "dist-4": distinct_n(generated, 4),
        "bleu": 0.0,
    }
    if rankings:
        out["recall@1"] = float(
            sum(recall_at_k(r, gold, 1) for r, gold in rankings) / len(rankings)
        )
        out["recall@10"] = float(
            sum(recall_at_k(r, gold, 10) for r, gold in rankings) / len(rankings)
        )
    if generated and gold_texts:
        scores = [bleu(c, [ref]) for c, ref in zip(generated, gold_texts)]
        out["bleu"] = float(sum(scores) / len(scores))
    return out
