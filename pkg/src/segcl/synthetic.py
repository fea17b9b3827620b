"""Two-class synthetic corpus whose classes differ only in event-skeleton motif.

Class ``chain``: blocks ``E0 v1 E1. E1 v2 E2. ...`` link entities through a chain of
distinct predicates. Class ``star``: every block reuses one predicate, which becomes
a hub. With m blocks both classes give 2m+1 nodes and 3m edges.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
VERBS = (
    "meets calls visits helps joins praises hires elects beats chases teaches "
    "catches fights supports attacks acquires criticizes defeats sells buys"
).split()


def name_pool(n: int, rng: np.random.Generator) -> list[str]:
    """Distinct capitalized CVCVCV names (vowel endings keep them out of the verb rules)."""
    out: list[str] = []
    seen = set()
    while len(out) < n:
        s = "".join(rng.choice(list(_CONSONANTS)) + rng.choice(list(_VOWELS)) for _ in range(3))
        if s not in seen:
            seen.add(s)
            out.append(s.capitalize())
    return out


def chain_document(names: list[str], verbs: list[str]) -> str:
    return " ".join(f"{a} {v} {b}." for a, v, b in zip(names, verbs, names[1:]))


def star_document(names: list[str], verb: str) -> str:
    return " ".join(f"{a} {verb} {b}." for a, b in zip(names[::2], names[1::2]))


def generate(
    n_docs: int = 200,
    seed: int = 0,
    min_blocks: int = 3,
    max_blocks: int = 5,
    n_names: int = 80,
) -> list[tuple[str, str, str]]:
    """(doc_id, label, text) triples, classes alternating so the corpus is balanced."""
    rng = np.random.default_rng(seed)
    names = name_pool(n_names, rng)
    rows = []
    for k in range(n_docs):
        m = int(rng.integers(min_blocks, max_blocks + 1))
        if k % 2 == 0:
            ents = [names[i] for i in rng.choice(n_names, size=m + 1, replace=False)]
            verbs = [VERBS[i] for i in rng.choice(len(VERBS), size=m, replace=False)]
            rows.append((f"doc{k:04d}", "chain", chain_document(ents, verbs)))
        else:
            ents = [names[i] for i in rng.choice(n_names, size=2 * m, replace=False)]
            verb = VERBS[int(rng.integers(len(VERBS)))]
            rows.append((f"doc{k:04d}", "star", star_document(ents, verb)))
    return rows


def write_corpus(path: str | Path, n_docs: int = 200, seed: int = 0) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc_id, label, text in generate(n_docs, seed):
            fh.write(f"{doc_id}\t{label}\t{text}\n")
    return path
