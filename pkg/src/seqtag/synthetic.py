"""Deterministic toy corpora whose entities are fully determined by lexicon.

Entity words never occur as filler, and fillers never occur inside entities,
so a model that memorises the lexicon tags held-out sentences perfectly.
"""
from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import numpy as np

from .corpus import PEYMA, Corpus, TaggedSentence, Tagset

__all__ = ["FILLERS", "ENTITY_LEXICON", "make_corpus", "filler_sentence"]

FILLERS = (
    "the", "a", "said", "that", "in", "on", "with", "from", "reported", "about",
    "was", "will", "visit", "today", "news", "meeting", "market", "agreed", "and", "of",
)

# One- and two-word entries per Peyma class.
ENTITY_LEXICON: Dict[str, Tuple[Tuple[str, ...], ...]] = {
    "DAT": (("monday",), ("march", "fifth"), ("last", "year")),
    "LOC": (("tehran",), ("shiraz",), ("caspian", "sea")),
    "MON": (("dollars",), ("ten", "rials"), ("euros",)),
    "ORG": (("unesco",), ("melli", "bank"), ("parliament",)),
    "PCT": (("percent",), ("half", "percent")),
    "PER": (("ali",), ("sara", "ahmadi"), ("reza",)),
    "TIM": (("noon",), ("eight", "oclock")),
}


def make_corpus(
    n_sentences: int,
    seed: int = 0,
    tagset: Tagset = PEYMA,
    lexicon: Dict[str, Sequence[Sequence[str]]] = ENTITY_LEXICON,
    max_entities: int = 3,
) -> Corpus:
    """Sentences of 1-4 fillers, then up to ``max_entities`` entities each
    followed by 1-3 fillers; entities never touch, so B-/I- are unambiguous."""
    rng = np.random.default_rng(seed)
    classes = [c for c in tagset.classes if c in lexicon]
    sentences: List[TaggedSentence] = []
    for _ in range(n_sentences):
        tokens: List[str] = []
        tags: List[int] = []

        def fill(lo, hi):
            for _ in range(int(rng.integers(lo, hi + 1))):
                tokens.append(FILLERS[int(rng.integers(len(FILLERS)))])
                tags.append(0)

        fill(1, 4)
        for _ in range(int(rng.integers(1, max_entities + 1))):
            cls = classes[int(rng.integers(len(classes)))]
            entry = lexicon[cls][int(rng.integers(len(lexicon[cls])))]
            for j, word in enumerate(entry):
                tokens.append(word)
                tags.append(tagset.begin_id(cls) if j == 0 else tagset.inside_id(cls))
            fill(1, 3)
        sentences.append(TaggedSentence(tuple(tokens), tuple(tags)))
    return Corpus(tagset, tuple(sentences), f"synthetic(n={n_sentences}, seed={seed})")


def filler_sentence(length: int, seed: int = 0) -> List[str]:
    rng = np.random.default_rng(seed)
    return [FILLERS[int(i)] for i in rng.integers(len(FILLERS), size=length)]
