"""Byte-pair-encoding subwords and word-to-subword label alignment.

Only the first subword of each word carries the word's tag; the remaining
subwords, BOS and EOS carry the X label and are ignored by the loss.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .corpus import Tagset, TaggedSentence

__all__ = [
    "SPECIALS",
    "DEFAULT_MAX_LEN",
    "MergeTable",
    "AlignedSequence",
    "WordTags",
    "VocabTooSmall",
    "WordTooLong",
    "LengthMismatch",
    "train_bpe",
    "encode_word",
    "align",
    "project",
    "save_merge_table",
    "load_merge_table",
]

PAD, UNK, BOS, EOS = "[PAD]", "[UNK]", "[BOS]", "[EOS]"
SPECIALS = (PAD, UNK, BOS, EOS)
DEFAULT_MAX_LEN = 128


class VocabTooSmall(ValueError):
    pass


class WordTooLong(ValueError):
    def __init__(self, word: str, n_subwords: int, max_len: int, sentence_index: Optional[int] = None):
        self.word = word
        self.n_subwords = n_subwords
        self.max_len = max_len
        self.sentence_index = sentence_index
        where = f"sentence {sentence_index}: " if sentence_index is not None else ""
        super().__init__(
            f"{where}word {word!r} needs {n_subwords} subwords, limit is {max_len - 2}"
        )


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MergeTable:
    """Subword vocabulary plus merges in rank order.

    Vocabulary entries are raw strings; the continuation marker is only added
    when rendering non-initial pieces, so a piece has the same id wherever it
    occurs in a word.
    """

    vocab: Dict[str, int]
    merges: Tuple[Tuple[str, str], ...]
    continuation_marker: str = "##"
    _ranks: Dict[Tuple[str, str], int] = field(init=False, repr=False)
    _cache: Dict[str, Tuple[str, ...]] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "merges", tuple(tuple(m) for m in self.merges))
        object.__setattr__(self, "_ranks", {m: i for i, m in enumerate(self.merges)})
        object.__setattr__(self, "_cache", {})
        ids = sorted(self.vocab.values())
        if ids != list(range(len(ids))):
            raise ValueError("vocabulary ids must be dense from 0")
        for s in SPECIALS:
            if s not in self.vocab:
                raise ValueError(f"missing special {s}")
        for a, b in self.merges:
            if a + b not in self.vocab:
                raise ValueError(f"merge output {a + b!r} not in vocabulary")

    def __eq__(self, other):
        if not isinstance(other, MergeTable):
            return NotImplemented
        return (
            self.vocab == other.vocab
            and self.merges == other.merges
            and self.continuation_marker == other.continuation_marker
        )

    def __len__(self):
        return len(self.vocab)

    @property
    def specials(self) -> Dict[str, int]:
        return {s: self.vocab[s] for s in SPECIALS}

    @property
    def pad_id(self) -> int:
        return self.vocab[PAD]

    @property
    def unk_id(self) -> int:
        return self.vocab[UNK]

    @property
    def bos_id(self) -> int:
        return self.vocab[BOS]

    @property
    def eos_id(self) -> int:
        return self.vocab[EOS]

    def pieces(self, word: str) -> Tuple[str, ...]:
        """Raw subword strings for ``word`` (no continuation marker)."""
        hit = self._cache.get(word)
        if hit is None:
            hit = _apply_merges(word, self._ranks)
            self._cache[word] = hit
        return hit

    def tokenize(self, word: str) -> List[str]:
        """Subword strings with the continuation marker on non-initial pieces."""
        ps = self.pieces(word)
        return [ps[0]] + [self.continuation_marker + p for p in ps[1:]]

    def id_of(self, piece: str) -> int:
        return self.vocab.get(piece, self.unk_id)


def _apply_merges(word: str, ranks: Dict[Tuple[str, str], int]) -> Tuple[str, ...]:
    symbols = list(word)
    while len(symbols) > 1:
        best = None
        for pair in zip(symbols, symbols[1:]):
            r = ranks.get(pair)
            if r is not None and (best is None or r < best[0]):
                best = (r, pair)
        if best is None:
            break
        symbols = _merge_pair(symbols, best[1])
    return tuple(symbols)


def _merge_pair(symbols: List[str], pair: Tuple[str, str]) -> List[str]:
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(pair[0] + pair[1])
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def train_bpe(corpus_words: Iterable[str], vocab_size: int) -> MergeTable:
    """Learn merges until ``vocab_size`` entries exist or no pair occurs twice.

    The most frequent adjacent pair wins; ties go to the lexicographically
    smallest pair.  Merges never cross word boundaries.
    """
    freqs = Counter(corpus_words)
    for w in freqs:
        if not w or any(ch.isspace() for ch in w):
            raise ValueError(f"invalid word {w!r}")
    chars = sorted({ch for w in freqs for ch in w})
    if vocab_size <= len(chars) + len(SPECIALS):
        raise VocabTooSmall(
            f"vocab_size={vocab_size} leaves no room for merges "
            f"({len(chars)} characters + {len(SPECIALS)} specials)"
        )
    vocab: Dict[str, int] = {}
    for s in list(SPECIALS) + chars:
        vocab.setdefault(s, len(vocab))
    words = {w: list(w) for w in freqs}
    merges: List[Tuple[str, str]] = []

    while len(vocab) < vocab_size:
        pairs: Counter = Counter()
        for w, syms in words.items():
            f = freqs[w]
            for pair in zip(syms, syms[1:]):
                pairs[pair] += f
        candidates = [(-c, p) for p, c in pairs.items() if c >= 2 and p[0] + p[1] not in SPECIALS]
        if not candidates:
            break
        _, best = min(candidates)
        merges.append(best)
        vocab.setdefault(best[0] + best[1], len(vocab))
        for w, syms in words.items():
            if len(syms) > 1:
                words[w] = _merge_pair(syms, best)
    return MergeTable(vocab, tuple(merges))


def encode_word(word: str, merges: MergeTable) -> List[int]:
    if not word:
        raise ValueError("empty word")
    return [merges.id_of(p) for p in merges.pieces(word)]


def save_merge_table(table: MergeTable, vocab_path, merges_path) -> None:
    """Vocabulary: one entry per line, line index = id.  Merges: ``left right`` per line."""
    vocab_text, merges_text = merge_table_to_text(table)
    Path(vocab_path).write_bytes(vocab_text.encode("utf-8"))
    Path(merges_path).write_bytes(merges_text.encode("utf-8"))


def load_merge_table(vocab_path, merges_path) -> MergeTable:
    return merge_table_from_text(
        Path(vocab_path).read_bytes().decode("utf-8"),
        Path(merges_path).read_bytes().decode("utf-8"),
    )


def merge_table_to_text(table: MergeTable) -> Tuple[str, str]:
    by_id = sorted(table.vocab.items(), key=lambda kv: kv[1])
    return (
        "".join(s + "\n" for s, _ in by_id),
        "".join(f"{a} {b}\n" for a, b in table.merges),
    )


def merge_table_from_text(vocab_text: str, merges_text: str) -> MergeTable:
    vocab: Dict[str, int] = {}
    lines = vocab_text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for line in lines:
        if line in vocab:
            raise ValueError(f"duplicate vocabulary entry {line!r}")
        vocab[line] = len(vocab)
    merges = []
    for line in merges_text.split("\n"):
        if not line:
            continue
        parts = line.split(" ")
        if len(parts) != 2:
            raise ValueError(f"bad merge line {line!r}")
        merges.append((parts[0], parts[1]))
    return MergeTable(vocab, tuple(merges))


@dataclass(frozen=True, eq=False)
class AlignedSequence:
    """BOS + word subwords + EOS.  ``token_of`` is None for BOS/EOS."""

    subword_ids: np.ndarray
    labels: np.ndarray
    token_of: Tuple[Optional[int], ...]
    attention_mask: np.ndarray
    x_label: int
    n_words: int
    truncated: int = 0

    def __len__(self):
        return len(self.subword_ids)

    @property
    def label_mask(self) -> np.ndarray:
        """True where the CRF sees a label (first subword of a kept word)."""
        return self.labels != self.x_label

    @property
    def first_subword(self) -> List[int]:
        return [i for i, lab in enumerate(self.labels) if lab != self.x_label]


def align(
    sentence: TaggedSentence,
    merges: MergeTable,
    tagset: Tagset,
    max_len: int = DEFAULT_MAX_LEN,
) -> AlignedSequence:
    """Encode words one by one and give X to every non-initial subword.

    Sentences too long for ``max_len`` lose trailing whole words; the number of
    dropped words is stored in ``truncated``.
    """
    if max_len < 3:
        raise ValueError("max_len must be at least 3")
    x = tagset.x_id
    ids = [merges.bos_id]
    labels = [x]
    token_of: List[Optional[int]] = [None]
    kept = 0
    for i, (word, tag) in enumerate(zip(sentence.tokens, sentence.tags)):
        enc = encode_word(word, merges)
        if len(enc) > max_len - 2:
            raise WordTooLong(word, len(enc), max_len)
        if len(ids) + len(enc) + 1 > max_len:
            break
        ids += enc
        labels += [tag] + [x] * (len(enc) - 1)
        token_of += [i] * len(enc)
        kept += 1
    ids.append(merges.eos_id)
    labels.append(x)
    token_of.append(None)
    return AlignedSequence(
        subword_ids=np.asarray(ids, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.int64),
        token_of=tuple(token_of),
        attention_mask=np.ones(len(ids), dtype=bool),
        x_label=x,
        n_words=len(sentence),
        truncated=len(sentence) - kept,
    )


class WordTags(NamedTuple):
    tags: List[int]
    coerced: int  # first-subword positions where X was predicted
    truncated: int  # words beyond the aligned window, filled with O


def project(aligned: AlignedSequence, subword_predictions: Sequence[int]) -> WordTags:
    """Read one tag per word off its first subword."""
    preds = list(subword_predictions)
    if len(preds) != len(aligned):
        raise LengthMismatch(f"{len(preds)} predictions for {len(aligned)} subwords")
    tags = [0] * aligned.n_words
    coerced = 0
    prev = None
    for pos, w in enumerate(aligned.token_of):
        if w is None or w == prev:
            continue
        prev = w
        p = int(preds[pos])
        if p == aligned.x_label:
            coerced += 1
            p = 0
        tags[w] = p
    return WordTags(tags, coerced, aligned.truncated)
