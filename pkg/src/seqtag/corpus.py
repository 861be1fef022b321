"""BIO-tagged corpora in CoNLL column format: parsing, validation, folds, statistics."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "Tagset",
    "TaggedSentence",
    "Corpus",
    "FoldSplit",
    "Violation",
    "CorpusStats",
    "CorpusError",
    "MalformedLine",
    "UnknownTag",
    "EmptyCorpus",
    "BadK",
    "PEYMA",
    "ARMAN",
    "BUILTIN_TAGSETS",
    "parse_conll",
    "to_conll",
    "read_tagset_file",
    "validate_bio",
    "repair_bio",
    "split_kfold",
    "class_distribution",
    "render_stats",
]


class CorpusError(ValueError):
    """Base class for data errors raised while reading corpora."""


class MalformedLine(CorpusError):
    def __init__(self, line_no: int, line: str = "", source: str = "<string>"):
        self.line_no = line_no
        self.line = line
        self.source = source
        super().__init__(f"{source}:{line_no}: expected 'token<TAB>tag', got {line!r}")


class UnknownTag(CorpusError):
    def __init__(self, line_no: int, tag: str, source: str = "<string>"):
        self.line_no = line_no
        self.tag = tag
        self.source = source
        super().__init__(f"{source}:{line_no}: unknown tag {tag!r}")


class EmptyCorpus(CorpusError):
    pass


class BadK(CorpusError):
    pass


@dataclass(frozen=True)
class Tagset:
    """An ordered list of entity classes under the BIO scheme.

    Label ids are laid out as ``O = 0``, ``B-c = 1 + 2i``, ``I-c = 2 + 2i`` for
    the i-th class.  One extra id, :attr:`x_id`, is reserved for subwords that
    carry no supervision.  ``class_order`` is the column order of per-class
    summary tables and defaults to ``classes``.
    """

    name: str
    classes: Tuple[str, ...]
    display_names: Tuple[str, ...] = ()
    class_order: Tuple[str, ...] = ()

    def __post_init__(self):
        classes = tuple(self.classes)
        object.__setattr__(self, "classes", classes)
        if not classes:
            raise ValueError("a tagset needs at least one class")
        for c in classes:
            if not c or any(ch.isspace() for ch in c):
                raise ValueError(f"invalid class name {c!r}")
        if len(set(classes)) != len(classes):
            raise ValueError("class names must be unique")
        names = tuple(self.display_names) or classes
        if len(names) != len(classes):
            raise ValueError("display_names must match classes")
        object.__setattr__(self, "display_names", names)
        order = tuple(self.class_order) or classes
        if sorted(order) != sorted(classes):
            raise ValueError("class_order must be a permutation of classes")
        object.__setattr__(self, "class_order", order)

    @property
    def labels(self) -> Tuple[str, ...]:
        out = ["O"]
        for c in self.classes:
            out += [f"B-{c}", f"I-{c}"]
        return tuple(out)

    @property
    def num_labels(self) -> int:
        return 2 * len(self.classes) + 1

    @property
    def x_id(self) -> int:
        return self.num_labels

    @property
    def num_extended(self) -> int:
        return self.num_labels + 1

    def label_id(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(label) from None

    @property
    def _index(self) -> Dict[str, int]:
        cached = self.__dict__.get("_index_cache")
        if cached is None:
            cached = {lab: i for i, lab in enumerate(self.labels)}
            object.__setattr__(self, "_index_cache", cached)
        return cached

    def label(self, label_id: int) -> str:
        if label_id == self.x_id:
            return "X"
        return self.labels[label_id]

    def prefix(self, label_id: int) -> str:
        """'O', 'B' or 'I'."""
        if label_id == 0:
            return "O"
        return "B" if label_id % 2 == 1 else "I"

    def class_of(self, label_id: int) -> Optional[str]:
        if label_id == 0 or label_id >= self.num_labels:
            return None
        return self.classes[(label_id - 1) // 2]

    def begin_id(self, cls: str) -> int:
        return 1 + 2 * self.classes.index(cls)

    def inside_id(self, cls: str) -> int:
        return 2 + 2 * self.classes.index(cls)


PEYMA = Tagset(
    "peyma",
    ("DAT", "LOC", "MON", "ORG", "PCT", "PER", "TIM"),
    ("Date", "Location", "Money", "Organization", "Percent", "Person", "Time"),
    ("PER", "ORG", "LOC", "DAT", "TIM", "MON", "PCT"),
)
ARMAN = Tagset(
    "arman",
    ("EVE", "FAC", "LOC", "ORG", "PER", "PRO"),
    ("Event", "Facility", "Location", "Organization", "Person", "Product"),
)
BUILTIN_TAGSETS = {"peyma": PEYMA, "arman": ARMAN}


def read_tagset_file(text: str, name: str = "custom") -> Tagset:
    """One class per line; an optional second column gives the display name."""
    classes, names = [], []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        classes.append(parts[0])
        names.append(" ".join(parts[1:]) or parts[0])
    return Tagset(name, tuple(classes), tuple(names))


@dataclass(frozen=True)
class TaggedSentence:
    tokens: Tuple[str, ...]
    tags: Tuple[int, ...]
    # 1-based source line of each token; empty when built in memory
    lines: Tuple[int, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "tags", tuple(int(t) for t in self.tags))
        object.__setattr__(self, "lines", tuple(self.lines))
        if not self.tokens:
            raise ValueError("a sentence needs at least one token")
        if len(self.tokens) != len(self.tags):
            raise ValueError("tokens and tags differ in length")
        if any(t == "" for t in self.tokens):
            raise ValueError("empty token")

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class Corpus:
    tagset: Tagset
    sentences: Tuple[TaggedSentence, ...]
    source_name: str = "<memory>"

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if not self.sentences:
            raise EmptyCorpus(f"{self.source_name}: no sentences")
        n = self.tagset.num_labels
        for s in self.sentences:
            if any(t < 0 or t >= n for t in s.tags):
                raise ValueError(f"tag id outside the {self.tagset.name} label set")

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def subset(self, indices: Sequence[int], source_name: Optional[str] = None) -> "Corpus":
        return Corpus(
            self.tagset,
            tuple(self.sentences[i] for i in indices),
            source_name or self.source_name,
        )

    @property
    def num_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


def parse_conll(
    text: str,
    tagset: Tagset,
    source_name: str = "<string>",
    repair: bool = False,
) -> Corpus:
    """Parse ``token<TAB>tag`` lines (a single space also separates columns).

    Blank lines end sentences; end of input ends the last one.  With
    ``repair=True`` orphan ``I-c`` tags are rewritten to ``B-c``.
    """
    sentences: List[TaggedSentence] = []
    tokens: List[str] = []
    tags: List[int] = []
    lines: List[int] = []

    def flush():
        if tokens:
            s = TaggedSentence(tuple(tokens), tuple(tags), tuple(lines))
            sentences.append(repair_bio(s, tagset) if repair else s)
            tokens.clear()
            tags.clear()
            lines.clear()

    for line_no, raw in enumerate(text.split("\n"), 1):
        line = raw[:-1] if raw.endswith("\r") else raw
        if not line.strip():
            flush()
            continue
        parts = line.split("\t") if "\t" in line else line.split(" ")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise MalformedLine(line_no, line, source_name)
        token, tag = parts
        try:
            tag_id = tagset.label_id(tag)
        except KeyError:
            raise UnknownTag(line_no, tag, source_name) from None
        tokens.append(token)
        tags.append(tag_id)
        lines.append(line_no)
    flush()
    if not sentences:
        raise EmptyCorpus(f"{source_name}: no sentences")
    return Corpus(tagset, tuple(sentences), source_name)


def to_conll(corpus_or_sentences, tagset: Optional[Tagset] = None) -> str:
    """Serialize with TAB separators and one blank line after every sentence."""
    if isinstance(corpus_or_sentences, Corpus):
        tagset = corpus_or_sentences.tagset
        sentences = corpus_or_sentences.sentences
    else:
        sentences = corpus_or_sentences
    if tagset is None:
        raise ValueError("tagset required")
    out = []
    for s in sentences:
        for tok, tag in zip(s.tokens, s.tags):
            out.append(f"{tok}\t{tagset.label(tag)}\n")
        out.append("\n")
    return "".join(out)


@dataclass(frozen=True)
class Violation:
    position: int
    tag: int
    previous: Optional[int]


def validate_bio(sentence: TaggedSentence, tagset: Tagset) -> List[Violation]:
    """Positions holding ``I-c`` not preceded by ``B-c`` or ``I-c``."""
    out = []
    prev = None
    for i, tag in enumerate(sentence.tags):
        if tagset.prefix(tag) == "I":
            cls = tagset.class_of(tag)
            if prev is None or tagset.prefix(prev) == "O" or tagset.class_of(prev) != cls:
                out.append(Violation(i, tag, prev))
        prev = tag
    return out


def repair_bio(sentence: TaggedSentence, tagset: Tagset) -> TaggedSentence:
    bad = {v.position for v in validate_bio(sentence, tagset)}
    if not bad:
        return sentence
    tags = tuple(t - 1 if i in bad else t for i, t in enumerate(sentence.tags))
    return TaggedSentence(sentence.tokens, tags, sentence.lines)


@dataclass(frozen=True)
class FoldSplit:
    k: int
    assignment: Tuple[int, ...]
    seed: int

    def fold(self, i: int) -> List[int]:
        return [j for j, f in enumerate(self.assignment) if f == i]

    def folds(self) -> List[List[int]]:
        out: List[List[int]] = [[] for _ in range(self.k)]
        for j, f in enumerate(self.assignment):
            out[f].append(j)
        return out

    def train_indices(self, i: int) -> List[int]:
        return [j for j, f in enumerate(self.assignment) if f != i]

    @property
    def sizes(self) -> List[int]:
        return [len(f) for f in self.folds()]


def split_kfold(corpus: Corpus, k: int, seed: int = 0) -> FoldSplit:
    """Shuffle sentence indices with a PCG64 permutation seeded by ``seed`` and
    deal them round-robin into ``k`` folds."""
    n = len(corpus)
    if not 2 <= k <= n:
        raise BadK(f"k={k} outside [2, {n}]")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % k
    return FoldSplit(k, tuple(int(a) for a in assignment), seed)


@dataclass(frozen=True)
class CorpusStats:
    phrases: Dict[str, int]
    class_tokens: Dict[str, int]
    num_tokens: int
    num_sentences: int
    num_entity_tokens: int


def class_distribution(corpus: Corpus) -> CorpusStats:
    """Phrase counts per class; every ``B-c`` opens one phrase of class c."""
    tagset = corpus.tagset
    phrases: Counter = Counter()
    toks: Counter = Counter()
    for s in corpus:
        for tag in s.tags:
            cls = tagset.class_of(tag)
            if cls is None:
                continue
            toks[cls] += 1
            if tagset.prefix(tag) == "B":
                phrases[cls] += 1
    order = {c: i for i, c in enumerate(tagset.classes)}
    return CorpusStats(
        phrases=dict(sorted(phrases.items(), key=lambda kv: order[kv[0]])),
        class_tokens=dict(sorted(toks.items(), key=lambda kv: order[kv[0]])),
        num_tokens=corpus.num_tokens,
        num_sentences=len(corpus),
        num_entity_tokens=sum(toks.values()),
    )


def render_stats(stats: CorpusStats, tagset: Tagset) -> Tuple[str, str]:
    """Return ``(key/value report, TSV table)``; the table has one row per class."""
    kv = [
        f"sentences\t{stats.num_sentences}",
        f"tokens\t{stats.num_tokens}",
        f"entity_tokens\t{stats.num_entity_tokens}",
        f"phrases\t{sum(stats.phrases.values())}",
    ]
    rows = ["class\tphrase_count\ttoken_count"]
    for c in tagset.classes:
        p, t = stats.phrases.get(c, 0), stats.class_tokens.get(c, 0)
        kv.append(f"phrases.{c}\t{p}")
        rows.append(f"{c}\t{p}\t{t}")
    return "\n".join(kv) + "\n", "\n".join(rows) + "\n"
