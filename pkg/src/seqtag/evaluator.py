"""CoNLL-style scoring at word level and phrase level, and report rendering."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

from .corpus import Corpus, Tagset, parse_conll

__all__ = [
    "Span",
    "Score",
    "EvalReport",
    "TokenMismatch",
    "ShapeMismatch",
    "extract_spans",
    "phrase_f1",
    "word_f1",
    "evaluate",
    "evaluate_conll",
    "render_report",
    "format_percent",
    "metrics_lines",
    "report_from_metrics",
]


class ShapeMismatch(ValueError):
    pass


class TokenMismatch(ValueError):
    def __init__(self, line_no: int, gold: str, pred: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: gold token {gold!r} != predicted token {pred!r}")


class Span(NamedTuple):
    cls: str
    start: int
    end: int  # exclusive


@dataclass(frozen=True)
class Score:
    tp: int = 0
    n_pred: int = 0
    n_gold: int = 0

    @property
    def precision(self) -> float:
        return self.tp / self.n_pred if self.n_pred else 0.0

    @property
    def recall(self) -> float:
        return self.tp / self.n_gold if self.n_gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    @property
    def undefined(self) -> Dict[str, bool]:
        return {
            "precision": self.n_pred == 0,
            "recall": self.n_gold == 0,
            "f1": self.precision + self.recall == 0,
        }

    def __add__(self, other: "Score") -> "Score":
        return Score(self.tp + other.tp, self.n_pred + other.n_pred, self.n_gold + other.n_gold)


@dataclass(frozen=True)
class EvalReport:
    """Word-level scores per B-/I- tag and phrase-level scores per class.

    ``word`` and ``phrase`` map keys to :class:`Score`; totals are the
    micro-averages over all keys (pooled counts).
    """

    tagset: Tagset
    word: Dict[str, Score]
    phrase: Dict[str, Score]
    name: str = "model"

    @property
    def word_total(self) -> Score:
        return sum(self.word.values(), Score())

    @property
    def phrase_total(self) -> Score:
        return sum(self.phrase.values(), Score())

    @property
    def no_entities(self) -> bool:
        t = self.word_total
        return t.n_gold == 0 and t.n_pred == 0

    def __add__(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(
            self.tagset,
            {k: self.word[k] + other.word[k] for k in self.word},
            {k: self.phrase[k] + other.phrase[k] for k in self.phrase},
            self.name,
        )


def extract_spans(tags: Sequence[int], tagset: Tagset, orphan: str = "open") -> List[Span]:
    """Maximal BIO phrases.

    A span opens at ``B-c`` and runs over following ``I-c``.  An ``I-c`` with
    no live span of class c opens a new span when ``orphan="open"`` (conlleval
    behaviour) and is ignored when ``orphan="drop"``.
    """
    # label ids: 0 = O, 2i+1 = B-c_i, 2i+2 = I-c_i
    classes = tagset.classes
    spans = []
    cur = -1  # class index of the live span, -1 when none
    start = 0
    for i, tag in enumerate(tags):
        if tag == 0:
            if cur >= 0:
                spans.append(Span(classes[cur], start, i))
                cur = -1
            continue
        c, begin = (tag - 1) >> 1, tag & 1
        if not begin and c == cur:
            continue
        if cur >= 0:
            spans.append(Span(classes[cur], start, i))
            cur = -1
        if begin or orphan == "open":
            cur, start = c, i
    if cur >= 0:
        spans.append(Span(classes[cur], start, len(tags)))
    return spans


def _pairs(gold, pred):
    gold, pred = list(gold), list(pred)
    if len(gold) != len(pred):
        raise ShapeMismatch(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise ShapeMismatch(f"sentence {i}: {len(g)} gold tags vs {len(p)} predicted")
        yield tuple(g), tuple(p)


def _by_class(counts: Counter, cls_of: Dict[int, str]) -> Counter:
    out: Counter = Counter()
    for i, n in counts.items():
        out[cls_of[i]] += n
    return out


def phrase_f1(gold, pred, tagset: Tagset, orphan: str = "open") -> Dict[str, Score]:
    """Exact-match span scoring per class; ``gold``/``pred`` are lists of tag sequences."""
    # spans are interned as small ints so repeated sequences cost one lookup
    span_id: Dict[Span, int] = {}
    seen: Dict[tuple, frozenset] = {}
    tp, npred, ngold = Counter(), Counter(), Counter()
    for g, p in _pairs(gold, pred):
        for tags in (g, p):
            if tags not in seen:
                ids = [span_id.setdefault(s, len(span_id)) for s in extract_spans(tags, tagset, orphan)]
                seen[tags] = frozenset(ids)
        gs, ps = seen[g], seen[p]
        ngold.update(gs)
        npred.update(ps)
        tp.update(gs & ps)
    by_id = {i: s.cls for s, i in span_id.items()}
    tp, npred, ngold = (_by_class(c, by_id) for c in (tp, npred, ngold))
    return {c: Score(tp[c], npred[c], ngold[c]) for c in tagset.classes}


def word_f1(gold, pred, tagset: Tagset) -> Dict[str, Score]:
    """Every B-c and I-c is its own category; O is left out entirely."""
    n = tagset.num_labels
    tp, npred, ngold = [0] * n, [0] * n, [0] * n
    for g, p in _pairs(gold, pred):
        for a, b in zip(g, p):
            ngold[a] += 1
            npred[b] += 1
            if a == b:
                tp[a] += 1
    return {tagset.labels[i]: Score(tp[i], npred[i], ngold[i]) for i in range(1, n)}


def evaluate(gold, pred, tagset: Tagset, name: str = "model", orphan: str = "open") -> EvalReport:
    if isinstance(gold, Corpus):
        gold = [s.tags for s in gold]
    if isinstance(pred, Corpus):
        pred = [s.tags for s in pred]
    gold, pred = list(gold), list(pred)
    return EvalReport(
        tagset,
        word_f1(gold, pred, tagset),
        phrase_f1(gold, pred, tagset, orphan),
        name,
    )


def evaluate_conll(
    gold_text: str,
    pred_text: str,
    tagset: Tagset,
    name: str = "model",
    repair: bool = False,
) -> EvalReport:
    """Score two CoNLL documents whose token columns must agree exactly."""
    gold = parse_conll(gold_text, tagset, "gold", repair=repair)
    pred = parse_conll(pred_text, tagset, "pred", repair=repair)
    for gs, ps in zip(gold, pred):
        for i in range(max(len(gs), len(ps))):
            a = gs.tokens[i] if i < len(gs) else ""
            b = ps.tokens[i] if i < len(ps) else ""
            if a != b:
                raise TokenMismatch(ps.lines[i] if i < len(ps) else ps.lines[-1] + 1, a, b)
    if len(gold) != len(pred):
        raise ShapeMismatch(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    return evaluate(gold, pred, tagset, name)


def format_percent(ratio: float) -> str:
    """Percent with two decimals, rounding half up."""
    return str(Decimal(repr(ratio * 100.0)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _grid(rows: List[List[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    out = []
    for r in rows:
        out.append(" | ".join(cell.rjust(w) for cell, w in zip(r, widths)).rstrip())
    return "\n".join(out) + "\n"


def _per_tag(report: EvalReport) -> str:
    ts = report.tagset
    head1, head2, word, phrase = [""], [""], ["word-f1"], ["phrase-f1"]
    for cls, disp in zip(ts.classes, ts.display_names):
        head1 += [disp, ""]
        head2 += ["B-", "I-"]
        word += [format_percent(report.word[f"B-{cls}"].f1), format_percent(report.word[f"I-{cls}"].f1)]
        phrase += [format_percent(report.phrase[cls].f1), ""]
    head1.append("")
    head2.append("all classes")
    word.append(format_percent(report.word_total.f1))
    phrase.append(format_percent(report.phrase_total.f1))
    return _grid([head1, head2, word, phrase])


def _per_class(report: EvalReport) -> str:
    order = report.tagset.class_order
    header = ["Team"] + list(order) + ["Total F1"]
    row = [report.name] + [format_percent(report.phrase[c].f1) for c in order]
    row.append(format_percent(report.phrase_total.f1))
    return _grid([header, row])


def _summary(report: EvalReport) -> str:
    rows = [["level", "P", "R", "F1"]]
    for level, s in (("word", report.word_total), ("phrase", report.phrase_total)):
        rows.append([level, format_percent(s.precision), format_percent(s.recall), format_percent(s.f1)])
    text = _grid(rows)
    if report.no_entities:
        text += "note: no entities in gold or prediction\n"
    return text


def metrics_lines(report: EvalReport) -> List[Tuple[str, str]]:
    """Flat ``key -> value`` pairs at full precision, e.g. ``phrase.PER.f1``.

    Ratios whose denominator is zero are written as 0 and followed by a
    ``<key>.undefined = 1`` entry.
    """
    out: List[Tuple[str, str]] = []

    def emit(prefix: str, s: Score):
        out.extend([(f"{prefix}.tp", str(s.tp)), (f"{prefix}.pred", str(s.n_pred)), (f"{prefix}.gold", str(s.n_gold))])
        undefined = s.undefined
        for m in ("precision", "recall", "f1"):
            out.append((f"{prefix}.{m}", repr(getattr(s, m))))
            if undefined[m]:
                out.append((f"{prefix}.{m}.undefined", "1"))

    for key, s in report.word.items():
        emit(f"word.{key}", s)
    emit("word.total", report.word_total)
    for key, s in report.phrase.items():
        emit(f"phrase.{key}", s)
    emit("phrase.total", report.phrase_total)
    return out


def render_report(report: EvalReport, style: str = "summary") -> Tuple[str, str]:
    """Render ``style`` in {"per-tag", "per-class", "summary"}.

    Returns ``(text table, machine-readable TSV)``.  The text prints percents
    with two decimals; the TSV carries full precision.
    """
    renderers = {"per-tag": _per_tag, "per-class": _per_class, "summary": _summary}
    if style not in renderers:
        raise ValueError(f"unknown style {style!r}")
    tsv = "".join(f"{k}\t{v}\n" for k, v in metrics_lines(report))
    return renderers[style](report), tsv


def report_from_metrics(text: str, tagset: Tagset, name: str = "model") -> EvalReport:
    """Rebuild a report from the TSV written by :func:`render_report`."""
    values = {}
    for line in text.splitlines():
        if line.strip():
            k, v = line.split("\t")
            values[k] = v

    def score(prefix):
        try:
            return Score(int(values[f"{prefix}.tp"]), int(values[f"{prefix}.pred"]), int(values[f"{prefix}.gold"]))
        except KeyError as e:
            raise ValueError(f"metrics file lacks {e.args[0]}") from None

    word = {lab: score(f"word.{lab}") for lab in tagset.labels[1:]}
    phrase = {c: score(f"phrase.{c}") for c in tagset.classes}
    return EvalReport(tagset, word, phrase, name)
