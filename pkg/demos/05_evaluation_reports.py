"""Word- and phrase-level scores and the three report layouts."""
# %%
from seqtag.corpus import PEYMA
from seqtag.evaluator import evaluate, extract_spans, render_report

L = PEYMA.label_id
gold = [[L(t) for t in s] for s in (["B-PER", "I-PER", "O", "B-LOC"], ["B-DAT", "O", "B-ORG", "I-ORG"])]
pred = [[L(t) for t in s] for s in (["B-PER", "O", "O", "B-LOC"], ["B-DAT", "O", "B-ORG", "I-ORG"])]

# Phrases are exact (class, start, end) matches, so the clipped PER span
# scores nothing at phrase level while its B- token still counts at word level.
print(extract_spans(gold[0], PEYMA), extract_spans(pred[0], PEYMA))

report = evaluate(gold, pred, PEYMA, name="demo")

# %%
for style in ("per-tag", "per-class", "summary"):
    text, tsv = render_report(report, style)
    print(text)

# The TSV keeps full precision and the raw counts behind every ratio.
print(tsv.splitlines()[:6])
