"""Reading a BIO corpus, checking it, and cutting it into folds."""
# %%
from seqtag.corpus import PEYMA, class_distribution, parse_conll, render_stats, split_kfold, validate_bio
from seqtag.synthetic import make_corpus

# A two-sentence document in CoNLL columns. The second sentence opens with an
# orphan I- tag, which validate_bio flags and repair=True would rewrite to B-.
text = "Ali\tB-PER\nAhmadi\tI-PER\nvisited\tO\nTehran\tB-LOC\n\nShiraz\tI-LOC\nmarket\tO\n"
doc = parse_conll(text, PEYMA, "inline")
for i, s in enumerate(doc):
    print(i, list(zip(s.tokens, map(PEYMA.label, s.tags))), "violations:", validate_bio(s, PEYMA))
print(parse_conll(text, PEYMA, repair=True).sentences[1].tags)

# %%
# Phrase counts per class on a bigger toy corpus.
corpus = make_corpus(500, seed=1)
kv, table = render_stats(class_distribution(corpus), PEYMA)
print(kv)
print(table)

# %%
# Five seeded folds. Sizes never differ by more than one sentence, and the
# same seed always deals the same folds.
split = split_kfold(corpus, 5, seed=0)
print("fold sizes", split.sizes)
print("fold 0 head", split.folds()[0][:8])
assert split == split_kfold(corpus, 5, seed=0)
