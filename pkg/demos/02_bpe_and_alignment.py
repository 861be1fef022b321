"""Learning BPE merges and mapping word tags onto subwords and back."""
# %%
from seqtag.corpus import PEYMA
from seqtag.synthetic import make_corpus
from seqtag.tokenizer import align, project, train_bpe

corpus = make_corpus(300, seed=2)
table = train_bpe((w for s in corpus for w in s.tokens), vocab_size=120)
print(len(table), "symbols,", len(table.merges), "merges; first few:", table.merges[:6])

# %%
# Merge ranks decide the split; "##" marks a piece that continues a word.
for word in ("tehran", "parliament", "unknownword"):
    print(f"{word:>12} ->", table.tokenize(word))

# %%
# BOS and EOS wrap the sequence. The first piece of each word carries the word's
# tag and every other position gets X.
s = corpus.sentences[0]
a = align(s, table, PEYMA)
for sid, lab, w in zip(a.subword_ids, a.labels, a.token_of):
    piece = next(k for k, v in table.vocab.items() if v == sid)
    print(f"{piece:>10}  {PEYMA.label(int(lab)):>6}  word={w}")

# Projecting the subword labels back recovers the word tags exactly.
assert project(a, a.labels).tags == list(s.tags)
