"""Training the full tagger on a toy corpus and tagging held-out sentences."""
# %%
import logging

from seqtag.corpus import PEYMA
from seqtag.evaluator import render_report
from seqtag.synthetic import make_corpus
from seqtag.trainer import TrainConfig, evaluate_model, predict, train

logging.basicConfig(level=logging.INFO, format="%(message)s")

corpus = make_corpus(120, seed=3)
fit, dev, test = corpus.subset(range(90)), corpus.subset(range(90, 100)), corpus.subset(range(100, 120))

# A small model keeps this demo under a minute; the defaults are larger.
cfg = TrainConfig(epochs=30, patience=5, d_model=32, n_heads=4, n_layers=1, d_ff=64, learning_rate=3e-3)
ckpt = train(fit, dev, cfg)
print("best epoch", ckpt.best_epoch, "of", len(ckpt.history))

# %%
report = evaluate_model(ckpt.model, test, name="demo")
print(render_report(report, "summary")[0])

# %%
s = test.sentences[0]
tags = predict(ckpt.model, [s])[0].tags
for tok, g, p in zip(s.tokens, s.tags, tags):
    print(f"{tok:>10}  gold={PEYMA.label(g):>6}  pred={PEYMA.label(p):>6}")
