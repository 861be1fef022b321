"""Linear-chain CRF: partition function, Viterbi and marginals on a toy chain."""
# %%
import itertools

import numpy as np
from scipy.special import logsumexp

from seqtag.crf import EmissionMatrix, TransitionMatrix, log_partition, marginals, nll_and_grads, path_score, viterbi

rng = np.random.default_rng(0)
n, L = 4, 3
em = EmissionMatrix(rng.standard_normal((n, L)), np.ones(n, bool))
tr = TransitionMatrix(rng.standard_normal((L, L)), rng.standard_normal(L), rng.standard_normal(L))

# %%
# With 3**4 = 81 paths the normaliser can be checked by brute force.
scores = [path_score(em, tr, p) for p in itertools.product(range(L), repeat=n)]
print("log Z forward     ", log_partition(em, tr))
print("log Z enumeration ", logsumexp(scores))

# %%
path, best = viterbi(em, tr)
print("viterbi path", path, "score", best, "max over paths", max(scores))
print("posterior marginals\n", marginals(em, tr).round(3))

# %%
# The NLL gradient wrt emissions is marginals minus the gold one-hot rows.
gold = [0, 1, 1, 2]
loss, g_em, g_tr = nll_and_grads(em, tr, gold)
print("nll", loss)
print("emission grad\n", g_em.round(3))
