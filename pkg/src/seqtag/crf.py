"""Linear-chain CRF over projected encoder states.

Every inference routine walks only the positions where ``label_mask`` is
true; X and special positions are skipped, not modelled as a state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .corpus import Tagset

__all__ = [
    "Projection",
    "EmissionMatrix",
    "TransitionMatrix",
    "EmptyChain",
    "ShapeMismatch",
    "emissions",
    "path_score",
    "log_partition",
    "viterbi",
    "marginals",
    "nll_and_grads",
    "bio_transition_mask",
]


class EmptyChain(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


@dataclass
class Projection:
    weight: np.ndarray  # d_model x L
    bias: np.ndarray  # L

    @classmethod
    def init(cls, d_model: int, num_labels: int, rng: np.random.Generator) -> "Projection":
        w = rng.standard_normal((d_model, num_labels)) / np.sqrt(d_model)
        return cls(w, np.zeros(num_labels))


@dataclass
class EmissionMatrix:
    scores: np.ndarray  # seq_len x L
    label_mask: np.ndarray  # seq_len, bool

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.label_mask = np.asarray(self.label_mask, dtype=bool)
        if self.label_mask.shape != self.scores.shape[:-1]:
            raise ShapeMismatch("label_mask must match the leading shape of scores")

    @property
    def active(self) -> np.ndarray:
        """Unmasked emission rows, in order."""
        return self.scores[self.label_mask]


@dataclass
class TransitionMatrix:
    trans: np.ndarray  # L x L, trans[i, j]: label i followed by label j
    start: np.ndarray
    stop: np.ndarray

    @classmethod
    def zeros(cls, num_labels: int) -> "TransitionMatrix":
        return cls(np.zeros((num_labels, num_labels)), np.zeros(num_labels), np.zeros(num_labels))

    @property
    def num_labels(self) -> int:
        return len(self.start)

    def constrained(self, allowed: "BioMask") -> "TransitionMatrix":
        """Copy with forbidden moves set to -inf."""
        return TransitionMatrix(
            np.where(allowed.trans, self.trans, -np.inf),
            np.where(allowed.start, self.start, -np.inf),
            self.stop.copy(),
        )


@dataclass(frozen=True)
class BioMask:
    trans: np.ndarray
    start: np.ndarray


def bio_transition_mask(tagset: Tagset, num_labels: Optional[int] = None) -> BioMask:
    """Allowed moves under BIO: ``I-c`` may only follow ``B-c`` or ``I-c``.

    ``num_labels`` may include the X column; X stays unconstrained.
    """
    n = num_labels or tagset.num_extended
    trans = np.ones((n, n), dtype=bool)
    start = np.ones(n, dtype=bool)
    for j in range(tagset.num_labels):
        if tagset.prefix(j) != "I":
            continue
        start[j] = False
        cls = tagset.class_of(j)
        for i in range(n):
            if i >= tagset.num_labels or tagset.class_of(i) != cls:
                trans[i, j] = False
    return BioMask(trans, start)


def emissions(representations: np.ndarray, projection: Projection, label_mask) -> EmissionMatrix:
    reps = np.asarray(representations, dtype=np.float64)
    if reps.shape[-1] != projection.weight.shape[0]:
        raise ShapeMismatch(
            f"representation width {reps.shape[-1]} != projection input {projection.weight.shape[0]}"
        )
    return EmissionMatrix(reps @ projection.weight + projection.bias, label_mask)


def _check(em: EmissionMatrix, tr: TransitionMatrix) -> np.ndarray:
    if em.scores.ndim != 2 or em.scores.shape[1] != tr.num_labels:
        raise ShapeMismatch(f"emissions {em.scores.shape} vs {tr.num_labels} labels")
    e = em.active
    if len(e) == 0:
        raise EmptyChain("no unmasked position")
    return e


def path_score(em: EmissionMatrix, tr: TransitionMatrix, labels: Sequence[int]) -> float:
    e = _check(em, tr)
    y = np.asarray(labels, dtype=np.int64)
    if len(y) != len(e):
        raise ShapeMismatch(f"{len(y)} labels for {len(e)} unmasked positions")
    score = tr.start[y[0]] + e[np.arange(len(y)), y].sum() + tr.trans[y[:-1], y[1:]].sum() + tr.stop[y[-1]]
    return float(score)


def _forward(e: np.ndarray, tr: TransitionMatrix) -> np.ndarray:
    alpha = np.empty_like(e)
    alpha[0] = tr.start + e[0]
    for t in range(1, len(e)):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + tr.trans, axis=0) + e[t]
    return alpha


def _backward(e: np.ndarray, tr: TransitionMatrix) -> np.ndarray:
    beta = np.empty_like(e)
    beta[-1] = tr.stop
    for t in range(len(e) - 2, -1, -1):
        beta[t] = logsumexp(tr.trans + (e[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def log_partition(em: EmissionMatrix, tr: TransitionMatrix) -> float:
    e = _check(em, tr)
    alpha = _forward(e, tr)
    return float(logsumexp(alpha[-1] + tr.stop))


def viterbi(em: EmissionMatrix, tr: TransitionMatrix) -> Tuple[List[int], float]:
    """Best path over unmasked positions.  Ties go to the lower label id at
    every backtracking step (``argmax`` returns the first maximum)."""
    e = _check(em, tr)
    n = len(e)
    delta = tr.start + e[0]
    back = np.zeros((n, tr.num_labels), dtype=np.int64)
    for t in range(1, n):
        cand = delta[:, None] + tr.trans
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(tr.num_labels)] + e[t]
    final = delta + tr.stop
    best = int(np.argmax(final))
    path = [best]
    for t in range(n - 1, 0, -1):
        best = int(back[t, best])
        path.append(best)
    path.reverse()
    return path, float(final[path[-1]])


def _posteriors(e: np.ndarray, tr: TransitionMatrix):
    alpha = _forward(e, tr)
    beta = _backward(e, tr)
    logz = logsumexp(alpha[-1] + tr.stop)
    unary = np.exp(alpha + beta - logz)
    return alpha, beta, logz, unary


def marginals(em: EmissionMatrix, tr: TransitionMatrix) -> np.ndarray:
    """Posterior label probabilities; masked rows are zero."""
    e = _check(em, tr)
    out = np.zeros_like(em.scores)
    out[em.label_mask] = _posteriors(e, tr)[3]
    return out


def nll_and_grads(
    em: EmissionMatrix, tr: TransitionMatrix, gold_labels: Sequence[int]
) -> Tuple[float, np.ndarray, TransitionMatrix]:
    """Negative log-likelihood of ``gold_labels`` and its exact gradients.

    ``gold_labels`` lists one label per unmasked position.  The gradient with
    respect to emissions is marginals minus the gold one-hot; for transitions
    it is expected minus observed pair counts.
    """
    e = _check(em, tr)
    y = np.asarray(gold_labels, dtype=np.int64)
    if len(y) != len(e):
        raise ShapeMismatch(f"{len(y)} labels for {len(e)} unmasked positions")
    alpha, beta, logz, unary = _posteriors(e, tr)
    gold = path_score(em, tr, y)
    loss = max(float(logz) - gold, 0.0)

    n = len(e)
    rows = np.arange(n)
    g_active = unary.copy()
    g_active[rows, y] -= 1.0
    grad_e = np.zeros_like(em.scores)
    grad_e[em.label_mask] = g_active

    g_trans = np.zeros_like(tr.trans)
    finite = np.isfinite(tr.trans)
    for t in range(n - 1):
        pair = alpha[t][:, None] + tr.trans + (e[t + 1] + beta[t + 1])[None, :] - logz
        g_trans += np.where(finite, np.exp(pair), 0.0)
    np.add.at(g_trans, (y[:-1], y[1:]), -1.0)
    g_start = unary[0].copy()
    g_start[y[0]] -= 1.0
    g_stop = unary[-1].copy()
    g_stop[y[-1]] -= 1.0
    return loss, grad_e, TransitionMatrix(g_trans, g_start, g_stop)
