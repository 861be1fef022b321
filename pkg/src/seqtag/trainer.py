"""Training, prediction, checkpoints and k-fold cross-validation."""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import crf
from .corpus import Corpus, FoldSplit, TaggedSentence, Tagset, split_kfold
from .encoder import EncoderConfig, backward, forward, init_params
from .evaluator import EvalReport, evaluate
from .tokenizer import (
    AlignedSequence,
    MergeTable,
    WordTags,
    WordTooLong,
    align,
    merge_table_from_text,
    merge_table_to_text,
    project,
    train_bpe,
)

logger = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "CrfModel",
    "Batch",
    "AdamState",
    "Checkpoint",
    "NonFiniteLoss",
    "EmptyDev",
    "CheckpointError",
    "VersionMismatch",
    "CorruptCheckpoint",
    "init_model",
    "make_batches",
    "batch_loss_and_grads",
    "clip_global_norm",
    "adam_step",
    "train",
    "predict",
    "evaluate_model",
    "corpus_nll",
    "save",
    "load",
    "FoldPlan",
    "plan_folds",
    "CVResult",
    "cross_validate",
]

FORMAT_VERSION = 1
MAGIC = b"SEQTAGCK"


class NonFiniteLoss(RuntimeError):
    def __init__(self, epoch: int, batch: int, value: float):
        self.epoch, self.batch, self.value = epoch, batch, value
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")


class EmptyDev(ValueError):
    pass


class CheckpointError(IOError):
    pass


class VersionMismatch(CheckpointError):
    pass


class CorruptCheckpoint(CheckpointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    grad_clip_norm: float = 1.0
    seed: int = 0
    patience: int = 5
    # model shape
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 256
    dropout: float = 0.1
    max_len: int = 128
    vocab_size: int = 1000
    constrained: bool = False
    dev_fraction: float = 0.1

    def validate(self) -> None:
        # lr = 0 is accepted so a run can be checked for a null update
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if self.grad_clip_norm <= 0 or self.epsilon <= 0:
            raise ValueError("grad_clip_norm and epsilon must be positive")
        if not 0 < self.dev_fraction < 1:
            raise ValueError("dev_fraction must lie in (0, 1)")
        if self.patience < 0:
            raise ValueError("patience must be non-negative")

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(
            vocab_size=vocab_size,
            d_model=self.d_model,
            n_heads=self.n_heads,
            n_layers=self.n_layers,
            d_ff=self.d_ff,
            max_len=self.max_len,
            dropout_rate=self.dropout,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f.name: f.type for f in dataclasses.fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        out = {}
        for k, v in values.items():
            default = getattr(cls, k)
            if isinstance(v, str):
                if isinstance(default, bool):
                    if v.lower() not in ("1", "0", "true", "false", "yes", "no"):
                        raise ValueError(f"{k}: expected a boolean, got {v!r}")
                    v = v.lower() in ("1", "true", "yes")
                else:
                    v = type(default)(v)
            out[k] = v
        return cls(**out)

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        """Flat ``key=value`` lines; ``#`` starts a comment."""
        return cls.from_dict(parse_kv(text))


def parse_kv(text: str) -> Dict[str, str]:
    values = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {no}: expected key=value")
        k, v = line.split("=", 1)
        values[k.strip().replace("-", "_")] = v.strip()
    return values


@dataclass
class CrfModel:
    tagset: Tagset
    merges: MergeTable
    config: TrainConfig
    encoder: Dict[str, np.ndarray]
    projection: crf.Projection
    transitions: crf.TransitionMatrix

    @property
    def encoder_config(self) -> EncoderConfig:
        return self.config.encoder_config(len(self.merges))

    @property
    def num_labels(self) -> int:
        return self.tagset.num_extended

    def parameters(self) -> Dict[str, np.ndarray]:
        """Every trainable tensor by name; the arrays are the live ones."""
        params = {f"encoder.{k}": v for k, v in self.encoder.items()}
        params["projection.weight"] = self.projection.weight
        params["projection.bias"] = self.projection.bias
        params["crf.trans"] = self.transitions.trans
        params["crf.start"] = self.transitions.start
        params["crf.stop"] = self.transitions.stop
        return params

    def decoding_transitions(self) -> crf.TransitionMatrix:
        if self.config.constrained:
            return self.transitions.constrained(crf.bio_transition_mask(self.tagset, self.num_labels))
        return self.transitions


def init_model(tagset: Tagset, merges: MergeTable, config: TrainConfig) -> CrfModel:
    config.validate()
    enc_cfg = config.encoder_config(len(merges))
    rng = np.random.default_rng([config.seed, 1])
    return CrfModel(
        tagset=tagset,
        merges=merges,
        config=config,
        encoder=init_params(enc_cfg),
        projection=crf.Projection.init(config.d_model, tagset.num_extended, rng),
        transitions=crf.TransitionMatrix.zeros(tagset.num_extended),
    )


@dataclass
class Batch:
    ids: np.ndarray  # (batch, seq), PAD-filled
    attention_mask: np.ndarray
    labels: np.ndarray  # X at padding
    label_mask: np.ndarray
    aligned: List[AlignedSequence]
    indices: List[int]


def _align_all(sentences, merges, tagset, max_len) -> List[AlignedSequence]:
    out = []
    for i, s in enumerate(sentences):
        try:
            out.append(align(s, merges, tagset, max_len))
        except WordTooLong as e:
            raise WordTooLong(e.word, e.n_subwords, e.max_len, sentence_index=i) from None
    return out


def _pad(aligned: List[AlignedSequence], indices: List[int], pad_id: int, x_label: int) -> Batch:
    width = max(len(a) for a in aligned)
    n = len(aligned)
    ids = np.full((n, width), pad_id, dtype=np.int64)
    mask = np.zeros((n, width), dtype=bool)
    labels = np.full((n, width), x_label, dtype=np.int64)
    for r, a in enumerate(aligned):
        ids[r, : len(a)] = a.subword_ids
        mask[r, : len(a)] = a.attention_mask
        labels[r, : len(a)] = a.labels
    return Batch(ids, mask, labels, labels != x_label, aligned, indices)


def make_batches(
    corpus: Corpus,
    merges: MergeTable,
    batch_size: int,
    max_len: int,
    seed: int,
    epoch: Optional[int],
    aligned: Optional[List[AlignedSequence]] = None,
) -> List[Batch]:
    """Align, shuffle with a generator seeded by ``(seed, epoch)``, pad.

    ``epoch=None`` keeps corpus order.  Pass ``aligned`` to reuse alignments.
    """
    if aligned is None:
        aligned = _align_all(corpus.sentences, merges, corpus.tagset, max_len)
    order = list(range(len(aligned)))
    if epoch is not None:
        order = np.random.default_rng([seed, epoch]).permutation(len(aligned)).tolist()
    batches = []
    for b in range(0, len(order), batch_size):
        idx = order[b : b + batch_size]
        batches.append(_pad([aligned[i] for i in idx], idx, merges.pad_id, corpus.tagset.x_id))
    return batches


def batch_loss_and_grads(
    model: CrfModel,
    batch: Batch,
    train_mode: bool = True,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean per-sequence CRF NLL over the batch and its gradient for every parameter."""
    cfg = model.encoder_config
    act = forward(batch.ids, batch.attention_mask, model.encoder, cfg, train_mode, rng)
    em = crf.emissions(act.output, model.projection, batch.label_mask)
    trans = model.decoding_transitions()
    n = len(batch.aligned)
    loss = 0.0
    g_scores = np.zeros_like(em.scores)
    g_trans = crf.TransitionMatrix.zeros(model.num_labels)
    for r in range(n):
        row = crf.EmissionMatrix(em.scores[r], batch.label_mask[r])
        gold = batch.labels[r][batch.label_mask[r]]
        l, ge, gt = crf.nll_and_grads(row, trans, gold)
        loss += l
        g_scores[r] = ge
        g_trans.trans += gt.trans
        g_trans.start += gt.start
        g_trans.stop += gt.stop
    loss /= n
    g_scores /= n
    reps = act.output
    grads = {
        "projection.weight": np.einsum("bsd,bsl->dl", reps, g_scores),
        "projection.bias": g_scores.sum(axis=(0, 1)),
        "crf.trans": g_trans.trans / n,
        "crf.start": g_trans.start / n,
        "crf.stop": g_trans.stop / n,
    }
    enc_grads, _ = backward(act, g_scores @ model.projection.weight.T, model.encoder, cfg)
    for k, v in enc_grads.items():
        grads[f"encoder.{k}"] = v
    return loss, grads


def clip_global_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``.
    Returns the norm before clipping."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params, grads, state: AdamState, config: TrainConfig) -> None:
    """Bias-corrected Adam with decoupled weight decay, updating ``params`` in place."""
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    lr = config.learning_rate
    for k, p in params.items():
        g = grads[k]
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + config.epsilon)
        if config.weight_decay:
            update = update + config.weight_decay * p
        p -= lr * update


def predict(
    model: CrfModel,
    sentences: Sequence[TaggedSentence],
    batch_size: int = 32,
    threads: int = 1,
) -> List[WordTags]:
    """Viterbi-decode each sentence and project the result back to words."""
    sentences = list(sentences)
    if not sentences:
        return []
    tagset, merges = model.tagset, model.merges
    aligned = _align_all(sentences, merges, tagset, model.config.max_len)
    trans = model.decoding_transitions()
    cfg = model.encoder_config

    def run(start: int) -> List[WordTags]:
        chunk = aligned[start : start + batch_size]
        batch = _pad(chunk, list(range(len(chunk))), merges.pad_id, tagset.x_id)
        act = forward(batch.ids, batch.attention_mask, model.encoder, cfg, train_mode=False)
        em = crf.emissions(act.output, model.projection, batch.label_mask)
        out = []
        for r, a in enumerate(chunk):
            path, _ = crf.viterbi(crf.EmissionMatrix(em.scores[r], batch.label_mask[r]), trans)
            sub = np.full(len(a), tagset.x_id, dtype=np.int64)
            sub[a.label_mask] = path
            out.append(project(a, sub))
        return out

    starts = range(0, len(aligned), batch_size)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            chunks = list(pool.map(run, starts))
    else:
        chunks = [run(s) for s in starts]
    return [wt for c in chunks for wt in c]


def corpus_nll(model: CrfModel, corpus: Corpus, batch_size: int = 32) -> float:
    """Mean per-sentence CRF NLL without dropout."""
    cfg, trans = model.encoder_config, model.decoding_transitions()
    total = 0.0
    for batch in make_batches(corpus, model.merges, batch_size, model.config.max_len, 0, None):
        act = forward(batch.ids, batch.attention_mask, model.encoder, cfg, train_mode=False)
        em = crf.emissions(act.output, model.projection, batch.label_mask)
        for r in range(len(batch.aligned)):
            row = crf.EmissionMatrix(em.scores[r], batch.label_mask[r])
            gold = batch.labels[r][batch.label_mask[r]]
            total += crf.log_partition(row, trans) - crf.path_score(row, trans, gold)
    return total / len(corpus)


def evaluate_model(model: CrfModel, corpus: Corpus, name: str = "model", threads: int = 1) -> EvalReport:
    preds = predict(model, corpus.sentences, threads=threads)
    return evaluate([s.tags for s in corpus], [p.tags for p in preds], corpus.tagset, name)


@dataclass
class Checkpoint:
    model: CrfModel
    optimizer: AdamState
    epoch: int  # epochs completed when the snapshot was taken
    history: List[dict] = field(default_factory=list)
    best_epoch: int = 0


def _snapshot(model, opt, epoch, history, best_epoch) -> Checkpoint:
    return Checkpoint(copy.deepcopy(model), copy.deepcopy(opt), epoch, [dict(h) for h in history], best_epoch)


def train(
    train_corpus: Corpus,
    dev_corpus: Optional[Corpus],
    config: TrainConfig,
    merges: Optional[MergeTable] = None,
    resume: Optional[Checkpoint] = None,
    select: str = "best",
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> Checkpoint:
    """Fit encoder, projection and CRF with Adam; early-stop on dev phrase F1.

    An epoch improves on the incumbent when its dev phrase F1 is higher, or
    equal with a lower dev NLL.
    ``select="best"`` returns the snapshot with the highest dev phrase F1,
    ``select="last"`` the final state.  Either way ``history`` covers every
    epoch that ran.  Training continues from ``resume`` when given.
    ``on_epoch`` sees each history entry; a truthy return ends training.
    """
    config.validate()
    if dev_corpus is None or len(dev_corpus) == 0:
        raise EmptyDev("a dev corpus is required for model selection")
    if dev_corpus.tagset != train_corpus.tagset:
        raise ValueError("train and dev corpora use different tagsets")
    if select not in ("best", "last"):
        raise ValueError("select must be 'best' or 'last'")

    if resume is not None:
        model = copy.deepcopy(resume.model)
        model.config = config
        opt = copy.deepcopy(resume.optimizer)
        start = resume.epoch
        history = [dict(h) for h in resume.history[:start]]
    else:
        if merges is None:
            merges = train_bpe((w for s in train_corpus for w in s.tokens), config.vocab_size)
        model = init_model(train_corpus.tagset, merges, config)
        opt = AdamState.zeros_like(model.parameters())
        start = 0
        history = []

    def key(h):
        return (h["dev_phrase_f1"], -h["dev_loss"])

    if history:
        best_epoch = max(range(len(history)), key=lambda i: key(history[i])) + 1
        best_key = key(history[best_epoch - 1])
        bad = start - best_epoch
    else:
        best_epoch, best_key, bad = 0, (-1.0, -np.inf), 0
    best = _snapshot(model, opt, start, history, best_epoch)

    aligned = _align_all(train_corpus.sentences, model.merges, train_corpus.tagset, config.max_len)
    params = model.parameters()
    for epoch in range(start, config.epochs):
        batches = make_batches(train_corpus, model.merges, config.batch_size, config.max_len,
                               config.seed, epoch, aligned=aligned)
        losses = []
        for b, batch in enumerate(batches):
            rng = np.random.default_rng([config.seed, epoch, b, 2])
            loss, grads = batch_loss_and_grads(model, batch, train_mode=True, rng=rng)
            if not np.isfinite(loss):
                raise NonFiniteLoss(epoch, b, loss)
            clip_global_norm(grads, config.grad_clip_norm)
            adam_step(params, grads, opt, config)
            losses.append(loss * len(batch.aligned))
        report = evaluate_model(model, dev_corpus)
        entry = {
            "epoch": epoch + 1,
            "train_loss": float(np.sum(losses)) / len(aligned),
            "dev_phrase_f1": report.phrase_total.f1,
            "dev_word_f1": report.word_total.f1,
            "dev_loss": corpus_nll(model, dev_corpus),
        }
        history.append(entry)
        logger.info("epoch %d loss %.4f dev phrase F1 %.4f", epoch + 1, entry["train_loss"], entry["dev_phrase_f1"])
        stop = on_epoch is not None and bool(on_epoch(entry))
        if key(entry) > best_key:
            best_key, best_epoch, bad = key(entry), epoch + 1, 0
            if select == "best":
                best = _snapshot(model, opt, epoch + 1, history, best_epoch)
        else:
            bad += 1
        if stop or (bad >= config.patience and config.patience > 0):
            break

    if select == "last":
        return _snapshot(model, opt, len(history), history, best_epoch)
    best.history = [dict(h) for h in history]
    best.best_epoch = best_epoch
    return best


# -- checkpoint file -----------------------------------------------------------
#
#   magic "SEQTAGCK" | u32 version | u64 payload length | sha256(payload) | payload
#   payload = u32 tensor count, then per tensor:
#     u32 name length | utf-8 name | u8 dtype (1 f64, 2 i64, 3 u8) | u8 ndim |
#     u64 dims... | little-endian data
# All integers are little-endian.  Metadata, vocabulary and merges travel as
# u8 tensors holding UTF-8 text.

_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<i8"), 3: np.dtype("u1")}
_CODES = {"f": 1, "i": 2, "u": 3}


def _pack(tensors: Dict[str, np.ndarray]) -> bytes:
    parts = [struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        code = _CODES[arr.dtype.kind] if arr.dtype.kind != "b" else 3
        data = np.ascontiguousarray(arr, dtype=_DTYPES[code])
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw + struct.pack("<BB", code, data.ndim))
        parts.append(struct.pack(f"<{data.ndim}Q", *data.shape))
        parts.append(data.tobytes())
    return b"".join(parts)


def _unpack(payload: bytes) -> Dict[str, np.ndarray]:
    out = {}
    try:
        (count,) = struct.unpack_from("<I", payload, 0)
        pos = 4
        for _ in range(count):
            (n,) = struct.unpack_from("<I", payload, pos)
            pos += 4
            name = payload[pos : pos + n].decode("utf-8")
            pos += n
            code, ndim = struct.unpack_from("<BB", payload, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}Q", payload, pos)
            pos += 8 * ndim
            dt = _DTYPES[code]
            size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
            if pos + size > len(payload):
                raise CorruptCheckpoint("tensor data runs past the end of the file")
            out[name] = np.frombuffer(payload, dtype=dt, count=size // dt.itemsize, offset=pos).reshape(shape).copy()
            pos += size
    except (struct.error, KeyError, UnicodeDecodeError) as e:
        raise CorruptCheckpoint(f"unreadable tensor table: {e}") from None
    if pos != len(payload):
        raise CorruptCheckpoint("trailing bytes after tensor table")
    return out


def _text(s: str) -> np.ndarray:
    return np.frombuffer(s.encode("utf-8"), dtype=np.uint8)


def _untext(a: np.ndarray) -> str:
    return a.tobytes().decode("utf-8")


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    model = ckpt.model
    meta = {
        "format": FORMAT_VERSION,
        "tagset": {
            "name": model.tagset.name,
            "classes": list(model.tagset.classes),
            "display_names": list(model.tagset.display_names),
            "class_order": list(model.tagset.class_order),
        },
        "config": model.config.to_dict(),
        "continuation_marker": model.merges.continuation_marker,
        "epoch": ckpt.epoch,
        "best_epoch": ckpt.best_epoch,
        "step": ckpt.optimizer.step,
        "history": ckpt.history,
    }
    vocab_text, merges_text = merge_table_to_text(model.merges)
    tensors = {
        "meta": _text(json.dumps(meta, sort_keys=True)),
        "vocab": _text(vocab_text),
        "merges": _text(merges_text),
    }
    for k, v in model.parameters().items():
        tensors[f"param/{k}"] = v
    for k, v in ckpt.optimizer.m.items():
        tensors[f"adam.m/{k}"] = v
    for k, v in ckpt.optimizer.v.items():
        tensors[f"adam.v/{k}"] = v
    payload = _pack(tensors)
    header = MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(payload)) + hashlib.sha256(payload).digest()
    return header + payload


def checkpoint_from_bytes(blob: bytes) -> Checkpoint:
    head = len(MAGIC) + 12 + 32
    if len(blob) < head or blob[: len(MAGIC)] != MAGIC:
        raise CorruptCheckpoint("not a checkpoint file (bad magic or too short)")
    version, length = struct.unpack_from("<IQ", blob, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint format {version}, this build reads {FORMAT_VERSION}")
    payload = blob[head:]
    if len(payload) != length:
        raise CorruptCheckpoint(f"payload is {len(payload)} bytes, header says {length}")
    if hashlib.sha256(payload).digest() != blob[head - 32 : head]:
        raise CorruptCheckpoint("checksum mismatch")
    t = _unpack(payload)
    meta = json.loads(_untext(t["meta"]))
    ts = meta["tagset"]
    tagset = Tagset(ts["name"], tuple(ts["classes"]), tuple(ts["display_names"]), tuple(ts["class_order"]))
    merges = merge_table_from_text(_untext(t["vocab"]), _untext(t["merges"]))
    if meta["continuation_marker"] != merges.continuation_marker:
        merges = MergeTable(merges.vocab, merges.merges, meta["continuation_marker"])
    config = TrainConfig.from_dict(meta["config"])
    p = {k[len("param/"):]: v for k, v in t.items() if k.startswith("param/")}
    model = CrfModel(
        tagset=tagset,
        merges=merges,
        config=config,
        encoder={k[len("encoder."):]: v for k, v in p.items() if k.startswith("encoder.")},
        projection=crf.Projection(p["projection.weight"], p["projection.bias"]),
        transitions=crf.TransitionMatrix(p["crf.trans"], p["crf.start"], p["crf.stop"]),
    )
    opt = AdamState(
        {k[len("adam.m/"):]: v for k, v in t.items() if k.startswith("adam.m/")},
        {k[len("adam.v/"):]: v for k, v in t.items() if k.startswith("adam.v/")},
        meta["step"],
    )
    return Checkpoint(model, opt, meta["epoch"], meta["history"], meta["best_epoch"])


def save(ckpt: Checkpoint, path) -> None:
    try:
        Path(path).write_bytes(checkpoint_bytes(ckpt))
    except OSError as e:
        raise CheckpointError(f"{path}: {e.strerror or e}") from e


def load(path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"{path}: {e.strerror or e}") from e
    return checkpoint_from_bytes(blob)


# -- cross-validation ----------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    fold: int
    test: Tuple[int, ...]
    train: Tuple[int, ...]  # all k-1 training folds
    fit: Tuple[int, ...]  # train minus the dev slice
    dev: Tuple[int, ...]


def plan_folds(corpus: Corpus, k: int, seed: int = 0, dev_fraction: float = 0.1) -> List[FoldPlan]:
    split = split_kfold(corpus, k, seed)
    plans = []
    for i, test in enumerate(split.folds()):
        train_idx = split.train_indices(i)
        n_dev = min(max(1, int(round(dev_fraction * len(train_idx)))), len(train_idx) - 1)
        if n_dev < 1:
            # a single training sentence doubles as its own dev set
            dev, fit = list(train_idx), list(train_idx)
        else:
            perm = np.random.default_rng([seed, i, 3]).permutation(len(train_idx))
            dev = sorted(train_idx[j] for j in perm[:n_dev])
            dev_set = set(dev)
            fit = [j for j in train_idx if j not in dev_set]
        plans.append(FoldPlan(i, tuple(test), tuple(train_idx), tuple(fit), tuple(dev)))
    return plans


@dataclass
class CVResult:
    plans: List[FoldPlan]
    folds: List[EvalReport]
    pooled: EvalReport
    histories: List[List[dict]]


def cross_validate(
    corpus: Corpus,
    k: int,
    config: TrainConfig,
    trainer: Callable[..., Checkpoint] = train,
) -> CVResult:
    """Train on k-1 folds (less a seeded dev slice) and test on the held-out fold.

    A fresh BPE table is learned from each fold's training sentences.  The
    pooled report sums the counts of every fold, i.e. micro-averages over all
    decisions.
    """
    plans = plan_folds(corpus, k, config.seed, config.dev_fraction)
    reports, histories = [], []
    for plan in plans:
        fit = corpus.subset(plan.fit, f"{corpus.source_name}[fold {plan.fold} fit]")
        dev = corpus.subset(plan.dev, f"{corpus.source_name}[fold {plan.fold} dev]")
        test = corpus.subset(plan.test, f"{corpus.source_name}[fold {plan.fold} test]")
        merges = train_bpe((w for s in corpus.subset(plan.train) for w in s.tokens), config.vocab_size)
        ckpt = trainer(fit, dev, config, merges=merges)
        reports.append(evaluate_model(ckpt.model, test, name=f"fold{plan.fold}"))
        histories.append(ckpt.history)
    pooled = reports[0]
    for r in reports[1:]:
        pooled = pooled + r
    pooled = dataclasses.replace(pooled, name="pooled")
    return CVResult(plans, reports, pooled, histories)
