"""Sequence labeling with BPE subwords, a self-attention encoder and a linear-chain CRF."""
from .corpus import ARMAN, PEYMA, Corpus, TaggedSentence, Tagset, class_distribution, parse_conll, split_kfold, to_conll, validate_bio
from .crf import EmissionMatrix, Projection, TransitionMatrix, log_partition, marginals, nll_and_grads, path_score, viterbi
from .encoder import EncoderConfig, backward, forward, init_params
from .evaluator import EvalReport, evaluate, extract_spans, phrase_f1, render_report, word_f1
from .tokenizer import MergeTable, align, encode_word, project, train_bpe
from .trainer import Checkpoint, CrfModel, TrainConfig, cross_validate, load, predict, save, train

__version__ = "0.1.0"
