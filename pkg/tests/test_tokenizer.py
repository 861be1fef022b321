import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqtag.corpus import PEYMA, TaggedSentence, Tagset
from seqtag.synthetic import make_corpus
from seqtag.tokenizer import (
    SPECIALS,
    LengthMismatch,
    MergeTable,
    VocabTooSmall,
    WordTooLong,
    align,
    encode_word,
    load_merge_table,
    project,
    save_merge_table,
    train_bpe,
)

TWO = Tagset("two", ("PER", "LOC"))
B_PER, I_PER, B_LOC, I_LOC = 1, 2, 3, 4


def table_with(chars, merges=()):
    vocab = {s: i for i, s in enumerate(SPECIALS)}
    for ch in chars:
        vocab.setdefault(ch, len(vocab))
    for a, b in merges:
        vocab.setdefault(a + b, len(vocab))
    return MergeTable(vocab, tuple(merges))


def test_single_candidate_pair():
    t = train_bpe(["aa"] * 5, vocab_size=1 + 4 + 1)
    assert t.merges == (("a", "a"),)
    assert len(t) == 6


def test_most_frequent_pair_wins():
    # pair counts: (a,b)=3, (b,c)=2
    t = train_bpe(["ab"] * 3 + ["bc"] * 2, vocab_size=3 + 4 + 1)
    assert t.merges == (("a", "b"),)


def test_ties_break_lexicographically():
    t = train_bpe(["cd", "cd", "ab", "ab"], vocab_size=4 + 4 + 1)
    assert t.merges == (("a", "b"),)


def test_single_character_words_never_merge():
    t = train_bpe(list("abcde") * 4, vocab_size=100)
    assert t.merges == ()


def test_pairs_seen_once_are_not_merged():
    assert train_bpe(["abc"], vocab_size=100).merges == ()


def test_vocab_too_small():
    with pytest.raises(VocabTooSmall):
        train_bpe(["ab"], vocab_size=6)


def test_merges_stay_inside_words():
    t = train_bpe(["a", "b"] * 10, vocab_size=50)
    assert t.merges == ()


def test_invariants_after_training():
    words = [w for s in make_corpus(100, seed=2) for w in s.tokens]
    t = train_bpe(words, vocab_size=80)
    assert sorted(t.vocab.values()) == list(range(len(t)))
    ids = [t.vocab[s] for s in SPECIALS]
    assert len(set(ids)) == 4
    for a, b in t.merges:
        assert a + b in t.vocab and a + b not in SPECIALS


def test_encode_whole_word_in_vocab():
    t = table_with("ab", [("a", "b")])
    assert encode_word("ab", t) == [t.vocab["ab"]]
    assert t.tokenize("ab") == ["ab"]


def test_encode_without_merge_marks_second_piece():
    t = table_with("ab")
    assert t.tokenize("ab") == ["a", "##b"]
    assert encode_word("ab", t) == [t.vocab["a"], t.vocab["b"]]


def test_encode_by_rank():
    t = table_with("abc", [("a", "b")])
    assert t.tokenize("abc") == ["ab", "##c"]
    # rank order, not left-to-right: (b,c) outranks (a,b)
    t2 = table_with("abc", [("b", "c"), ("a", "b")])
    assert t2.tokenize("abc") == ["a", "##bc"]


def test_unknown_characters_fall_back_per_character():
    t = table_with("ab", [("a", "b")])
    assert encode_word("abzb", t) == [t.vocab["ab"], t.unk_id, t.vocab["b"]]


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="abcde", min_size=1, max_size=12))
def test_pieces_concatenate_to_word(word):
    t = train_bpe(["abcab", "cab", "deed", "bead", "abba"] * 3, vocab_size=40)
    pieces = t.tokenize(word)
    assert "".join(p.removeprefix("##") for p in pieces) == word
    assert encode_word(word, t) == encode_word(word, t)


def test_merge_table_files_roundtrip(tmp_path):
    t = train_bpe([w for s in make_corpus(60, seed=3) for w in s.tokens], vocab_size=70)
    v, m = tmp_path / "vocab.txt", tmp_path / "merges.txt"
    save_merge_table(t, v, m)
    back = load_merge_table(v, m)
    assert back == t
    v2, m2 = tmp_path / "v2", tmp_path / "m2"
    save_merge_table(back, v2, m2)
    assert v.read_bytes() == v2.read_bytes() and m.read_bytes() == m2.read_bytes()
    assert v.read_text().splitlines()[:4] == list(SPECIALS)


# -- alignment -------------------------------------------------------------------


def test_align_single_subword():
    t = table_with("Ali", [("A", "l"), ("Al", "i")])
    a = align(TaggedSentence(("Ali",), (B_PER,)), t, TWO)
    x = TWO.x_id
    assert a.labels.tolist() == [x, B_PER, x]
    assert a.token_of == (None, 0, None)
    assert a.subword_ids.tolist() == [t.bos_id, t.vocab["Ali"], t.eos_id]


def test_align_three_subwords():
    t = table_with("Ali")
    a = align(TaggedSentence(("Ali",), (B_PER,)), t, TWO)
    x = TWO.x_id
    assert a.labels.tolist() == [x, B_PER, x, x, x]


def test_align_two_words_two_subwords_each():
    t = table_with("abcd")
    a = align(TaggedSentence(("ab", "cd"), (B_LOC, I_LOC)), t, TWO)
    assert np.flatnonzero(a.labels != TWO.x_id).tolist() == [1, 3]
    assert a.token_of == (None, 0, 0, 1, 1, None)


def test_align_truncates_at_word_boundary():
    t = table_with("abc")
    s = TaggedSentence(("ab", "c", "ab"), (B_PER, 0, B_LOC))
    a = align(s, t, TWO, max_len=6)
    # BOS a b c EOS fits; the last word would need 2 more slots
    assert len(a) == 5 and a.truncated == 1
    wt = project(a, a.labels)
    assert wt.tags == [B_PER, 0, 0] and wt.truncated == 1


def test_align_word_too_long():
    t = table_with("abcd")
    with pytest.raises(WordTooLong):
        align(TaggedSentence(("abcd",), (0,)), t, TWO, max_len=5)


def test_project_roundtrip_and_all_o():
    t = table_with("abcd")
    s = TaggedSentence(("ab", "c", "dd"), (B_PER, 0, B_LOC))
    a = align(s, t, TWO)
    assert project(a, a.labels).tags == list(s.tags)
    assert project(a, [0] * len(a)).tags == [0, 0, 0]


def test_project_coerces_x():
    t = table_with("abcd")
    a = align(TaggedSentence(("ab", "c"), (B_PER, I_PER)), t, TWO)
    preds = a.labels.copy()
    preds[1] = TWO.x_id
    wt = project(a, preds)
    assert wt.tags == [0, I_PER] and wt.coerced == 1


def test_project_length_mismatch():
    t = table_with("ab")
    a = align(TaggedSentence(("ab",), (0,)), t, TWO)
    with pytest.raises(LengthMismatch):
        project(a, [0, 0])


def test_alignment_invariants_on_fixture():
    c = make_corpus(150, seed=4)
    t = train_bpe([w for s in c for w in s.tokens], vocab_size=60)
    for s in c:
        a = align(s, t, PEYMA)
        x = PEYMA.x_id
        real = [i for i, w in enumerate(a.token_of) if w is not None]
        x_real = sum(1 for i in real if a.labels[i] == x)
        assert x_real == len(real) - len(s)
        non_x = [a.token_of[i] for i in range(len(a)) if a.labels[i] != x]
        assert non_x == list(range(len(s)))
        assert project(a, a.labels).tags == list(s.tags)
