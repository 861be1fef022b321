import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqtag.corpus import (
    ARMAN,
    PEYMA,
    BadK,
    Corpus,
    EmptyCorpus,
    MalformedLine,
    TaggedSentence,
    Tagset,
    UnknownTag,
    class_distribution,
    parse_conll,
    read_tagset_file,
    render_stats,
    repair_bio,
    split_kfold,
    to_conll,
    validate_bio,
)
from seqtag.synthetic import make_corpus

PER_ONLY = Tagset("per", ("PER",))
TWO = Tagset("two", ("PER", "LOC"))


def sent(labels, tagset=TWO):
    return TaggedSentence(tuple(f"w{i}" for i in range(len(labels))), tuple(tagset.label_id(l) for l in labels))


def test_tagset_label_layout():
    assert PEYMA.num_labels == 15
    assert ARMAN.num_labels == 13
    assert TWO.labels == ("O", "B-PER", "I-PER", "B-LOC", "I-LOC")
    assert TWO.x_id == 5 and TWO.label(5) == "X"
    assert PEYMA.display_names[:3] == ("Date", "Location", "Money")


def test_class_order_must_permute_classes():
    assert TWO.class_order == TWO.classes
    with pytest.raises(ValueError):
        Tagset("bad", ("A", "B"), class_order=("A", "C"))


@pytest.mark.parametrize("classes", [(), ("A", "A"), ("A B",), ("",)])
def test_tagset_rejects_bad_classes(classes):
    with pytest.raises(ValueError):
        Tagset("bad", classes)


def test_tagset_file():
    ts = read_tagset_file("PER Person\nLOC\n\n")
    assert ts.classes == ("PER", "LOC")
    assert ts.display_names == ("Person", "LOC")


def test_parse_minimal():
    c = parse_conll("Ali\tB-PER\n\n", PER_ONLY)
    assert len(c) == 1
    assert c.sentences[0].tokens == ("Ali",)
    assert c.sentences[0].tags == (PER_ONLY.label_id("B-PER"),)


def test_parse_space_separated_without_trailing_blank():
    c = parse_conll("Ali B-PER\nwent O\n", PER_ONLY)
    assert len(c) == 1 and len(c.sentences[0]) == 2
    assert c.sentences[0].lines == (1, 2)


def test_parse_unknown_tag():
    with pytest.raises(UnknownTag) as e:
        parse_conll("Ali\tB-XYZ\n\n", PEYMA)
    assert (e.value.line_no, e.value.tag) == (1, "B-XYZ")


@pytest.mark.parametrize("text,line", [("a\tO\nb\n", 2), ("a\tO\tO\n", 1), ("a b c\n", 1), ("\n\n\tO\n", 3)])
def test_parse_malformed(text, line):
    with pytest.raises(MalformedLine) as e:
        parse_conll(text, PER_ONLY)
    assert e.value.line_no == line


@pytest.mark.parametrize("text", ["", "\n\n  \n"])
def test_parse_empty(text):
    with pytest.raises(EmptyCorpus):
        parse_conll(text, PER_ONLY)


def test_parse_keeps_unicode_as_is():
    text = "علی\tB-PER\nرفت\tO\n\n"
    c = parse_conll(text, PER_ONLY)
    assert c.sentences[0].tokens == ("علی", "رفت")
    assert to_conll(c) == text


def test_roundtrip_normalises_separator():
    text = "a B-PER\nb I-PER\n\n\nc O\n"
    c = parse_conll(text, PER_ONLY)
    assert to_conll(c) == "a\tB-PER\nb\tI-PER\n\nc\tO\n\n"
    assert parse_conll(to_conll(c), PER_ONLY) == c


def test_validate_bio_examples():
    assert validate_bio(sent(["B-PER", "I-PER", "O"]), TWO) == []
    assert [v.position for v in validate_bio(sent(["I-PER", "O"]), TWO)] == [0]
    assert [v.position for v in validate_bio(sent(["B-PER", "I-LOC"]), TWO)] == [1]
    assert [v.position for v in validate_bio(sent(["O", "I-LOC", "I-LOC"]), TWO)] == [1]


def test_repair_rewrites_orphans():
    s = repair_bio(sent(["I-PER", "O", "B-PER", "I-LOC", "I-LOC"]), TWO)
    assert [TWO.label(t) for t in s.tags] == ["B-PER", "O", "B-PER", "B-LOC", "I-LOC"]
    c = parse_conll("a\tI-PER\n", TWO, repair=True)
    assert validate_bio(c.sentences[0], TWO) == []


def corpus_of(n):
    return Corpus(TWO, tuple(sent(["O"]) for _ in range(n)))


def test_split_five_folds_of_1429():
    split = split_kfold(corpus_of(7145), 5, 0)
    assert split.sizes == [1429] * 5


def test_split_k_equals_n():
    assert split_kfold(corpus_of(10), 10, 3).sizes == [1] * 10


def test_split_pigeonhole():
    assert sorted(split_kfold(corpus_of(11), 5, 0).sizes) == [2, 2, 2, 2, 3]


@pytest.mark.parametrize("k", [1, 0, 12])
def test_split_bad_k(k):
    with pytest.raises(BadK):
        split_kfold(corpus_of(11), k, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 200), st.integers(2, 20), st.integers(0, 2**63 - 1))
def test_split_partition_properties(n, k, seed):
    k = min(k, n)
    c = corpus_of(n)
    split = split_kfold(c, k, seed)
    folds = split.folds()
    flat = sorted(i for f in folds for i in f)
    assert flat == list(range(n))
    assert max(split.sizes) - min(split.sizes) <= 1
    assert split_kfold(c, k, seed) == split


def test_class_distribution_adjacent_b():
    stats = class_distribution(Corpus(TWO, (sent(["B-PER", "I-PER", "B-PER"]),)))
    assert stats.phrases == {"PER": 2}
    assert stats.class_tokens == {"PER": 3}


def test_class_distribution_all_o():
    stats = class_distribution(Corpus(TWO, (sent(["O", "O"]), sent(["O"]))))
    assert stats.phrases == {}
    assert stats.num_tokens == 3 and stats.num_sentences == 2


def test_class_distribution_hand_counted_fixture():
    # LOC phrases: [1,3) in s1, [0,1) in s2, [2,3) in s2; PER: [0,1) in s1
    c = Corpus(TWO, (
        sent(["B-PER", "B-LOC", "I-LOC", "O"]),
        sent(["B-LOC", "O", "B-LOC"]),
    ))
    stats = class_distribution(c)
    assert stats.phrases == {"PER": 1, "LOC": 3}
    kv, table = render_stats(stats, TWO)
    assert "phrases.LOC\t3" in kv
    assert table.splitlines() == ["class\tphrase_count\ttoken_count", "PER\t1\t1", "LOC\t3\t4"]


def test_phrase_counts_equal_b_tags_on_synthetic():
    c = make_corpus(300, seed=5)
    stats = class_distribution(c)
    n_b = sum(1 for s in c for t in s.tags if c.tagset.prefix(t) == "B")
    assert sum(stats.phrases.values()) == n_b
