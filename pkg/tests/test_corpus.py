import json
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from longmatch.corpus import (Document, MatchExample, Vocab, build_vocab,
                              default_stopwords, load_dataset, load_stopwords,
                              remove_stopwords, split_sentences, tokenize)
from longmatch.errors import EmptyDocument, LabelError, ParseError

DATA = Path(__file__).parent / "data"


# ---------------------------------------------------------------------------
# split_sentences
# ---------------------------------------------------------------------------

def test_two_terminal_periods():
    sents = split_sentences("A cat sat. A dog ran.")
    assert [s.text for s in sents] == ["A cat sat.", "A dog ran."]


def test_no_terminator_still_one_sentence():
    sents = split_sentences("One sentence only")
    assert len(sents) == 1


def test_abbreviation_does_not_split():
    sents = split_sentences("Dr. Smith arrived. He left.")
    assert [s.text for s in sents] == ["Dr. Smith arrived.", "He left."]


def test_empty_document_rejected():
    with pytest.raises(EmptyDocument):
        split_sentences("   \n\t  ")


def test_hand_labeled_fixture():
    # 50 sentences across 21 documents, checked by eye.
    fixture = json.loads((DATA / "sentence_fixture.json").read_text())
    total = 0
    for case in fixture:
        sents = split_sentences(case["text"])
        assert [s.text for s in sents] == case["sentences"], case["text"]
        total += len(sents)
    assert total == 50


def test_split_indices_and_doc_id():
    sents = split_sentences("One here. Two here. Three here.", doc_id="d9")
    assert [s.index_in_doc for s in sents] == [0, 1, 2]
    assert all(s.doc_id == "d9" for s in sents)


def test_split_concatenation_lossless_modulo_whitespace():
    fixture = json.loads((DATA / "sentence_fixture.json").read_text())
    for case in fixture:
        sents = split_sentences(case["text"])
        joined = "".join(s.text for s in sents)
        assert "".join(joined.split()) == "".join(case["text"].split())


# ---------------------------------------------------------------------------
# tokenize
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("text,expected", [
    ("A cat sat.", ["a", "cat", "sat", "."]),
    ("", []),
    ("state-of-the-art", ["state", "-", "of", "-", "the", "-", "art"]),
    ("Hello, World!", ["hello", ",", "world", "!"]),
    ("x1 2y", ["x1", "2y"]),
])
def test_tokenize_cases(text, expected):
    assert tokenize(text) == expected


@given(st.text(max_size=80))
def test_tokenize_idempotent_on_rejoined_text(text):
    once = tokenize(text)
    assert tokenize(" ".join(once)) == once


# ---------------------------------------------------------------------------
# remove_stopwords
# ---------------------------------------------------------------------------

def test_remove_stopwords_basic():
    assert remove_stopwords(["the", "cat", "sat"], {"the"}) == ["cat", "sat"]


def test_remove_stopwords_all_stopwords():
    assert remove_stopwords(["the", "a", "of"], {"the", "a", "of"}) == []


def test_remove_stopwords_drops_punctuation():
    # Hand check: tokens {quick, brown, fox, .} minus stopwords {the, a}
    tokens = ["the", "quick", ",", "brown", "fox", ".", "a"]
    assert remove_stopwords(tokens, {"the", "a"}) == ["quick", "brown", "fox"]


def test_remove_stopwords_ten_token_fixture():
    # Set difference computed by hand on a 10-token sentence.
    tokens = ["a", "storm", "hit", "the", "coast", "and", "waves",
              "rose", "very", "fast"]
    stops = {"a", "the", "and", "very"}
    assert remove_stopwords(tokens, stops) == ["storm", "hit", "coast",
                                               "waves", "rose", "fast"]


def test_content_tokens_subset_of_tokens():
    doc = Document.from_text("d", "The quick brown fox jumps over the dog.")
    for s in doc.sentences:
        for tok in s.content_tokens:
            assert tok in s.tokens


def test_packaged_stopword_list_loads():
    stops = default_stopwords()
    assert "the" in stops and "of" in stops
    assert all(w == w.lower() for w in stops)


def test_stopword_file_comments(tmp_path):
    f = tmp_path / "stop.txt"
    f.write_text("# comment\nfoo\n\nbar\n")
    assert load_stopwords(f) == {"foo", "bar"}


# ---------------------------------------------------------------------------
# load_dataset
# ---------------------------------------------------------------------------

def _write_jsonl(path, records):
    with path.open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def test_load_dataset_valid(tmp_path):
    f = tmp_path / "data.jsonl"
    _write_jsonl(f, [
        {"text_a": "A cat. A dog.", "text_b": "A bird.", "label": 1},
        {"text_a": "One.", "text_b": "Two.", "label": 0},
        {"text_a": "Three.", "text_b": "Four.", "label": 1},
    ])
    examples = load_dataset(f)
    assert len(examples) == 3
    assert [ex.label for ex in examples] == [1, 0, 1]
    assert len(examples[0].text_a.sentences) == 2


def test_load_dataset_bad_label(tmp_path):
    f = tmp_path / "data.jsonl"
    _write_jsonl(f, [{"text_a": "A.", "text_b": "B.", "label": 2}])
    with pytest.raises(LabelError) as exc:
        load_dataset(f)
    assert exc.value.line_no == 1


def test_load_dataset_bad_json_line_number(tmp_path):
    f = tmp_path / "data.jsonl"
    f.write_text('{"text_a": "A.", "text_b": "B.", "label": 1}\nnot json\n')
    with pytest.raises(ParseError) as exc:
        load_dataset(f)
    assert exc.value.line_no == 2


def test_load_dataset_missing_field(tmp_path):
    f = tmp_path / "data.jsonl"
    _write_jsonl(f, [{"text_a": "A.", "label": 1}])
    with pytest.raises(ParseError):
        load_dataset(f)


def test_load_dataset_empty_text(tmp_path):
    f = tmp_path / "data.jsonl"
    _write_jsonl(f, [{"text_a": "   ", "text_b": "B.", "label": 0}])
    with pytest.raises(ParseError) as exc:
        load_dataset(f)
    assert exc.value.line_no == 1


def test_load_dataset_bool_label_rejected(tmp_path):
    f = tmp_path / "data.jsonl"
    f.write_text('{"text_a": "A.", "text_b": "B.", "label": true}\n')
    with pytest.raises(LabelError):
        load_dataset(f)


def test_load_dataset_synthetic_count_and_order(tmp_path):
    f = tmp_path / "big.jsonl"
    _write_jsonl(f, [{"text_a": f"Alpha number {i}.", "text_b": "Beta.",
                      "label": i % 2} for i in range(1000)])
    examples = load_dataset(f)
    assert len(examples) == 1000
    assert [ex.label for ex in examples] == [i % 2 for i in range(1000)]
    assert examples[17].text_a.raw_text == "Alpha number 17."


# ---------------------------------------------------------------------------
# Vocab
# ---------------------------------------------------------------------------

def _example(text_a, text_b, label=1):
    return MatchExample(Document.from_text("a", text_a),
                        Document.from_text("b", text_b), label)


def test_build_vocab_min_freq():
    ex = _example("a a b", "c")
    vocab = build_vocab([ex], min_freq=2)
    assert "a" in vocab and "b" not in vocab
    assert vocab.encode("b") == vocab.unk_id


def test_build_vocab_min_freq_one_keeps_all():
    ex = _example("red green blue", "green yellow")
    vocab = build_vocab([ex], min_freq=1)
    for tok in ("red", "green", "blue", "yellow"):
        assert tok in vocab


def test_build_vocab_known_frequency_table():
    # Hand-counted corpus: x appears 4 times, y 2, z 1 -> min_freq=2 keeps
    # the 4 specials plus x, y and the shared '.' token (2 occurrences).
    ex = _example("x x y.", "x x y.")
    vocab = build_vocab([ex], min_freq=2)
    assert vocab.size == 4 + 3
    assert "x" in vocab and "y" in vocab and "." in vocab


def test_special_ids_distinct_and_inside_range():
    vocab = build_vocab([_example("hello there", "general")], min_freq=1)
    ids = {vocab.pad_id, vocab.unk_id, vocab.cls_id, vocab.sep_id}
    assert len(ids) == 4
    assert all(0 <= i < vocab.size for i in ids)


def test_vocab_round_trip_identity():
    vocab = build_vocab([_example("alpha beta gamma", "delta beta")])
    for token_id in range(vocab.size):
        assert vocab.encode(vocab.token(token_id)) == token_id


def test_vocab_rejects_duplicates():
    with pytest.raises(ValueError):
        Vocab(["dup", "dup"])


def test_min_freq_validation():
    with pytest.raises(ValueError):
        build_vocab([], min_freq=0)
