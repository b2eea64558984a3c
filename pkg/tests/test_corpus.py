import json

import pytest

from iurewrite.corpus import (SEP, CorpusError, Dialogue, Vocab, convert_canard, dump_jsonl,
                              encode_example, load_jsonl, make_synthetic_corpus, tokenize)
from iurewrite.supervision import Status, build_gold_edit_grid


def test_tokenize_splits_punctuation_and_lowercases():
    assert tokenize("Parsons' Biology, at Amherst?") == ["parsons", "'", "biology", ",", "at", "amherst", "?"]
    assert tokenize("   ") == []


def test_parsons_layout(parsons):
    x = encode_example(parsons, Vocab.build([parsons]))
    assert [len(u) for u in parsons.context] == [7, 9, 11, 5, 15]
    assert x.n_ctx_tokens == 47
    assert x.n_utt_tokens == 7
    assert len(x) == 47 + 5 + 7
    assert len(x.segment_spans) == 6
    # one separator after every context utterance, none after the incomplete one
    assert [x.tokens[e] for s, e in x.segment_spans[:-1]] == [SEP] * 5
    assert x.tokens[-1] == "?"
    assert [x.tokens[p] for p in x.incomplete_positions] == list(parsons.incomplete.tokens)
    assert [x.tokens[p] for p in x.context_positions] == parsons.context_tokens


def test_row_owner(parsons):
    owner = parsons.row_owner
    assert len(owner) == 47
    assert owner[:7] == [0] * 7 and owner[-15:] == [4] * 15


def test_vocab_reserved_and_roundtrip(parsons):
    v = Vocab.build([parsons])
    assert (v.pad_id, v.sep_id) == (0, 1)
    assert v.lookup(["zzz-never-seen"]) == [2]
    assert Vocab.from_list(v.to_list()).to_list() == v.to_list()
    with pytest.raises(CorpusError):
        Vocab.from_list(["a", "b", "c"])


def test_dialogue_rejects_empty_fields():
    with pytest.raises(CorpusError):
        Dialogue.from_texts([], "why ?", None)
    with pytest.raises(CorpusError):
        Dialogue.from_texts(["hello"], " ", None)


def test_jsonl_roundtrip_and_default_ids(tmp_path):
    data = make_synthetic_corpus(3, 5)
    path = tmp_path / "d.jsonl"
    dump_jsonl(data, path)
    back = load_jsonl(path)
    assert [d.to_record() for d in back] == [d.to_record() for d in data]

    path.write_text('{"context": ["a b"], "incomplete": "c"}\n\n{"context": ["x"], "incomplete": "y"}\n')
    assert [d.id for d in load_jsonl(path)] == ["1", "3"]


@pytest.mark.parametrize("line, needle", [
    ("{not json", "line 1"),
    ('{"incomplete": "x"}', "context"),
    ('{"context": "a", "incomplete": "x"}', "list of strings"),
    ('{"context": [], "incomplete": "x", "id": "q7"}', "q7"),
])
def test_malformed_records_name_the_line(tmp_path, line, needle):
    path = tmp_path / "bad.jsonl"
    path.write_text(line + "\n")
    with pytest.raises(CorpusError, match=needle):
        load_jsonl(path)


def test_convert_canard():
    recs = [
        {"History": ["Frank Zappa", "Disbandment"], "Question": "What year did he disband?",
         "Rewrite": "What year did Frank Zappa disband?", "QuAC_dialog_id": "C_1", "Question_no": 2},
        {"History": [], "Question": "Who?", "Rewrite": "Who?"},
    ]
    out = convert_canard(recs)
    assert len(out) == 1
    assert out[0].id == "C_1#2"
    assert out[0].n_context == 2


def test_synthetic_corpus_is_seeded_and_aligned():
    a = make_synthetic_corpus(7, 200)
    b = make_synthetic_corpus(7, 200)
    assert [d.to_record() for d in a] == [d.to_record() for d in b]
    assert [d.to_record() for d in a] != [d.to_record() for d in make_synthetic_corpus(8, 200)]
    assert len({d.id for d in a}) == 200
    assert all(build_gold_edit_grid(d).status == Status.ALIGNED for d in a)
    assert all(json.dumps(d.to_record()) for d in a)
