"""CoNLL-U reader/writer: bracket grammar, empty nodes, round trips."""
import pytest
from hypothesis import given, strategies as st

from corefkit.conllu import (ConlluError, mention_head, parse_conllu,
                             serialize_conllu)
from corefkit.synth import SynthConfig, random_document

from conftest import SISTER_CONLLU, make_sister_doc


def chain_table(doc):
    return {cid: sorted((m.fragments, m.head, m.is_zero) for m in c.mentions)
            for cid, c in doc.chains.items()}


def test_parse_showcase_sentence():
    doc = parse_conllu(SISTER_CONLLU)[0]
    assert doc.doc_id == "demo"
    assert [t.form for t in doc.sentences[0].tokens] == [
        "When", "Lison", "visits", "her", "sister", ",", "brings", "flowers."]
    assert chain_table(doc) == chain_table(make_sister_doc())
    [zero] = doc.sentences[0].empty_nodes
    assert (zero.position, zero.sub_index, zero.deps) == (7, 1, "7:nsubj")


def test_serialize_showcase_sentence():
    assert serialize_conllu(make_sister_doc()) == SISTER_CONLLU


def test_parse_serialize_is_byte_stable():
    text = serialize_conllu(parse_conllu(SISTER_CONLLU)[0])
    assert text == SISTER_CONLLU
    assert serialize_conllu(parse_conllu(text)[0]) == text


DISC = """\
# newdoc id = d
# sent_id = s1
1\tthe\t_\t_\t_\t_\t2\t_\t_\t_
2\tdog\t_\t_\t_\t_\t0\t_\t_\tEntity=(e9[1/2]-1
3\tthat\t_\t_\t_\t_\t2\t_\t_\tEntity=e9[1/2])
4\tbarks\t_\t_\t_\t_\t2\t_\t_\t_
5-6\tat'em\t_\t_\t_\t_\t_\t_\t_\t_
5\tat\t_\t_\t_\t_\t4\t_\t_\t_
6\tthem\t_\t_\t_\t_\t5\t_\t_\tEntity=(e9[2/2])
7\tloudly\t_\t_\t_\t_\t4\t_\t_\tEntity=(e2-kind-1-extra)

"""


def test_discontinuous_mention_parts_join():
    doc = parse_conllu(DISC)[0]
    [m] = doc.chains["e9"].mentions
    assert m.fragments == ((2, 3), (6, 6))
    # head index 1 counts tokens across the concatenated fragments
    assert m.head == (2, 0)


def test_unknown_dash_fields_survive_round_trip():
    doc = parse_conllu(DISC)[0]
    [m] = doc.chains["e2"].mentions
    assert m.raw_fields == "kind-1-extra"
    assert serialize_conllu(doc) == DISC


def test_mwt_ranges_pass_through():
    assert "5-6\tat'em" in serialize_conllu(parse_conllu(DISC)[0])


def test_head_falls_back_to_dependency_structure():
    # strip the explicit head index: the head becomes the first token whose
    # governor lies outside the span ("dog", governed by the root)
    text = DISC.replace("(e9[1/2]-1", "(e9[1/2]")
    [m] = parse_conllu(text)[0].chains["e9"].mentions
    assert m.head == (2, 0)


def test_interleaved_parts_match_oldest_open():
    # two discontinuous e1 mentions whose second parts arrive in FIFO order
    text = """\
# newdoc id = d
# sent_id = s1
1\ta\t_\t_\t_\t_\t0\t_\t_\tEntity=(e1[1/2]-1)
2\tb\t_\t_\t_\t_\t1\t_\t_\tEntity=(e1[1/2]-1)
3\tc\t_\t_\t_\t_\t1\t_\t_\tEntity=(e1[2/2])
4\td\t_\t_\t_\t_\t1\t_\t_\tEntity=(e1[2/2])

"""
    doc = parse_conllu(text)[0]
    frags = sorted(m.fragments for m in doc.chains["e1"].mentions)
    assert frags == [((1, 1), (3, 3)), ((2, 2), (4, 4))]


@pytest.mark.parametrize("line, message", [
    ("1\tonly-two", "10 tab-separated columns"),
    ("x\tbad\t_\t_\t_\t_\t0\t_\t_\t_", "bad token id"),
    ("1\tself\t_\t_\t_\t_\t1\t_\t_\t_", "governs itself"),
    ("1\topen\t_\t_\t_\t_\t0\t_\t_\tEntity=(e1-1", "unclosed"),
    ("1\tclose\t_\t_\t_\t_\t0\t_\t_\tEntity=e1)", "close without open"),
    ("1\tpart\t_\t_\t_\t_\t0\t_\t_\tEntity=(e1[2/2])", "no preceding part"),
])
def test_malformed_input_raises(line, message):
    text = f"# newdoc id = d\n# sent_id = s1\n{line}\n\n"
    with pytest.raises(ConlluError, match=message):
        parse_conllu(text)


def test_sentence_before_document_header_raises():
    with pytest.raises(ConlluError, match="newdoc"):
        parse_conllu("# sent_id = s1\n1\tword\t_\t_\t_\t_\t0\t_\t_\t_\n\n")


def test_duplicate_sent_id_raises():
    block = "1\tword\t_\t_\t_\t_\t0\t_\t_\t_\n\n"
    text = ("# newdoc id = d\n# sent_id = s1\n" + block
            + "# sent_id = s1\n" + block)
    with pytest.raises(ConlluError, match="duplicate sent_id"):
        parse_conllu(text)


def test_error_carries_line_number():
    text = "# newdoc id = d\n# sent_id = s1\n1\tbad\tcols\n\n"
    with pytest.raises(ConlluError, match=r"line 3"):
        parse_conllu(text)


def test_mention_head_prefers_external_governor():
    doc = parse_conllu(DISC)[0]
    sent = doc.sentences[0]
    assert mention_head(((1, 3),), sent) == (2, 0)  # "dog" governed from outside
    assert mention_head(((5, 6),), sent) == (5, 0)  # "at" governed by "barks"


@given(seed=st.integers(0, 10_000), disc=st.booleans())
def test_random_documents_round_trip(seed, disc):
    cfg = SynthConfig(seed=seed, p_discontinuous=0.25 if disc else 0.0)
    doc = random_document(f"doc{seed}", cfg)
    text = serialize_conllu(doc)
    back = parse_conllu(text)[0]
    assert chain_table(back) == chain_table(doc)
    assert serialize_conllu(back) == text
