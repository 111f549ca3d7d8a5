"""Shared fixtures: the worked single-sentence document and its renderings.

The sentence exercises every construct at once — a nested mention pair, a
pronoun inside the outer span, and a zero subject realized as an empty node
after "brings" — so most format and round-trip tests start from it.
"""
import pytest
from hypothesis import settings

from corefkit.conllu import Chain, Document, Mention, Sentence, Token

settings.register_profile("suite", max_examples=60, deadline=None)
settings.load_profile("suite")


# one rendering per format, frozen byte-for-byte
GOLDEN = {
    "crac": "When Lison|[e1] visits her|[e1],[e2 sister|e2] ,"
            " brings ##|[e1] flowers.",
    "explicit": "When <ent id=COREF_1> Lison </ent> visits <ent id=COREF_2>"
                " <ent id=COREF_1> her </ent> sister </ent> ,"
                " brings <zero_ent id=COREF_1> flowers.",
    "minimal": "When <ent1> Lison </ent> visits <ent2> <ent1> her </ent>"
               " sister </ent> , brings <zero1> flowers.",
    "headword": "When Lison <ent1> visits her <ent1> sister <ent2> ,"
                " brings <zero1> flowers.",
}

SISTER_CONLLU = """\
# newdoc id = demo
# sent_id = s1
1\tWhen\t_\t_\t_\t_\t3\t_\t_\t_
2\tLison\t_\t_\t_\t_\t3\t_\t_\tEntity=(e1-1)
3\tvisits\t_\t_\t_\t_\t0\t_\t_\t_
4\ther\t_\t_\t_\t_\t5\t_\t_\tEntity=(e2-2(e1-1)
5\tsister\t_\t_\t_\t_\t3\t_\t_\tEntity=e2)
6\t,\t_\t_\t_\t_\t7\t_\t_\t_
7\tbrings\t_\t_\t_\t_\t3\t_\t_\t_
7.1\t_\t_\t_\t_\t_\t_\t_\t7:nsubj\tEntity=(e1)
8\tflowers.\t_\t_\t_\t_\t7\t_\t_\t_

"""


def make_sister_doc() -> Document:
    """chains: e1 = {Lison, her, zero after "brings"}, e2 = {her sister}."""
    words = [("When", 3), ("Lison", 3), ("visits", 0), ("her", 5),
             ("sister", 3), (",", 7), ("brings", 3), ("flowers.", 7)]
    sent = Sentence("s1", [Token(i + 1, form, head)
                           for i, (form, head) in enumerate(words)])
    sent.empty_nodes.append(Token(7, "_", 0, True, 1, deps="7:nsubj"))
    doc = Document("demo", [sent])
    doc.chains["e1"] = Chain("e1", [
        Mention("e1", 0, ((2, 2),), (2, 0)),
        Mention("e1", 0, ((4, 4),), (4, 0)),
        Mention("e1", 0, (), (7, 1), is_zero=True),
    ])
    doc.chains["e2"] = Chain("e2", [Mention("e2", 0, ((4, 5),), (5, 0))])
    return doc


SISTER_IDMAP = {"e1": 1, "e2": 2}


@pytest.fixture
def sister_doc() -> Document:
    return make_sister_doc()
