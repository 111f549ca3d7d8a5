"""Random gold documents and noisy-output simulation for tests and demos.

Generated documents satisfy the invariants the rest of the toolkit expects:
contiguous token positions, per-anchor empty nodes numbered 1..k, at most
one zero mention per empty node, no crossing mention spans, and at least one
chain with two or more mentions. Discontinuous mentions are only emitted
when reducing them to their head fragment keeps the same head token, so
inline round trips stay exact.
"""
from __future__ import annotations

import random
import string
from dataclasses import dataclass

from .conllu import Chain, Corpus, Document, Mention, Sentence, Token, mention_head

_VOCAB = (
    "the a this that old young tall quiet river stone garden window "
    "teacher sailor doctor neighbour letter answer morning evening "
    "walks reads finds keeps brings sells opens closes before after "
    "under over with without again slowly barely twice once red blue "
    "green small large happy".split()
)


@dataclass
class SynthConfig:
    sentences: tuple[int, int] = (3, 8)
    sentence_len: tuple[int, int] = (5, 12)
    chains: tuple[int, int] = (2, 5)
    mentions_per_chain: tuple[int, int] = (1, 4)
    max_span: int = 4
    p_zero: float = 0.15
    p_discontinuous: float = 0.0
    seed: int = 0


def _rand_range(rng: random.Random, bounds: tuple[int, int]) -> int:
    return rng.randint(bounds[0], bounds[1])


def _make_sentence(rng: random.Random, index: int, cfg: SynthConfig) -> Sentence:
    n = _rand_range(rng, cfg.sentence_len)
    tokens = []
    for pos in range(1, n + 1):
        head = rng.choice([h for h in range(0, n + 1) if h != pos])
        tokens.append(Token(pos, rng.choice(_VOCAB), head))
    return Sentence(f"s{index + 1}", tokens)


def _fits(span: tuple[int, int], taken: list[tuple[int, int]]) -> bool:
    s, e = span
    for a, b in taken:
        disjoint = e < a or b < s
        nested = (s <= a and b <= e) or (a <= s and e <= b)
        if not (disjoint or nested):
            return False
    return True


def _add_empty_node(sent: Sentence, rng: random.Random) -> Token:
    anchor = rng.randint(1, len(sent.tokens))
    sub = 1 + sum(1 for t in sent.empty_nodes if t.position == anchor)
    gov = rng.randint(1, len(sent.tokens))
    node = Token(anchor, "_", gov, True, sub, deps=f"{gov}:nsubj")
    sent.empty_nodes.append(node)
    sent.empty_nodes.sort(key=lambda t: (t.position, t.sub_index))
    return node


def _sample_discontinuous(rng: random.Random, sent: Sentence,
                          taken: list[tuple[int, int]], max_span: int
                          ) -> tuple[tuple[tuple[int, int], ...], tuple[int, int]] | None:
    n = len(sent.tokens)
    if n < 4:
        return None
    for _ in range(20):
        s1 = rng.randint(1, n - 3)
        e1 = min(n - 2, s1 + rng.randint(0, max_span - 1))
        s2 = rng.randint(e1 + 2, n)
        e2 = min(n, s2 + rng.randint(0, max_span - 1))
        frags = ((s1, e1), (s2, e2))
        if not all(_fits(f, taken) for f in frags):
            continue
        head = mention_head(frags, sent)
        frag_of_head = next(f for f in frags if f[0] <= head[0] <= f[1])
        if mention_head((frag_of_head,), sent) == head:
            return frags, head
    return None


def random_document(doc_id: str, cfg: SynthConfig | None = None,
                    rng: random.Random | None = None) -> Document:
    cfg = cfg or SynthConfig()
    rng = rng or random.Random(cfg.seed)
    sentences = [_make_sentence(rng, i, cfg)
                 for i in range(_rand_range(rng, cfg.sentences))]
    doc = Document(doc_id, sentences)

    taken: dict[int, list[tuple[int, int]]] = {i: [] for i in range(len(sentences))}
    used_spans: set[tuple[int, tuple]] = set()
    used_zeros: set[tuple[int, int, int]] = set()
    # a head token names one entity: reusing it in another chain would make
    # head-only representations ambiguous
    head_owner: dict[tuple[int, int, int], int] = {}
    # two discontinuous mentions of one chain in one sentence can interleave
    # their [i/n] marks ambiguously, so allow at most one
    disc_used: set[tuple[int, int]] = set()

    n_chains = _rand_range(rng, cfg.chains)
    for ci in range(n_chains):
        chain = Chain(f"e{ci + 1}")
        want = _rand_range(rng, cfg.mentions_per_chain)
        if ci == 0:
            want = max(want, 2)
        for _ in range(want):
            si = rng.randrange(len(sentences))
            sent = sentences[si]
            if rng.random() < cfg.p_zero:
                node = _add_empty_node(sent, rng)
                key = (si, node.position, node.sub_index)
                if key in used_zeros:
                    continue
                used_zeros.add(key)
                chain.mentions.append(Mention(
                    chain.chain_id, si, (), (node.position, node.sub_index), True))
                continue
            if rng.random() < cfg.p_discontinuous and (ci, si) not in disc_used:
                got = _sample_discontinuous(rng, sent, taken[si], cfg.max_span)
                if got is not None:
                    frags, head = got
                    owner = head_owner.get((si, *head), ci)
                    if (si, frags) not in used_spans and owner == ci:
                        disc_used.add((ci, si))
                        used_spans.add((si, frags))
                        head_owner[(si, *head)] = ci
                        taken[si].extend(frags)
                        chain.mentions.append(Mention(chain.chain_id, si, frags, head))
                        continue
            for _ in range(20):
                s = rng.randint(1, len(sent.tokens))
                e = min(len(sent.tokens), s + rng.randint(0, cfg.max_span - 1))
                head = mention_head(((s, e),), sent)
                if (_fits((s, e), taken[si])
                        and (si, ((s, e),)) not in used_spans
                        and head_owner.get((si, *head), ci) == ci):
                    used_spans.add((si, ((s, e),)))
                    head_owner[(si, *head)] = ci
                    taken[si].append((s, e))
                    chain.mentions.append(Mention(chain.chain_id, si, ((s, e),), head))
                    break
        if chain.mentions:
            chain.sort()
            doc.chains[chain.chain_id] = chain
    return doc


def random_corpus(n_docs: int = 3, cfg: SynthConfig | None = None,
                  dataset: str = "synth", seed: int | None = None) -> Corpus:
    cfg = cfg or SynthConfig()
    rng = random.Random(cfg.seed if seed is None else seed)
    docs = [random_document(f"{dataset}-d{i + 1}", cfg, rng) for i in range(n_docs)]
    return Corpus([(dataset, docs)])


# -- noisy output simulation -----------------------------------------------------

def _typo(word: str, rng: random.Random) -> str:
    if len(word) < 2:
        return word + rng.choice(string.ascii_lowercase)
    i = rng.randrange(len(word))
    op = rng.randrange(3)
    if op == 0:
        return word[:i] + word[i + 1:]
    if op == 1:
        return word[:i] + rng.choice(string.ascii_lowercase) + word[i:]
    return word[:i] + rng.choice(string.ascii_lowercase) + word[i + 1:]


def perturb(rendered: str, rng: random.Random, p_drop: float = 0.03,
            p_dup: float = 0.03, p_typo: float = 0.05) -> str:
    """Damage rendered output the way sloppy generation does: drop an atom,
    repeat an atom, misspell a word. Tag-like atoms are misspelled never,
    dropped/duplicated rarely (half rate). Line structure is kept."""
    lines_out: list[str] = []
    for line in rendered.splitlines():
        out: list[str] = []
        for atom in line.split():
            taggish = atom.startswith("<") or "|" in atom or atom.startswith("##")
            scale = 0.5 if taggish else 1.0
            r = rng.random()
            if r < p_drop * scale:
                continue
            word = atom
            if not taggish and rng.random() < p_typo:
                word = _typo(word, rng)
            out.append(word)
            if rng.random() < p_dup * scale:
                out.append(word)
        lines_out.append(" ".join(out))
    return "\n".join(lines_out)
