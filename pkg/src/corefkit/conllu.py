"""CorefUD-flavoured CoNLL-U reading and writing.

Object model: Corpus > Document > Sentence > Token, plus per-document
coreference chains made of Mentions. Coreference lives in the MISC column
as ``Entity=`` attributes using bracket notation:

    (eid-...     opens a mention (dash-fields may carry a head index),
    eid)         closes the most recent open mention of that eid,
    (eid-...)    is a single-token mention.

Discontinuous mentions use ``eid[i/n]`` part markers. Empty nodes (decimal
IDs such as ``7.1``) carry zero mentions; they emit no surface word.
Multiword-token ranges (``3-4``) are kept as opaque lines and never bear
mentions. Unknown dash-fields and MISC attributes round-trip verbatim.
"""
from __future__ import annotations

from dataclasses import dataclass, field


class ConlluError(ValueError):
    """Malformed CoNLL-U input or an unserializable document."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Token:
    """One surface token or empty node.

    ``position`` is the 1-based surface index; for empty nodes it is the
    index of the surface token the node follows (0 = sentence start) and
    ``sub_index`` is the k of the ``position.k`` decimal ID.
    """

    position: int
    form: str
    dep_head: int = 0
    is_zero: bool = False
    sub_index: int = 0
    lemma: str = "_"
    upos: str = "_"
    xpos: str = "_"
    feats: str = "_"
    deprel: str = "_"
    deps: str = "_"
    misc: tuple[tuple[str, str | None], ...] = ()

    @property
    def tid(self) -> str:
        if self.is_zero:
            return f"{self.position}.{self.sub_index}"
        return str(self.position)


@dataclass(frozen=True)
class Mention:
    """One mention of a chain, confined to a single sentence.

    ``fragments`` are inclusive (start, end) surface-token ranges, ordered
    and non-overlapping; empty for zero mentions. ``head`` is (position,
    sub_index) of the head token; for zero mentions it names the empty node
    itself. ``raw_fields`` preserves unknown Entity dash-fields verbatim.
    """

    chain_id: str
    sent_index: int
    fragments: tuple[tuple[int, int], ...]
    head: tuple[int, int]
    is_zero: bool = False
    raw_fields: str | None = None

    def span_tokens(self) -> list[int]:
        out: list[int] = []
        for s, e in self.fragments:
            out.extend(range(s, e + 1))
        return out


@dataclass
class Chain:
    chain_id: str
    mentions: list[Mention] = field(default_factory=list)

    @property
    def is_singleton(self) -> bool:
        return len(self.mentions) == 1

    def sort(self) -> None:
        self.mentions.sort(
            key=lambda m: (m.sent_index, m.head[0], m.head[1],
                           m.fragments[0][0] if m.fragments else m.head[0])
        )


@dataclass
class Sentence:
    sent_id: str
    tokens: list[Token]
    empty_nodes: list[Token] = field(default_factory=list)
    text: str | None = None
    comments: list[str] = field(default_factory=list)
    mwt_lines: dict[int, str] = field(default_factory=dict)

    def plain(self) -> str:
        return " ".join(t.form for t in self.tokens)


@dataclass
class Document:
    doc_id: str
    sentences: list[Sentence] = field(default_factory=list)
    chains: dict[str, Chain] = field(default_factory=dict)
    meta: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list, compare=False)

    def mentions(self) -> list[Mention]:
        out = [m for c in self.chains.values() for m in c.mentions]
        out.sort(key=lambda m: (m.sent_index, m.head[0], m.head[1]))
        return out

    def surface_token_count(self) -> int:
        return sum(len(s.tokens) for s in self.sentences)

    def plain_text(self) -> str:
        return "\n".join(s.plain() for s in self.sentences)


@dataclass
class Corpus:
    """Datasets in order; each dataset is (dataset_id, documents)."""

    datasets: list[tuple[str, list[Document]]] = field(default_factory=list)


def mention_head(fragments: tuple[tuple[int, int], ...], sentence: Sentence) -> tuple[int, int]:
    """Head fallback: the unique token whose governor lies outside the span.

    Leftmost wins on ties; if every token's governor is internal the
    leftmost span token is returned, so the fallback always yields a token.
    """
    positions = [p for s, e in fragments for p in range(s, e + 1)]
    inside = set(positions)
    by_pos = {t.position: t for t in sentence.tokens}
    for p in positions:
        tok = by_pos.get(p)
        if tok is not None and tok.dep_head not in inside:
            return (p, 0)
    return (positions[0], 0)


# -- Entity attribute grammar ------------------------------------------------

def _split_eid(raw: str) -> tuple[str, int, int]:
    """Split an eid like ``e9[2/3]`` into (eid, part, nparts); plain eids are part 1/1."""
    if raw.endswith("]") and "[" in raw:
        base, _, tail = raw[:-1].partition("[")
        a, _, b = tail.partition("/")
        if a.isdigit() and b.isdigit():
            return base, int(a), int(b)
    return raw, 1, 1


def parse_entity_value(value: str, line: int | None = None):
    """Scan an Entity= value into (kind, eid, part, nparts, fields) events.

    kind is "open", "close" or "single"; fields is the raw dash-field tail
    (None when absent). Events are returned in string order.
    """
    events = []
    i = 0
    n = len(value)
    while i < n:
        if value[i] == "(":
            j = i + 1
            while j < n and value[j] not in "()":
                j += 1
            body = value[i + 1:j]
            if not body:
                raise ConlluError(f"empty Entity bracket in {value!r}", line)
            eid_raw, _, fields = body.partition("-")
            eid, part, nparts = _split_eid(eid_raw)
            if j < n and value[j] == ")":
                events.append(("single", eid, part, nparts, fields or None))
                i = j + 1
            else:
                events.append(("open", eid, part, nparts, fields or None))
                i = j
        else:
            j = value.find(")", i)
            if j < 0:
                raise ConlluError(f"unbalanced Entity value {value!r}", line)
            eid, part, nparts = _split_eid(value[i:j])
            events.append(("close", eid, part, nparts, None))
            i = j + 1
    return events


def _head_index(fields: str | None) -> int | None:
    """The first all-digit dash-field is the 1-based head index within the mention."""
    if not fields:
        return None
    for piece in fields.split("-"):
        if piece.isdigit():
            return int(piece)
    return None


def _canonical_fields(fields: str | None) -> str | None:
    """A pure head-index field is regenerated on write, so keep it implicit."""
    if fields is not None and fields.isdigit():
        return None
    return fields


# -- parsing -----------------------------------------------------------------

def _parse_misc(raw: str) -> tuple[tuple[str, str | None], ...]:
    if raw == "_":
        return ()
    out = []
    for item in raw.split("|"):
        if "=" in item:
            k, _, v = item.partition("=")
            out.append((k, v))
        else:
            out.append((item, None))
    return tuple(out)


def _misc_string(pairs, entity: str | None) -> str:
    items = []
    if entity:
        items.append(f"Entity={entity}")
    for k, v in pairs:
        items.append(k if v is None else f"{k}={v}")
    return "|".join(items) if items else "_"


class _SentenceAccumulator:
    """Collects the lines of one sentence and assembles tokens + mentions."""

    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        self.sent_id = ""
        self.text: str | None = None
        self.comments: list[str] = []
        self.rows: list[tuple[int, str, list[str]]] = []  # (line_no, id_field, columns)
        self.mwt_lines: dict[int, str] = {}

    def empty(self) -> bool:
        return not (self.rows or self.sent_id or self.comments or self.text is not None)

    def build(self, sent_index: int, warnings: list[str]):
        tokens: list[Token] = []
        empties: list[Token] = []
        entity_events: list[tuple[tuple[int, int], list]] = []  # ((pos, sub), events)
        for line_no, id_field, cols in self.rows:
            misc_pairs = _parse_misc(cols[9])
            entity_raw = None
            kept = []
            for k, v in misc_pairs:
                if k == "Entity" and v is not None:
                    entity_raw = v
                else:
                    kept.append((k, v))
            if "." in id_field:
                a, _, b = id_field.partition(".")
                anchor, sub = int(a), int(b)
                dep = 0
                # empty nodes keep their governor in DEPS ("head:rel"); decimal
                # governors mean the governor is itself elided.
                deps = cols[8]
                if deps not in ("_", ""):
                    gov = deps.split("|")[0].partition(":")[0]
                    if gov.isdigit():
                        dep = int(gov)
                    elif "." in gov:
                        warnings.append(
                            f"{self.sent_id or self.doc_id}: empty node {id_field} "
                            f"governed by elided node {gov}")
                tok = Token(anchor, cols[1], dep, True, sub, cols[2], cols[3],
                            cols[4], cols[5], cols[7], cols[8], tuple(kept))
                empties.append(tok)
                if entity_raw:
                    entity_events.append(((anchor, sub), parse_entity_value(entity_raw, line_no)))
            else:
                pos = int(id_field)
                head_col = cols[6]
                dep = int(head_col) if head_col.isdigit() else 0
                if dep == pos:
                    raise ConlluError(f"token {pos} governs itself", line_no)
                tok = Token(pos, cols[1], dep, False, 0, cols[2], cols[3],
                            cols[4], cols[5], cols[7], cols[8], tuple(kept))
                tokens.append(tok)
                if entity_raw:
                    entity_events.append(((pos, 0), parse_entity_value(entity_raw, line_no)))

        for i, t in enumerate(tokens, start=1):
            if t.position != i:
                raise ConlluError(
                    f"sentence {self.sent_id!r}: token positions not contiguous at {t.position}")
        npos = len(tokens)
        seen_sub: dict[int, int] = {}
        for t in empties:
            if not (0 <= t.position <= npos):
                raise ConlluError(
                    f"sentence {self.sent_id!r}: empty node {t.tid} anchored outside sentence")
            if t.sub_index < 1 or seen_sub.get(t.position, 0) >= t.sub_index:
                raise ConlluError(
                    f"sentence {self.sent_id!r}: empty node IDs at anchor {t.position} not increasing")
            seen_sub[t.position] = t.sub_index

        sent = Sentence(self.sent_id, tokens, empties, self.text, self.comments, self.mwt_lines)
        mentions = _assemble_mentions(entity_events, sent, sent_index, self.doc_id, warnings)
        return sent, mentions


def _assemble_mentions(entity_events, sent: Sentence, sent_index: int,
                       doc_id: str, warnings: list[str]) -> list[Mention]:
    open_stack: list[dict] = []
    # several discontinuous mentions of one chain may be in flight at once;
    # parts arrive in order, part i+1 joining the oldest instance expecting it
    pending: dict[str, list[dict]] = {}
    mentions: list[Mention] = []
    npos = len(sent.tokens)

    def surface_start(pos_sub):
        pos, sub = pos_sub
        if sub == 0:
            return pos
        warnings.append(f"{doc_id}/{sent.sent_id}: mention bracket on empty node "
                        f"{pos}.{sub} approximated to surface span")
        return min(pos + 1, npos) if npos else pos

    def surface_end(pos_sub, start):
        pos, sub = pos_sub
        if sub == 0:
            return pos
        warnings.append(f"{doc_id}/{sent.sent_id}: mention bracket on empty node "
                        f"{pos}.{sub} approximated to surface span")
        return max(pos, start)

    def finish(eid, part_list):
        part_list.sort(key=lambda p: p[0])
        frags = tuple((s, e) for _, s, e, _ in part_list)
        fields = part_list[0][3]
        span = [p for s, e in frags for p in range(s, e + 1)]
        h = _head_index(fields)
        if h is not None and 1 <= h <= len(span):
            head = (span[h - 1], 0)
        else:
            head = mention_head(frags, sent)
        mentions.append(Mention(eid, sent_index, frags, head, False, _canonical_fields(fields)))

    def add_part(eid, part, nparts, start, end, fields):
        if part == 1:
            pending.setdefault(eid, []).append(
                dict(expect=2, nparts=nparts, items=[(1, start, end, fields)]))
            inst = pending[eid][-1]
        else:
            inst = next((p for p in pending.get(eid, ())
                         if p["expect"] == part and p["nparts"] == nparts), None)
            if inst is None:
                raise ConlluError(
                    f"document {doc_id!r}: part {part}/{nparts} of chain {eid!r} "
                    f"has no preceding part {part - 1} in sentence {sent.sent_id!r}")
            inst["items"].append((part, start, end, fields))
            inst["expect"] += 1
        if len(inst["items"]) == nparts:
            finish(eid, inst["items"])
            pending[eid].remove(inst)
            if not pending[eid]:
                del pending[eid]

    for pos_sub, events in entity_events:
        for kind, eid, part, nparts, fields in events:
            if kind == "single":
                if pos_sub[1] != 0:
                    mentions.append(Mention(eid, sent_index, (), pos_sub, True,
                                            _canonical_fields(fields)))
                elif nparts == 1:
                    finish(eid, [(1, pos_sub[0], pos_sub[0], fields)])
                else:
                    add_part(eid, part, nparts, pos_sub[0], pos_sub[0], fields)
            elif kind == "open":
                open_stack.append(dict(eid=eid, part=part, nparts=nparts,
                                       fields=fields, start=surface_start(pos_sub)))
            else:  # close
                match = None
                for entry in reversed(open_stack):
                    if entry["eid"] == eid and entry["part"] == part:
                        match = entry
                        break
                if match is None:
                    raise ConlluError(
                        f"document {doc_id!r}: unbalanced Entity bracket for chain {eid!r} "
                        f"(close without open in sentence {sent.sent_id!r})")
                open_stack.remove(match)
                end = surface_end(pos_sub, match["start"])
                if match["nparts"] == 1:
                    finish(eid, [(1, match["start"], end, match["fields"])])
                else:
                    add_part(eid, match["part"], match["nparts"],
                             match["start"], end, match["fields"])

    if open_stack:
        raise ConlluError(
            f"document {doc_id!r}: unbalanced Entity bracket for chain "
            f"{open_stack[-1]['eid']!r} (unclosed at end of sentence {sent.sent_id!r})")
    if pending:
        eid = next(iter(pending))
        raise ConlluError(
            f"document {doc_id!r}: discontinuous mention of chain {eid!r} not completed "
            f"within sentence {sent.sent_id!r}")
    return mentions


def parse_conllu(text: str) -> list[Document]:
    """Parse a CoNLL-U string (one or more ``# newdoc id`` documents)."""
    docs: list[Document] = []
    doc: Document | None = None
    acc: _SentenceAccumulator | None = None
    sent_ids: set[str] = set()
    pending_mentions: list[Mention] = []

    def flush_sentence(line_no: int):
        nonlocal acc
        if acc is None or acc.empty():
            acc = None
            return
        if doc is None:
            raise ConlluError("sentence before any '# newdoc id' header", line_no)
        if acc.sent_id and acc.sent_id in sent_ids:
            raise ConlluError(f"duplicate sent_id {acc.sent_id!r}", line_no)
        sent_ids.add(acc.sent_id)
        sent, mentions = acc.build(len(doc.sentences), doc.warnings)
        doc.sentences.append(sent)
        pending_mentions.extend(mentions)
        acc = None

    def flush_doc(line_no: int):
        nonlocal doc, pending_mentions
        flush_sentence(line_no)
        if doc is not None:
            for m in pending_mentions:
                doc.chains.setdefault(m.chain_id, Chain(m.chain_id)).mentions.append(m)
            for chain in doc.chains.values():
                chain.sort()
            docs.append(doc)
        doc = None
        pending_mentions = []
        sent_ids.clear()

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            flush_sentence(line_no)
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("newdoc id"):
                flush_doc(line_no)
                doc = Document(body.partition("=")[2].strip())
                continue
            if doc is not None and not doc.sentences and (acc is None or acc.empty()) \
                    and not body.startswith(("sent_id", "text ", "text=")):
                # document-level header block (e.g. "# global.Entity = ...")
                doc.meta.append(line)
                continue
            if acc is None:
                acc = _SentenceAccumulator(doc.doc_id if doc else "")
            if body.startswith("sent_id"):
                acc.sent_id = body.partition("=")[2].strip()
            elif body.startswith("text") and body.partition("=")[0].strip() == "text":
                acc.text = body.partition("=")[2].strip()
            else:
                acc.comments.append(line)
            continue
        # token line
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluError(f"expected 10 tab-separated columns, got {len(cols)}", line_no)
        if acc is None:
            acc = _SentenceAccumulator(doc.doc_id if doc else "")
        id_field = cols[0]
        if "-" in id_field:
            start = id_field.partition("-")[0]
            if not start.isdigit():
                raise ConlluError(f"bad token id {id_field!r}", line_no)
            acc.mwt_lines[int(start)] = line
            continue
        if not (id_field.isdigit() or
                ("." in id_field and all(p.isdigit() for p in id_field.split(".", 1)))):
            raise ConlluError(f"bad token id {id_field!r}", line_no)
        acc.rows.append((line_no, id_field, cols))

    flush_doc(len(text.splitlines()) + 1)
    return docs


# -- serialization -----------------------------------------------------------

def _eid_with_part(chain_id: str, part: int, nparts: int) -> str:
    if nparts == 1:
        return chain_id
    return f"{chain_id}[{part}/{nparts}]"


def _mention_fields(m: Mention) -> str | None:
    if m.raw_fields is not None:
        return m.raw_fields
    if m.is_zero:
        return None
    span = m.span_tokens()
    return str(span.index(m.head[0]) + 1)


def _sentence_entity_strings(doc: Document, sent_index: int, sent: Sentence):
    """Entity= values keyed by (position, sub_index) for one sentence."""
    spans = []   # (start, end, open_text, eid_for_close, seq)
    zeros = {}   # (anchor, sub) -> [entity text]
    seq = 0
    for chain in doc.chains.values():
        for m in chain.mentions:
            if m.sent_index != sent_index:
                continue
            if m.is_zero:
                fields = _mention_fields(m)
                text = f"({m.chain_id}{'-' + fields if fields else ''})"
                zeros.setdefault(m.head, []).append(text)
                continue
            nparts = len(m.fragments)
            fields = _mention_fields(m)
            for part, (s, e) in enumerate(m.fragments, start=1):
                eid = _eid_with_part(m.chain_id, part, nparts)
                tail = f"-{fields}" if fields and part == 1 else ""
                spans.append((s, e, f"({eid}{tail}", eid, seq))
                seq += 1

    per_token: dict[tuple[int, int], str] = {}
    stack: list[tuple[int, int, str, str, int]] = []
    opens_by_start: dict[int, list] = {}
    for sp in spans:
        opens_by_start.setdefault(sp[0], []).append(sp)
    for p in range(1, len(sent.tokens) + 1):
        pieces = []
        # wider spans open first; equal spans order by bracket text so the
        # output is stable under parse -> serialize
        for sp in sorted(opens_by_start.get(p, []), key=lambda x: (-x[1], x[2], x[4])):
            if sp[1] == p:
                pieces.append(sp[2] + ")")
            else:
                pieces.append(sp[2])
                stack.append(sp)
        while stack and stack[-1][1] == p:
            pieces.append(stack.pop()[3] + ")")
        for sp in list(stack):
            if sp[1] == p:
                raise ConlluError(
                    f"document {doc.doc_id!r}: crossing mentions "
                    f"{sp[3]!r} and {stack[-1][3]!r} cannot be bracketed")
        if pieces:
            per_token[(p, 0)] = "".join(pieces)
    for key, texts in zeros.items():
        per_token[key] = "".join(texts)
    return per_token


def serialize_conllu(doc: Document) -> str:
    """Render a Document back to CoNLL-U (LF line endings, Entity regenerated)."""
    lines = [f"# newdoc id = {doc.doc_id}"]
    lines.extend(doc.meta)
    for si, sent in enumerate(doc.sentences):
        entity = _sentence_entity_strings(doc, si, sent)
        if sent.sent_id:
            lines.append(f"# sent_id = {sent.sent_id}")
        if sent.text is not None:
            lines.append(f"# text = {sent.text}")
        lines.extend(sent.comments)
        empties_by_anchor: dict[int, list[Token]] = {}
        for t in sent.empty_nodes:
            empties_by_anchor.setdefault(t.position, []).append(t)

        def emit(tok: Token):
            ent = entity.get((tok.position, tok.sub_index))
            head_col = "_" if tok.is_zero else str(tok.dep_head)
            lines.append("\t".join([
                tok.tid, tok.form, tok.lemma, tok.upos, tok.xpos, tok.feats,
                head_col, tok.deprel, tok.deps, _misc_string(tok.misc, ent),
            ]))

        for t in sorted(empties_by_anchor.get(0, []), key=lambda t: t.sub_index):
            emit(t)
        for tok in sent.tokens:
            if tok.position in sent.mwt_lines:
                lines.append(sent.mwt_lines[tok.position])
            emit(tok)
            for t in sorted(empties_by_anchor.get(tok.position, []), key=lambda t: t.sub_index):
                emit(t)
        lines.append("")
    return "\n".join(lines) + "\n"


def serialize_corpus(docs: list[Document]) -> str:
    return "".join(serialize_conllu(d) for d in docs)
