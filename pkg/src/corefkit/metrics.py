"""Head-matched coreference scoring and corpus diagnostics.

Scoring follows the CoNLL-2012 reference semantics: MUC, B-cubed and
entity-based CEAF over clusters, with mentions compared by head token only
and singleton chains removed from both sides before matching. The CoNLL F1
is 100 times the mean of the three F1s; dataset scores aggregate numerators
and denominators over documents, and the corpus score is the macro average
over datasets.

Diagnostics: mention density per 100 surface tokens, and the distribution
of distances (in surface words) between consecutive same-chain mention
heads, as a CDF with a coverage(budget) helper.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .conllu import Corpus, Document, Mention


@dataclass
class PRF:
    recall_num: float = 0.0
    recall_den: float = 0.0
    precision_num: float = 0.0
    precision_den: float = 0.0

    def add(self, other: PRF) -> None:
        self.recall_num += other.recall_num
        self.recall_den += other.recall_den
        self.precision_num += other.precision_num
        self.precision_den += other.precision_den

    @property
    def recall(self) -> float:
        return self.recall_num / self.recall_den if self.recall_den else 0.0

    @property
    def precision(self) -> float:
        return self.precision_num / self.precision_den if self.precision_den else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def as_dict(self) -> dict:
        return {"recall": self.recall, "precision": self.precision, "f1": self.f1}


METRICS = ("muc", "b3", "ceaf_e")


def muc(gold: list[set], pred: list[set]) -> PRF:
    def side(keys: list[set], responses: list[set]) -> tuple[float, float]:
        owner: dict = {}
        for idx, cluster in enumerate(responses):
            for m in cluster:
                owner[m] = idx
        num = den = 0.0
        for cluster in keys:
            parts = {owner[m] for m in cluster if m in owner}
            missing = sum(1 for m in cluster if m not in owner)
            num += len(cluster) - (len(parts) + missing)
            den += len(cluster) - 1
        return num, den

    rn, rd = side(gold, pred)
    pn, pd = side(pred, gold)
    return PRF(rn, rd, pn, pd)


def b_cubed(gold: list[set], pred: list[set]) -> PRF:
    def side(keys: list[set], responses: list[set]) -> tuple[float, float]:
        num = den = 0.0
        for cluster in keys:
            for m in cluster:
                resp = next((r for r in responses if m in r), frozenset())
                num += len(cluster & resp) / len(cluster)
                den += 1
        return num, den

    rn, rd = side(gold, pred)
    pn, pd = side(pred, gold)
    return PRF(rn, rd, pn, pd)


def phi4(a: set, b: set) -> float:
    return 2 * len(a & b) / (len(a) + len(b)) if a or b else 0.0


def ceaf_e(gold: list[set], pred: list[set]) -> PRF:
    if not gold or not pred:
        return PRF(0.0, float(len(gold)), 0.0, float(len(pred)))
    scores = np.zeros((len(gold), len(pred)))
    for i, g in enumerate(gold):
        for j, p in enumerate(pred):
            scores[i, j] = phi4(g, p)
    rows, cols = linear_sum_assignment(-scores)
    total = float(scores[rows, cols].sum())
    return PRF(total, float(len(gold)), total, float(len(pred)))


def _mention_key(m: Mention) -> tuple[int, int, int]:
    return (m.sent_index, m.head[0], m.head[1])


def head_match(gold_mentions: list[Mention], pred_mentions: list[Mention]
               ) -> list[tuple[int, int]]:
    """Pair mentions whose heads coincide, greedily in document order on
    both sides. When several mentions share a head, span boundaries break
    the tie, so ordering never depends on chain iteration order. Returns
    (gold_idx, pred_idx) pairs."""
    def order_key(ms: list[Mention], idx: int) -> tuple:
        return (_mention_key(ms[idx]), ms[idx].fragments)

    by_key: dict[tuple, list[int]] = {}
    for j in sorted(range(len(pred_mentions)), key=lambda j: order_key(pred_mentions, j)):
        by_key.setdefault(_mention_key(pred_mentions[j]), []).append(j)
    pairs = []
    for i in sorted(range(len(gold_mentions)), key=lambda i: order_key(gold_mentions, i)):
        bucket = by_key.get(_mention_key(gold_mentions[i]))
        if bucket:
            pairs.append((i, bucket.pop(0)))
    pairs.sort()
    return pairs


def _clusters(doc: Document, drop_singletons: bool = True) -> list[list[Mention]]:
    out = []
    for chain in doc.chains.values():
        if drop_singletons and chain.is_singleton:
            continue
        if chain.mentions:
            out.append(list(chain.mentions))
    return out


def score_clusters(gold: list[set], pred: list[set]) -> dict[str, PRF]:
    """The three metrics over clusters of already-identified mentions."""
    return {"muc": muc(gold, pred), "b3": b_cubed(gold, pred), "ceaf_e": ceaf_e(gold, pred)}


def score(gold_doc: Document, pred_doc: Document) -> dict[str, PRF]:
    """Head-project both sides, drop singleton chains, match mentions by
    head, then score the induced clusters."""
    gold_chains = _clusters(gold_doc)
    pred_chains = _clusters(pred_doc)
    gold_mentions = [m for c in gold_chains for m in c]
    pred_mentions = [m for c in pred_chains for m in c]
    matched = dict((j, i) for i, j in head_match(gold_mentions, pred_mentions))

    gold_ids: dict[int, int] = {i: i for i in range(len(gold_mentions))}
    pred_ids: dict[int, int] = {}
    nxt = len(gold_mentions)
    for j in range(len(pred_mentions)):
        if j in matched:
            pred_ids[j] = matched[j]
        else:
            pred_ids[j] = nxt
            nxt += 1

    gold_sets = []
    pos = 0
    for c in gold_chains:
        gold_sets.append({gold_ids[pos + k] for k in range(len(c))})
        pos += len(c)
    pred_sets = []
    pos = 0
    for c in pred_chains:
        pred_sets.append({pred_ids[pos + k] for k in range(len(c))})
        pos += len(c)
    return score_clusters(gold_sets, pred_sets)


@dataclass
class ScoreReport:
    per_dataset: dict[str, dict] = field(default_factory=dict)
    macro_average: float = 0.0
    warnings: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"datasets": self.per_dataset, "macro_average": self.macro_average,
                "warnings": self.warnings}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        rows = [("dataset", "muc", "b3", "ceaf_e", "conll_f1")]
        for name, block in self.per_dataset.items():
            rows.append((name,) + tuple(
                f"{block[m]['f1'] * 100:.2f}" for m in METRICS
            ) + (f"{block['conll_f1']:.2f}",))
        rows.append(("macro", "", "", "", f"{self.macro_average:.2f}"))
        widths = [max(len(r[c]) for r in rows) for c in range(5)]
        return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip()
                         for r in rows)


def conll_f1(gold: Corpus, pred: Corpus) -> ScoreReport:
    """Dataset-level micro aggregation, macro averaged across datasets.

    Documents present in gold but missing from pred are scored against an
    empty prediction and reported in the warnings list.
    """
    report = ScoreReport()
    pred_by_ds = {name: {d.doc_id: d for d in docs} for name, docs in pred.datasets}
    f1s = []
    for name, docs in gold.datasets:
        pred_docs = pred_by_ds.get(name, {})
        if name not in pred_by_ds:
            report.warnings.append(f"dataset {name!r} missing from prediction")
        totals = {m: PRF() for m in METRICS}
        for gdoc in docs:
            pdoc = pred_docs.get(gdoc.doc_id)
            if pdoc is None:
                report.warnings.append(
                    f"document {gdoc.doc_id!r} missing from prediction; scored as empty")
                pdoc = Document(gdoc.doc_id, gdoc.sentences)
            for metric, prf in score(gdoc, pdoc).items():
                totals[metric].add(prf)
        block = {m: totals[m].as_dict() for m in METRICS}
        block["conll_f1"] = 100.0 * sum(totals[m].f1 for m in METRICS) / 3.0
        report.per_dataset[name] = block
        f1s.append(block["conll_f1"])
    report.macro_average = sum(f1s) / len(f1s) if f1s else 0.0
    return report


# -- corpus diagnostics --------------------------------------------------------

@dataclass
class DensityStats:
    per_dataset: dict[str, dict] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"datasets": self.per_dataset}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def _density_of(docs: list[Document], include_singletons: bool) -> float:
    mentions = 0
    tokens = 0
    for d in docs:
        tokens += d.surface_token_count()
        for chain in d.chains.values():
            if include_singletons or not chain.is_singleton:
                mentions += len(chain.mentions)
    return 100.0 * mentions / tokens if tokens else 0.0


def density(gold: Corpus, pred: Corpus | None = None,
            include_singletons: bool = True) -> DensityStats:
    """Mentions per 100 surface tokens (empty nodes excluded from the count)."""
    stats = DensityStats()
    pred_by_ds = dict(pred.datasets) if pred is not None else {}
    for name, docs in gold.datasets:
        g = _density_of(docs, include_singletons)
        entry: dict = {"gold_per_100": g, "pred_per_100": None, "relative_error": None}
        if name in pred_by_ds:
            p = _density_of(pred_by_ds[name], include_singletons)
            entry["pred_per_100"] = p
            entry["relative_error"] = (p - g) / g if g else None
        stats.per_dataset[name] = entry
    return stats


@dataclass
class DistanceCdf:
    """Cumulative distribution of antecedent distances in surface words."""

    distances: list[int] = field(default_factory=list)      # sorted unique
    cumulative: list[float] = field(default_factory=list)   # same length, ends at 1.0
    count: int = 0

    def coverage(self, budget: int) -> float:
        """Fraction of non-first mentions whose previous same-chain mention
        head lies within ``budget`` words (vacuously 1.0 when empty)."""
        if not self.distances:
            return 1.0
        frac = 0.0
        for d, c in zip(self.distances, self.cumulative):
            if d > budget:
                break
            frac = c
        return frac

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["distance_words", "cumulative_fraction"])
        for d, c in zip(self.distances, self.cumulative):
            w.writerow([d, f"{c:.6f}"])
        return buf.getvalue()


def _word_offsets(doc: Document) -> dict[int, int]:
    offsets = {}
    total = 0
    for si, s in enumerate(doc.sentences):
        offsets[si] = total
        total += len(s.tokens)
    return offsets


def _head_word_index(m: Mention, offsets: dict[int, int]) -> int:
    # an empty node head carries its anchor position, so it lands on the
    # anchor's word index; anchor 0 clamps to the sentence start
    return offsets[m.sent_index] + max(m.head[0] - 1, 0)


def antecedent_cdf(gold: Corpus) -> DistanceCdf:
    """Distances between consecutive same-chain mention heads, pooled over
    every document of every dataset."""
    distances: list[int] = []
    for _, docs in gold.datasets:
        for doc in docs:
            offsets = _word_offsets(doc)
            for chain in doc.chains.values():
                idxs = sorted(_head_word_index(m, offsets) for m in chain.mentions)
                distances.extend(b - a for a, b in zip(idxs, idxs[1:]))
    distances.sort()
    cdf = DistanceCdf(count=len(distances))
    n = len(distances)
    seen = 0
    for i, d in enumerate(distances):
        seen += 1
        if i + 1 == n or distances[i + 1] != d:
            cdf.distances.append(d)
            cdf.cumulative.append(seen / n)
    return cdf
