#!/usr/bin/env python3
"""Corpus figures for CorefUD-style treebanks: mention density per dataset
and the cumulative distribution of antecedent distances, with coverage at
the usual context budgets.

    python3 scripts/corefud_report.py ~/data/corefud --budget 250 3072
    COREFUD_DIR=~/data/corefud python3 scripts/corefud_report.py

Distances are counted in surface words (empty nodes excluded); figures
computed over subword tokenizations will differ slightly.
"""
import argparse
import json
import os
import sys
from collections import defaultdict
from pathlib import Path

from corefkit.conllu import Corpus, parse_conllu
from corefkit.metrics import antecedent_cdf, density


def discover(root: Path, split: str) -> dict[str, list]:
    """Dataset name -> documents, grouped by file stem up to the split tag."""
    datasets = defaultdict(list)
    for path in sorted(root.rglob(f"*{split}*.conllu")):
        name = path.stem.split("-")[0].split("_corefud")[0]
        datasets[name].extend(parse_conllu(path.read_text(encoding="utf-8")))
    return dict(datasets)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("root", nargs="?", default=os.environ.get("COREFUD_DIR"),
                    help="directory searched recursively for .conllu files "
                         "(default: $COREFUD_DIR)")
    ap.add_argument("--split", default="train")
    ap.add_argument("--budget", type=int, nargs="*",
                    default=[50, 250, 1024, 3072])
    ap.add_argument("--no-singletons", action="store_true")
    ap.add_argument("--cdf-csv", help="write the full CDF as CSV here")
    args = ap.parse_args(argv)

    if not args.root:
        print("error: pass a data directory or set COREFUD_DIR",
              file=sys.stderr)
        return 1
    datasets = discover(Path(args.root), args.split)
    if not datasets:
        print(f"error: no *{args.split}*.conllu under {args.root}",
              file=sys.stderr)
        return 1

    corpus = Corpus(sorted(datasets.items()))
    dens = density(corpus, include_singletons=not args.no_singletons)
    cdf = antecedent_cdf(corpus)
    payload = {
        "density_per_100_tokens": {
            name: round(entry["gold_per_100"], 2)
            for name, entry in dens.per_dataset.items()},
        "antecedent_pairs": cdf.count,
        "coverage_by_budget_words": {
            str(b): round(cdf.coverage(b), 4) for b in args.budget},
        "distance_unit": "surface words (not subword tokens)",
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    if args.cdf_csv:
        Path(args.cdf_csv).write_text(cdf.to_csv(), encoding="utf-8")
    return 0


if __name__ == "__main__":
    sys.exit(main())
