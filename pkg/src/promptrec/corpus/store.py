"""Corpus persistence as the item-catalog + interaction-log file pair.

The on-disk shape is exactly what the ingest path reads: ``items.jsonl``
(with a leading ``_meta`` record pinning genre order and echoing the
generating config) and ``interactions.jsonl``.  Loading goes through
ingest with every filter disabled, so a saved corpus comes back intact:
tags ship in the files, timestamps are already dense ranks, and the
``_meta`` echo lands in ``corpus.meta["source"]``.
"""

from __future__ import annotations

import json
import os

from .ingest import ingest_interactions
from .types import Corpus

ITEMS_FILE = "items.jsonl"
INTERACTIONS_FILE = "interactions.jsonl"


def _dump(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def save_corpus(corpus: Corpus, out_dir: str, extra_meta: dict | None = None) -> tuple[str, str]:
    """Write the file pair into out_dir; returns the two paths."""
    os.makedirs(out_dir, exist_ok=True)
    items_path = os.path.join(out_dir, ITEMS_FILE)
    inter_path = os.path.join(out_dir, INTERACTIONS_FILE)

    meta = {"genres": list(corpus.genre_names)}
    if extra_meta:
        meta.update(extra_meta)

    tmp = items_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(_dump({"_meta": meta}) + "\n")
        for it in corpus.items:
            rec = {
                "item_id": it.item_id,
                "title": it.title,
                "genres": [corpus.genre_names[g] for g in it.genres],
            }
            if it.train_tags:
                rec["train_tags"] = list(it.train_tags)
            if it.eval_tags:
                rec["eval_tags"] = list(it.eval_tags)
            fh.write(_dump(rec) + "\n")
    os.replace(tmp, items_path)

    tmp = inter_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for uid in sorted(corpus.users):
            for iv in corpus.users[uid]:
                fh.write(_dump({"user_id": uid, "item_id": iv.item_id, "ts": iv.ts}) + "\n")
    os.replace(tmp, inter_path)
    return items_path, inter_path


def load_corpus(data_dir: str) -> Corpus:
    """Read back a saved corpus, bypassing the external-data filters."""
    return ingest_interactions(
        os.path.join(data_dir, ITEMS_FILE),
        os.path.join(data_dir, INTERACTIONS_FILE),
        min_seq_len=1,
        core_k=0,
    )
