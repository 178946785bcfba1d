"""Load an interaction log from line-delimited JSON files.

Two files: an item catalog and an interaction log.  Item ids in the
files may be arbitrary integers; they are remapped to a dense 1-based
range after filtering.  Filtering runs the usual k-core fixpoint (drop
users and items with fewer than core_k events until stable), then drops
users shorter than min_seq_len.
"""

from __future__ import annotations

import json
from collections import Counter

from ..errors import ConfigurationError, ParseError
from .lexicon import DEFAULT_LEXICON, TagLexicon, augment_tags
from .types import Corpus, Interaction, Item


def _records(path: str):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"bad JSON: {exc.msg}") from exc
            if not isinstance(rec, dict):
                raise ParseError(path, line_no, "record must be an object")
            yield line_no, rec


def _require(rec: dict, key: str, path: str, line_no: int):
    if key not in rec:
        raise ParseError(path, line_no, f"missing field {key!r}")
    return rec[key]


def read_items(path: str) -> tuple[dict[int, dict], list[str], dict]:
    """Raw catalog keyed by original id, genre name order, source meta.

    An optional first record {"_meta": {"genres": [...]}} pins the genre
    index order; otherwise names are collected in sorted order.  Any
    extra keys in _meta (config echoes, seeds) ride along untouched.
    """
    raw: dict[int, dict] = {}
    genre_names: list[str] | None = None
    source_meta: dict = {}
    seen_genres: set[str] = set()
    for line_no, rec in _records(path):
        if "_meta" in rec:
            if raw:
                raise ParseError(path, line_no, "_meta must be the first record")
            meta = rec["_meta"]
            if not isinstance(meta.get("genres"), list):
                raise ParseError(path, line_no, "_meta.genres must be a list")
            genre_names = [str(g) for g in meta["genres"]]
            source_meta = dict(meta)
            continue
        item_id = _require(rec, "item_id", path, line_no)
        title = _require(rec, "title", path, line_no)
        genres = _require(rec, "genres", path, line_no)
        if not isinstance(item_id, int) or isinstance(item_id, bool):
            raise ParseError(path, line_no, "item_id must be an integer")
        if item_id in raw:
            raise ParseError(path, line_no, f"duplicate item_id {item_id}")
        if not isinstance(genres, list) or not genres:
            raise ParseError(path, line_no, "genres must be a non-empty list")
        for opt in ("train_tags", "eval_tags"):
            if opt in rec and (not isinstance(rec[opt], list) or len(rec[opt]) != 3):
                raise ParseError(path, line_no, f"{opt} must be a list of 3 phrases")
        seen_genres.update(str(g) for g in genres)
        raw[item_id] = {
            "title": str(title),
            "genres": [str(g) for g in genres],
            "train_tags": tuple(rec["train_tags"]) if "train_tags" in rec else None,
            "eval_tags": tuple(rec["eval_tags"]) if "eval_tags" in rec else None,
            "line": line_no,
        }
    if genre_names is None:
        genre_names = sorted(seen_genres)
    else:
        unknown = seen_genres - set(genre_names)
        if unknown:
            raise ConfigurationError(f"items use genres missing from _meta: {sorted(unknown)}")
    if not raw:
        raise ConfigurationError(f"no items in {path}")
    return raw, genre_names, source_meta


def read_interactions(path: str) -> list[tuple[int, int, int, int]]:
    """Events as (line_no, user_id, item_id, ts)."""
    events: list[tuple[int, int, int, int]] = []
    for line_no, rec in _records(path):
        user_id = _require(rec, "user_id", path, line_no)
        item_id = _require(rec, "item_id", path, line_no)
        ts = _require(rec, "ts", path, line_no)
        for name, val in (("user_id", user_id), ("item_id", item_id), ("ts", ts)):
            if not isinstance(val, int) or isinstance(val, bool):
                raise ParseError(path, line_no, f"{name} must be an integer")
        events.append((line_no, user_id, item_id, ts))
    if not events:
        raise ConfigurationError(f"no interactions in {path}")
    return events


def k_core(events: list[tuple[int, int, int]], core_k: int) -> list[tuple[int, int, int]]:
    """Drop users and items with fewer than core_k events, to fixpoint."""
    kept = list(events)
    while True:
        user_counts = Counter(e[0] for e in kept)
        item_counts = Counter(e[1] for e in kept)
        bad_users = {u for u, c in user_counts.items() if c < core_k}
        bad_items = {i for i, c in item_counts.items() if c < core_k}
        if not bad_users and not bad_items:
            return kept
        kept = [e for e in kept if e[0] not in bad_users and e[1] not in bad_items]
        if not kept:
            return kept


def ingest_interactions(
    items_path: str,
    interactions_path: str,
    min_seq_len: int = 5,
    core_k: int = 5,
    lexicon: TagLexicon = DEFAULT_LEXICON,
) -> Corpus:
    raw_items, genre_names, source_meta = read_items(items_path)
    raw_events = read_interactions(interactions_path)

    for line_no, _, item_id, _ in raw_events:
        if item_id not in raw_items:
            raise ParseError(interactions_path, line_no, f"unknown item_id {item_id}")

    kept = k_core([(u, i, ts) for _, u, i, ts in raw_events], core_k)

    by_user: dict[int, list[tuple[int, int, int]]] = {}
    for ev in kept:
        by_user.setdefault(ev[0], []).append(ev)
    by_user = {u: evs for u, evs in by_user.items() if len(evs) >= min_seq_len}
    if not by_user:
        raise ConfigurationError(
            f"filtering (core_k={core_k}, min_seq_len={min_seq_len}) removed every user"
        )

    used_items = sorted({ev[1] for evs in by_user.values() for ev in evs})
    remap = {orig: dense for dense, orig in enumerate(used_items, start=1)}
    genre_index = {name: i for i, name in enumerate(genre_names)}

    items: list[Item] = []
    for orig in used_items:
        rec = raw_items[orig]
        item = Item(
            item_id=remap[orig],
            title=rec["title"],
            genres=tuple(genre_index[g] for g in rec["genres"]),
            train_tags=rec["train_tags"],
            eval_tags=rec["eval_tags"],
        )
        # tags can only be synthesized for genres the lexicon knows;
        # foreign catalogs keep whatever tags they shipped with
        if genre_names[item.genres[0]] in lexicon.entries:
            item = augment_tags(item, genre_names, lexicon)
        items.append(item)

    users: dict[int, list[Interaction]] = {}
    for user_id in sorted(by_user):
        evs = sorted(by_user[user_id], key=lambda e: e[2])
        # external clocks may carry ties; order is what matters downstream,
        # so timestamps are re-stamped to the event rank
        users[user_id] = [
            Interaction(user_id=user_id, item_id=remap[item_id], ts=rank)
            for rank, (_, item_id, _) in enumerate(evs)
        ]

    meta = {"ingest": {"items_path": items_path, "interactions_path": interactions_path,
                       "core_k": core_k, "min_seq_len": min_seq_len}}
    if source_meta:
        meta["source"] = source_meta
    corpus = Corpus(
        items=items,
        genre_names=list(genre_names),
        users=users,
        meta=meta,
    )
    corpus.validate()
    return corpus
