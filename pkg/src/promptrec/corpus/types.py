"""Core data shapes for items, interactions, and prompt tasks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from ..errors import InvalidArgumentError

POS = "POS"
NEG = "NEG"
SEQ = "SEQ"

ROUTE_POSITIVE = "+"
ROUTE_NEGATIVE = "-"
ROUTE_NONE = "none"


@dataclass(frozen=True)
class Item:
    """One catalog entry.  ``item_id`` is dense, 1-based; row 0 is padding."""

    item_id: int
    title: str
    genres: tuple[int, ...]
    train_tags: tuple[str, str, str] | None = None
    eval_tags: tuple[str, str, str] | None = None

    def __post_init__(self):
        if self.item_id < 1:
            raise InvalidArgumentError("item ids are 1-based (0 is the padding row)")
        if not self.genres:
            raise InvalidArgumentError("items carry at least one genre")


@dataclass(frozen=True)
class Interaction:
    user_id: int
    item_id: int
    ts: int


@dataclass
class Corpus:
    """Items plus per-user chronological interaction lists."""

    items: list[Item]                      # dense, items[i].item_id == i + 1
    genre_names: list[str]
    users: dict[int, list[Interaction]]
    meta: dict = field(default_factory=dict)

    def item(self, item_id: int) -> Item:
        if not 1 <= item_id <= len(self.items):
            raise InvalidArgumentError(f"unknown item id {item_id}")
        return self.items[item_id - 1]

    @property
    def num_items(self) -> int:
        return len(self.items)

    def validate(self) -> None:
        for i, it in enumerate(self.items):
            if it.item_id != i + 1:
                raise InvalidArgumentError("item ids must be dense and 1-based")
        for uid, seq in self.users.items():
            for a, b in zip(seq, seq[1:]):
                if b.ts <= a.ts:
                    raise InvalidArgumentError(
                        f"user {uid}: timestamps must be strictly increasing"
                    )


@dataclass
class SplitCorpus:
    """Chronological per-user train/valid/test partition of a corpus."""

    corpus: Corpus
    train: dict[int, list[Interaction]]
    valid: dict[int, list[Interaction]]
    test: dict[int, list[Interaction]]
    dropped_users: tuple[int, ...] = ()

    @property
    def user_ids(self) -> list[int]:
        return sorted(self.train)

    def full_history(self, user_id: int) -> list[Interaction]:
        return self.train[user_id] + self.valid[user_id] + self.test[user_id]

    def phase_history(self, user_id: int, phase: str) -> list[Interaction]:
        """The interaction list a task's context_cut indexes into."""
        if phase == "train":
            return self.train[user_id]
        if phase == "eval":
            return self.full_history(user_id)
        raise InvalidArgumentError(f"bad phase {phase!r}")


@dataclass(frozen=True)
class PromptTask:
    """One steering instance: a context cut, a prompt, and its ground truth.

    For POS tasks the target set is a single item carrying the desired
    genre; for NEG it is the first ``n`` future items free of the avoided
    genre.  ``category_genre`` records which genre the prompt refers to.
    """

    user_id: int
    kind: str                    # POS | NEG
    n: int
    prompt_text: str
    route: str                   # "+" | "-"
    target_ids: tuple[int, ...]
    category_genre: int
    context_cut: int
    phase: str = "train"         # which history the cut indexes into
    candidate_ids: tuple[int, ...] = ()   # POS: full compliance list for resampling

    def __post_init__(self):
        if self.kind not in (POS, NEG):
            raise InvalidArgumentError(f"unknown task kind {self.kind!r}")
        if self.phase not in ("train", "eval"):
            raise InvalidArgumentError(f"bad phase {self.phase!r}")
        if self.kind == POS and len(self.target_ids) != 1:
            raise InvalidArgumentError("POS tasks carry exactly one target")
        if self.kind == NEG and len(self.target_ids) != self.n:
            raise InvalidArgumentError("NEG tasks carry exactly n targets")
        if self.candidate_ids and not set(self.target_ids) <= set(self.candidate_ids):
            raise InvalidArgumentError("targets must come from the candidate list")
        if self.route not in (ROUTE_POSITIVE, ROUTE_NEGATIVE):
            raise InvalidArgumentError(f"bad route {self.route!r}")


def history_ids(history: Sequence[Interaction]) -> list[int]:
    return [inter.item_id for inter in history]
