"""Per-user chronological train/valid/test split with cold-start closure."""

from __future__ import annotations

import math

from ..errors import InvalidArgumentError
from .types import Corpus, Interaction, SplitCorpus


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def chronological_split(
    corpus: Corpus,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    min_len: int = 5,
) -> SplitCorpus:
    """Split each user's log in time order.

    The last share goes to test, the one before to valid, the remainder
    to train.  Valid and test always receive at least one interaction;
    users shorter than min_len are dropped.  Afterwards, interactions in
    valid/test whose item never appears in any train segment are removed
    so that evaluation never scores an item the model could not have
    seen.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise InvalidArgumentError(f"ratios must be three non-negative shares, got {ratios!r}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidArgumentError(f"ratios must sum to 1, got {sum(ratios)}")

    train: dict[int, list[Interaction]] = {}
    valid: dict[int, list[Interaction]] = {}
    test: dict[int, list[Interaction]] = {}
    dropped: list[int] = []

    for user_id in sorted(corpus.users):
        log = corpus.users[user_id]
        n = len(log)
        if n < min_len:
            dropped.append(user_id)
            continue
        n_test = max(1, _round_half_up(ratios[2] * n))
        n_valid = max(1, _round_half_up(ratios[1] * n))
        n_train = n - n_valid - n_test
        if n_train < 1:
            dropped.append(user_id)
            continue
        train[user_id] = list(log[:n_train])
        valid[user_id] = list(log[n_train:n_train + n_valid])
        test[user_id] = list(log[n_train + n_valid:])

    seen_in_train = {i.item_id for log in train.values() for i in log}
    for part in (valid, test):
        for user_id, log in part.items():
            part[user_id] = [i for i in log if i.item_id in seen_in_train]

    return SplitCorpus(
        corpus=corpus,
        train=train,
        valid=valid,
        test=test,
        dropped_users=tuple(dropped),
    )
