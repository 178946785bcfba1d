"""Synthetic interaction corpus with genre structure and interest shifts.

Users carry a Dirichlet preference over genres plus a low-dimensional
taste vector.  A dominant genre is resampled on a fixed cadence so that
recent history reflects a current interest, which is what prompt-driven
steering is supposed to override or suppress.  Within a genre, item
choice blends Zipf popularity with the user-item taste affinity so the
log carries collaborative signal beyond genre membership.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..rng import substream
from .lexicon import DEFAULT_LEXICON, GENRE_NAMES, TagLexicon, augment_tags
from .types import Corpus, Interaction, Item

_TITLE_FIRST = (
    "Silver", "Crimson", "Hollow", "Golden", "Midnight", "Scarlet",
    "Electric", "Quiet", "Broken", "Distant", "Velvet", "Iron",
    "Paper", "Neon", "Wild", "Lucky",
)
_TITLE_SECOND = (
    "Horizon", "Gambit", "Harbor", "Letters", "Orbit", "Summit",
    "Garden", "Echo", "Mirage", "Crossing", "Parade", "Voyage",
    "Signal", "Canyon", "Waltz", "Arcade",
)

# weight of the current dominant genre vs. the base preference vector
# when drawing the genre of the next interaction
_DOMINANT_WEIGHT = 0.65


@dataclass(frozen=True)
class GeneratorConfig:
    num_users: int = 300
    num_items: int = 200
    num_genres: int = 8
    seq_len_range: tuple[int, int] = (60, 120)
    zipf_exponent: float = 1.1
    shift_period: int = 25
    latent_dim: int = 4
    second_genre_prob: float = 0.3
    pref_concentration: float = 0.5

    def validate(self) -> None:
        if self.num_genres < 2 or self.num_genres > len(GENRE_NAMES):
            raise ConfigurationError(
                f"num_genres must be in [2, {len(GENRE_NAMES)}], got {self.num_genres}"
            )
        if self.num_items < 4 * self.num_genres:
            raise ConfigurationError(
                f"need num_items >= 4*num_genres ({4 * self.num_genres}), got {self.num_items}"
            )
        lo, hi = self.seq_len_range
        if lo < 20 or hi < lo:
            raise ConfigurationError(f"bad seq_len_range {self.seq_len_range} (minimum is 20)")
        if hi >= self.num_items:
            raise ConfigurationError("seq_len_range exceeds catalog size; repeats are not generated")
        if self.num_users < 1 or self.shift_period < 1 or self.latent_dim < 1:
            raise ConfigurationError("num_users, shift_period and latent_dim must be positive")
        if not 0.0 <= self.second_genre_prob < 1.0:
            raise ConfigurationError(f"second_genre_prob out of range: {self.second_genre_prob}")
        if self.zipf_exponent < 0 or self.pref_concentration <= 0:
            raise ConfigurationError("zipf_exponent must be >= 0 and pref_concentration > 0")


def _make_title(index: int) -> str:
    first = _TITLE_FIRST[index % len(_TITLE_FIRST)]
    second = _TITLE_SECOND[(index // len(_TITLE_FIRST)) % len(_TITLE_SECOND)]
    series = index // (len(_TITLE_FIRST) * len(_TITLE_SECOND))
    return f"{first} {second}" if series == 0 else f"{first} {second} {series + 1}"


def generate_synthetic_corpus(
    config: GeneratorConfig, seed: int, lexicon: TagLexicon = DEFAULT_LEXICON
) -> Corpus:
    config.validate()
    rng = substream(seed, "corpus")
    genre_names = list(GENRE_NAMES[: config.num_genres])

    # --- catalog: primary genre round-robin, optional second genre ---
    items: list[Item] = []
    for i in range(config.num_items):
        genres = [i % config.num_genres]
        if rng.random() < config.second_genre_prob:
            extra = int(rng.integers(0, config.num_genres - 1))
            if extra >= genres[0]:
                extra += 1
            genres.append(extra)
        item = Item(item_id=i + 1, title=_make_title(i), genres=tuple(genres))
        items.append(augment_tags(item, genre_names, lexicon))

    # membership pools: an item with two genres belongs to both
    pools: list[np.ndarray] = []
    for g in range(config.num_genres):
        ids = np.array([it.item_id for it in items if g in it.genres], dtype=np.int64)
        if ids.size == 0:
            raise ConfigurationError(f"genre {genre_names[g]!r} owns no items")
        pools.append(ids)
    pool_zipf = [np.arange(1, len(p) + 1, dtype=np.float64) ** -config.zipf_exponent for p in pools]

    item_latents = rng.normal(size=(config.num_items, config.latent_dim))

    # --- interaction logs ---
    users: dict[int, list[Interaction]] = {}
    lo, hi = config.seq_len_range
    for user_id in range(1, config.num_users + 1):
        length = int(rng.integers(lo, hi + 1))
        prefs = rng.dirichlet(np.full(config.num_genres, config.pref_concentration))
        taste = rng.normal(size=config.latent_dim)
        affinity = item_latents @ taste / math.sqrt(config.latent_dim)

        consumed: set[int] = set()
        remaining = np.array([len(p) for p in pools], dtype=np.float64)
        pool_sizes = remaining.copy()
        dominant = -1
        log: list[Interaction] = []
        for step in range(length):
            availability = remaining / pool_sizes
            if step % config.shift_period == 0:
                w = prefs * availability
                dominant = int(rng.choice(config.num_genres, p=w / w.sum()))
            q = _DOMINANT_WEIGHT * np.eye(config.num_genres)[dominant] + (1 - _DOMINANT_WEIGHT) * prefs
            q = q * availability
            genre = int(rng.choice(config.num_genres, p=q / q.sum()))

            ids = pools[genre]
            open_mask = np.array([i not in consumed for i in ids])
            cand = ids[open_mask]
            weights = pool_zipf[genre][open_mask] * np.exp(affinity[cand - 1])
            item_id = int(rng.choice(cand, p=weights / weights.sum()))

            consumed.add(item_id)
            for g in items[item_id - 1].genres:
                remaining[g] -= 1
            log.append(Interaction(user_id=user_id, item_id=item_id, ts=step))
        users[user_id] = log

    corpus = Corpus(
        items=items,
        genre_names=genre_names,
        users=users,
        meta={
            "generator": {
                "num_users": config.num_users,
                "num_items": config.num_items,
                "num_genres": config.num_genres,
                "seq_len_range": list(config.seq_len_range),
                "zipf_exponent": config.zipf_exponent,
                "shift_period": config.shift_period,
                "latent_dim": config.latent_dim,
                "second_genre_prob": config.second_genre_prob,
                "pref_concentration": config.pref_concentration,
                "seed": seed,
            }
        },
    )
    corpus.validate()
    return corpus
