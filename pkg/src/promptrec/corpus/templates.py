"""Prompt template pools and rendering.

Four disjoint lists: positive/negative crossed with train/eval.  Train
templates appear only during curriculum stages; eval templates only at
measurement time, so a model never scores on wording it trained against.
Every template contains exactly one ``{category}`` slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, InvalidArgumentError

TRAIN = "train"
EVAL = "eval"

_POS_TRAIN = (
    "Recommend a movie in the {category} genre.",
    "I'm in the mood for a {category} tonight.",
    "Show me some {category} picks.",
    "Could you queue up a {category} film for me?",
    "Give me something {category} to watch.",
    "I want a {category} movie right now.",
    "Tonight calls for a {category} story.",
    "Put on a good {category} flick.",
    "Find me a {category} film worth watching.",
    "A {category} pick would hit the spot.",
    "I feel like a {category} film, what should I see this evening?",
    "What's a great {category} movie, please?",
    "Please suggest a {category} title I'd love.",
    "Looking for a {category} recommendation to enjoy.",
    "Can you point out any {category} gems?",
    "Set my watchlist up with a {category} screening.",
    "A {category} pick sounds perfect right now.",
    "Craving a {category} movie this evening.",
)

_POS_EVAL = (
    "I feel like watching a {category} film. What should I see?",
    "What's a great {category} movie for this evening?",
    "Please suggest a {category} title.",
    "I'd love a {category} film recommendation.",
    "Looking for a {category} movie to enjoy.",
    "Any {category} gems you can point me to?",
    "Pick out a {category} film for my watchlist.",
    "Craving a {category} story tonight.",
    "Set me up with a {category} movie.",
    "A {category} screening sounds perfect right now.",
)

_NEG_TRAIN = (
    "I don't want to watch {category} movie tonight.",
    "Please avoid {category} films.",
    "No more {category} for me.",
    "Skip the {category} stuff.",
    "Don't recommend anything {category}.",
    "Never show me {category} movies.",
    "I'm tired of {category} films.",
    "Exclude {category} titles from the results.",
    "Anything but {category} tonight.",
    "I'm not in the mood for {category} right now.",
    "Something different tonight, so do not include the {category} type.",
    "What should I watch without any {category} this time?",
    "Let's skip {category} for the evening.",
    "I've grown tired of the {category} genre lately.",
    "No more recommending {category} to me, thanks.",
    "Never put {category} movies in my queue.",
    "I don't feel like the {category} type this evening.",
    "Never mind the {category} tonight, give me other options.",
)

_NEG_EVAL = (
    "I want to watch something different, so avoid the {category} type.",
    "Do not include {category} films this time.",
    "Without any {category}, what should I watch?",
    "Let's skip {category} movies for now.",
    "I've grown tired of {category} lately.",
    "Avoid recommending the {category} genre.",
    "No more {category} in my queue, thanks.",
    "I don't feel like {category} this evening.",
    "Show me anything but {category} titles.",
    "Never mind {category}, give me other options.",
)


@dataclass(frozen=True)
class TemplatePool:
    pos_train: tuple[str, ...]
    pos_eval: tuple[str, ...]
    neg_train: tuple[str, ...]
    neg_eval: tuple[str, ...]

    def __post_init__(self):
        lists = {
            ("+", TRAIN): self.pos_train,
            ("+", EVAL): self.pos_eval,
            ("-", TRAIN): self.neg_train,
            ("-", EVAL): self.neg_eval,
        }
        for key, templates in lists.items():
            if len(templates) < 10:
                raise ConfigurationError(f"pool {key} needs at least 10 templates")
            for t in templates:
                if t.count("{category}") != 1:
                    raise ConfigurationError(
                        f"template {t!r} must contain exactly one {{category}} slot"
                    )
        if set(self.pos_train) & set(self.pos_eval):
            raise ConfigurationError("positive train/eval template lists overlap")
        if set(self.neg_train) & set(self.neg_eval):
            raise ConfigurationError("negative train/eval template lists overlap")

    def pick(self, polarity: str, phase: str) -> tuple[str, ...]:
        if polarity == "+":
            return self.pos_train if phase == TRAIN else self.pos_eval
        if polarity == "-":
            return self.neg_train if phase == TRAIN else self.neg_eval
        raise InvalidArgumentError(f"bad polarity {polarity!r}")


DEFAULT_POOL = TemplatePool(_POS_TRAIN, _POS_EVAL, _NEG_TRAIN, _NEG_EVAL)


def render_prompt(
    pool: TemplatePool,
    polarity: str,
    phase: str,
    category_text: str,
    rng: np.random.Generator | int,
) -> str:
    """Substitute the category into a seeded-uniform template choice."""
    if phase not in (TRAIN, EVAL):
        raise InvalidArgumentError(f"bad phase {phase!r}")
    if not category_text:
        raise InvalidArgumentError("category text must be non-empty")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    templates = pool.pick(polarity, phase)
    idx = int(rng.integers(len(templates)))
    return templates[idx].replace("{category}", category_text)
