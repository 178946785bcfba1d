"""Synthetic corpus generation, ingestion, splitting, and prompt tasks."""

from .generate import GeneratorConfig, generate_synthetic_corpus
from .ingest import ingest_interactions, k_core, read_interactions, read_items
from .lexicon import (
    CHARACTERISTIC,
    DEFAULT_LEXICON,
    DIMENSIONS,
    GENRE_NAMES,
    STOPWORDS,
    TagLexicon,
    augment_tags,
    content_words,
)
from .split import chronological_split
from .tasks import (
    GENRE_VOCAB,
    TAG_VOCAB,
    TaskSet,
    build_compliance_list,
    build_prompt_task,
    build_task_set,
)
from .templates import DEFAULT_POOL, EVAL, TRAIN, TemplatePool, render_prompt
from .types import (
    NEG,
    POS,
    ROUTE_NEGATIVE,
    ROUTE_NONE,
    ROUTE_POSITIVE,
    SEQ,
    Corpus,
    Interaction,
    Item,
    PromptTask,
    SplitCorpus,
    history_ids,
)

__all__ = [
    "GeneratorConfig", "generate_synthetic_corpus",
    "ingest_interactions", "k_core", "read_interactions", "read_items",
    "CHARACTERISTIC", "DEFAULT_LEXICON", "DIMENSIONS", "GENRE_NAMES",
    "STOPWORDS", "TagLexicon", "augment_tags", "content_words",
    "chronological_split",
    "GENRE_VOCAB", "TAG_VOCAB", "TaskSet",
    "build_compliance_list", "build_prompt_task", "build_task_set",
    "DEFAULT_POOL", "EVAL", "TRAIN", "TemplatePool", "render_prompt",
    "NEG", "POS", "ROUTE_NEGATIVE", "ROUTE_NONE", "ROUTE_POSITIVE", "SEQ",
    "Corpus", "Interaction", "Item", "PromptTask", "SplitCorpus",
    "history_ids",
]
