"""Losses, the three-stage curriculum, and checkpointing.

The model trains in three ordered stages.  Stage 1 pre-trains the
sequential encoder and the item embeddings on next-item prediction.
Stages 2 and 3 add prompt steering: each optimizer step pairs one
sequence batch with one prompt batch and minimizes the sum of both
losses, with genre names as the prompt vocabulary in stage 2 and the
richer tag phrases in stage 3.  The hashing featurizer has no trainable
parameters; everything else — encoder, embeddings, projector, both
fusion towers — keeps training in the later stages.

Checkpoints are a small binary format: magic ``DPR1``, a JSON header,
then raw little-endian float64 blobs.  A save/load round trip is
bit-exact, optimizer moments included.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .backbone import BackboneConfig, encode_batch, init_backbone, sequential_loss
from .corpus.lexicon import DEFAULT_LEXICON, TagLexicon
from .corpus.tasks import build_task_set
from .corpus.templates import DEFAULT_POOL, TemplatePool
from .corpus.types import NEG, POS, ROUTE_NEGATIVE, ROUTE_POSITIVE, SplitCorpus, history_ids
from .errors import (
    CheckpointFormatError,
    CheckpointVersionError,
    ConfigurationError,
    InvalidArgumentError,
    StateError,
)
from .fusion import fuse, init_fusion
from .numerics import (
    AdamState,
    Tape,
    TapeValue,
    adam_step,
    add_scalars,
    backward,
    reshape,
    scale_scalar,
    target_set_cross_entropy,
)
from .prompting import DEFAULT_ROWS, DEFAULT_WIDTH, featurize_prompt, init_projector, project_prompt
from .rng import substream

CHECKPOINT_MAGIC = b"DPR1"
CHECKPOINT_VERSION = 1

MODE_NONE = "none"
MODE_GENRE = "genre"
MODE_TAG = "tag"

_STAGE_MODES = {1: MODE_NONE, 2: MODE_GENRE, 3: MODE_TAG}

# Content-word dropout rate for tag-phrase categories during stage-3
# training.  Full phrases let the single best anchor word shadow the
# rest; thinning spreads the association across every content word,
# which is what held-out paraphrases rely on.
TAG_CATEGORY_DROPOUT = 0.35

_TOWER_PREFIX = {ROUTE_POSITIVE: "tower.pos.", ROUTE_NEGATIVE: "tower.neg."}


@dataclass(frozen=True)
class ModelConfig:
    """Everything needed to rebuild the model's shape from scratch."""

    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    prompt_rows: int = DEFAULT_ROWS
    prompt_width: int = DEFAULT_WIDTH
    projector_hidden: int = 64
    fusion_heads: int = 4
    fusion_ffn_mult: int = 2
    tau_seq: float = 1.0
    tau_prompt: float = 0.5
    prompt_loss_weight: float = 1.0
    shared_towers: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.prompt_rows < 1 or self.prompt_width < 1:
            raise ConfigurationError("prompt featurizer needs at least one row and bucket")
        if self.projector_hidden < 1:
            raise ConfigurationError("projector hidden width must be positive")
        if self.fusion_heads < 1 or self.backbone.d % self.fusion_heads != 0:
            raise ConfigurationError(
                f"dimension {self.backbone.d} does not split into {self.fusion_heads} fusion heads"
            )
        for name, tau in (("tau_seq", self.tau_seq), ("tau_prompt", self.tau_prompt)):
            if not math.isfinite(tau) or tau <= 0.0:
                raise ConfigurationError(f"{name} must be finite and positive, got {tau}")
        if self.prompt_loss_weight <= 0.0:
            raise ConfigurationError("prompt loss weight must be positive")


@dataclass(frozen=True)
class StagePlan:
    """One curriculum stage: how long, how fast, and on which prompts."""

    stage: int
    epochs: int
    lr: float
    batch_size: int
    vocab_mode: str
    seed: int = 0

    def __post_init__(self) -> None:
        if self.stage not in (1, 2, 3):
            raise ConfigurationError(f"stage must be 1, 2, or 3, got {self.stage}")
        if _STAGE_MODES[self.stage] != self.vocab_mode:
            raise ConfigurationError(
                f"stage {self.stage} trains with prompt vocabulary "
                f"{_STAGE_MODES[self.stage]!r}, not {self.vocab_mode!r}"
            )
        if self.epochs < 1:
            raise ConfigurationError("epochs must be at least 1")
        if not math.isfinite(self.lr) or self.lr <= 0.0:
            raise ConfigurationError("learning rate must be finite and positive")
        if self.batch_size < 1:
            raise ConfigurationError("batch size must be at least 1")


def default_stage_plans(
    seed: int, epochs: tuple[int, int, int] = (30, 20, 20)
) -> tuple[StagePlan, StagePlan, StagePlan]:
    return (
        StagePlan(1, epochs[0], 1e-3, 128, MODE_NONE, seed),
        StagePlan(2, epochs[1], 1e-3, 64, MODE_GENRE, seed),
        StagePlan(3, epochs[2], 1e-3, 64, MODE_TAG, seed),
    )


class ModelState:
    """All learnable arrays, their optimizer state, and the stage marker.

    ``params`` is the flat name -> tensor map used by the optimizer and
    the checkpoint writer; ``towers`` exposes the same tensors regrouped
    the way the fusion layer wants them.  With shared towers both routes
    point at one set of tensors and the flat map stores it once.
    """

    def __init__(
        self,
        config: ModelConfig,
        params: dict[str, TapeValue],
        towers: dict[str, dict[str, TapeValue]],
        adam: dict[str, AdamState],
        stage: int = 0,
    ):
        self.config = config
        self.params = params
        self.towers = towers
        self.adam = adam
        self.stage = stage

    @property
    def vocab(self) -> int:
        return self.params["emb.table"].value.shape[0] - 1

    @property
    def embedding_table(self) -> TapeValue:
        return self.params["emb.table"]

    def trainable_names(self, stage: int) -> list[str]:
        """Stage 1 touches encoder + embeddings only; later stages everything."""
        if stage == 1:
            return [n for n in self.params if not n.startswith(("proj.", "tower."))]
        return list(self.params)


def init_model(config: ModelConfig, vocab: int) -> ModelState:
    """Seeded fresh state at stage 0."""
    params = dict(init_backbone(substream(config.seed, "init.backbone"), config.backbone, vocab))
    params.update(
        init_projector(
            substream(config.seed, "init.projector"),
            config.prompt_width,
            config.projector_hidden,
            config.backbone.d,
        )
    )
    towers = init_fusion(
        substream(config.seed, "init.fusion"),
        config.backbone.d,
        config.fusion_heads,
        config.fusion_ffn_mult,
        shared=config.shared_towers,
    )
    for route, prefix in _TOWER_PREFIX.items():
        if route == ROUTE_NEGATIVE and towers[ROUTE_NEGATIVE] is towers[ROUTE_POSITIVE]:
            break
        for key, tensor in towers[route].items():
            params[prefix + key] = tensor
    adam = {name: AdamState.for_param(p) for name, p in params.items()}
    return ModelState(config, params, towers, adam, stage=0)


# ---------------------------------------------------------------------------
# losses


def unified_loss(
    tape: Tape | None,
    h_final: TapeValue,
    target_ids: list[int] | tuple[int, ...],
    table: TapeValue,
    tau: float,
) -> TapeValue:
    """Cross-entropy averaged over a target set.

    A steering instance either promotes one item (singleton set) or
    suppresses by promoting the whole compliance list; both reduce to
    -(1/|T|) sum log P(v), with P a full softmax over the vocabulary at
    temperature tau.
    """
    if len(target_ids) == 0:
        raise InvalidArgumentError("unified loss needs a non-empty target set")
    if len(set(target_ids)) != len(target_ids):
        raise InvalidArgumentError("duplicate ids in a target set")
    vocab = table.value.shape[0] - 1
    for t in target_ids:
        if not (1 <= t <= vocab):
            raise InvalidArgumentError(f"target id {t} outside the vocabulary")
    if h_final.value.ndim != 1:
        raise InvalidArgumentError("unified loss scores a single representation")
    h = reshape(tape, h_final, (1, h_final.value.shape[0]))
    weights = np.zeros((1, vocab))
    weights[0, np.asarray(target_ids) - 1] = 1.0 / len(target_ids)
    return target_set_cross_entropy(tape, h, table, weights, tau, reduction="mean")


@dataclass(frozen=True)
class PromptInstance:
    """One training-ready steering example.

    The featurizer is frozen, so features are precomputed; targets are
    re-drawn per epoch for promotion tasks, hence stored here rather
    than read from the task.
    """

    history: tuple[int, ...]
    features: np.ndarray
    route: str
    target_ids: tuple[int, ...]


def _prompt_loss(tape: Tape | None, instances: list[PromptInstance], state: ModelState) -> TapeValue:
    """Mean unified loss over a prompt batch, grouped by route."""
    cfg = state.config
    vocab = state.vocab
    table = state.embedding_table
    total: TapeValue | None = None
    for route in (ROUTE_POSITIVE, ROUTE_NEGATIVE):
        group = [inst for inst in instances if inst.route == route]
        if not group:
            continue
        h = encode_batch(tape, [list(g.history) for g in group], state.params, cfg.backbone)
        feats = np.stack([g.features for g in group])
        flat = project_prompt(tape, feats.reshape(-1, cfg.prompt_width), state.params)
        c_p = reshape(tape, flat, (len(group), cfg.prompt_rows, cfg.backbone.d))
        h_final = fuse(tape, h, c_p, route, state.towers, cfg.fusion_heads)
        weights = np.zeros((len(group), vocab))
        for i, g in enumerate(group):
            if len(g.target_ids) == 0:
                raise InvalidArgumentError("unified loss needs a non-empty target set")
            weights[i, np.asarray(g.target_ids) - 1] = 1.0 / len(g.target_ids)
        part = target_set_cross_entropy(tape, h_final, table, weights, cfg.tau_prompt, reduction="sum")
        total = part if total is None else add_scalars(tape, total, part)
    assert total is not None
    return scale_scalar(tape, total, 1.0 / len(instances))


def total_loss(
    tape: Tape | None,
    seq_batch: list[tuple[list[int], int]],
    prompt_batch: list[PromptInstance],
    state: ModelState,
) -> TapeValue:
    """Sum of the sequence loss and the (weighted) prompt loss.

    Either batch may be empty — stage 1 has no prompts — but not both.
    """
    if not seq_batch and not prompt_batch:
        raise InvalidArgumentError("need at least one of a sequence batch or a prompt batch")
    cfg = state.config
    l_seq = None
    if seq_batch:
        l_seq = sequential_loss(tape, seq_batch, state.params, cfg.backbone, cfg.tau_seq)
    if not prompt_batch:
        return l_seq
    l_prompt = _prompt_loss(tape, prompt_batch, state)
    if cfg.prompt_loss_weight != 1.0:
        l_prompt = scale_scalar(tape, l_prompt, cfg.prompt_loss_weight)
    if l_seq is None:
        return l_prompt
    return add_scalars(tape, l_seq, l_prompt)


# ---------------------------------------------------------------------------
# curriculum


def sequence_pairs(split: SplitCorpus) -> list[tuple[list[int], int]]:
    """Every (prefix, next item) pair inside each user's training segment."""
    pairs = []
    for uid in split.user_ids:
        ids = history_ids(split.train[uid])
        for t in range(1, len(ids)):
            pairs.append((ids[:t], ids[t]))
    return pairs


def _step(state: ModelState, names: list[str], loss_value: TapeValue, tape: Tape, lr: float) -> float:
    backward(tape, loss_value)
    for name in names:
        adam_step(state.params[name], state.adam[name], lr)
    return float(loss_value.value)


def _run_pretrain(plan: StagePlan, state: ModelState, split: SplitCorpus) -> list[float]:
    pairs = sequence_pairs(split)
    if not pairs:
        raise ConfigurationError("training split has no usable (prefix, next) pairs")
    rng = substream(plan.seed, f"train.stage{plan.stage}")
    names = state.trainable_names(plan.stage)
    trace = []
    for _ in range(plan.epochs):
        order = rng.permutation(len(pairs))
        losses = []
        for lo in range(0, len(order), plan.batch_size):
            batch = [pairs[j] for j in order[lo : lo + plan.batch_size]]
            for p in state.params.values():
                p.zero_grad()
            tape = Tape()
            loss = sequential_loss(tape, batch, state.params, state.config.backbone, state.config.tau_seq)
            losses.append(_step(state, names, loss, tape, plan.lr))
        trace.append(float(np.mean(losses)))
    return trace


def _run_prompt_stage(
    plan: StagePlan,
    state: ModelState,
    split: SplitCorpus,
    lexicon: TagLexicon,
    templates: TemplatePool,
    task_kinds: tuple[str, ...] = (POS, NEG),
) -> list[float]:
    cfg = state.config
    pairs = sequence_pairs(split)
    if not pairs:
        raise ConfigurationError("training split has no usable (prefix, next) pairs")
    rng = substream(plan.seed, f"train.stage{plan.stage}")
    names = state.trainable_names(plan.stage)
    dropout = TAG_CATEGORY_DROPOUT if plan.vocab_mode == MODE_TAG else 0.0
    trace = []
    for _ in range(plan.epochs):
        # Tasks are redrawn every epoch - fresh context cuts, tag and
        # template picks, and promotion targets - so the towers learn the
        # steering rule instead of memorizing a fixed handful of windows.
        jitter = tuple(sorted(0.3 + 0.55 * float(x) for x in rng.random(3)))
        task_set = build_task_set(
            split, phase="train", stage_vocab=plan.vocab_mode,
            seed=int(rng.integers(1 << 62)), kinds=task_kinds,
            cut_fracs=jitter, pool=templates, lexicon=lexicon,
            category_dropout=dropout,
        )
        tasks = task_set.tasks
        if not tasks:
            raise ConfigurationError("no prompt tasks could be built from this split")
        feat_cache: dict[str, np.ndarray] = {}
        for t in tasks:
            if t.prompt_text not in feat_cache:
                feat_cache[t.prompt_text] = featurize_prompt(
                    t.prompt_text, cfg.prompt_rows, cfg.prompt_width
                )
        histories = [
            tuple(history_ids(split.phase_history(t.user_id, t.phase))[: t.context_cut])
            for t in tasks
        ]
        task_order = rng.permutation(len(tasks))
        pair_order = rng.permutation(len(pairs))
        losses = []
        cursor = 0
        for lo in range(0, len(task_order), plan.batch_size):
            chunk = task_order[lo : lo + plan.batch_size]
            prompt_batch = [
                PromptInstance(
                    histories[i], feat_cache[tasks[i].prompt_text],
                    tasks[i].route, tasks[i].target_ids,
                )
                for i in chunk
            ]
            seq_batch = []
            for _ in range(len(chunk)):
                seq_batch.append(pairs[pair_order[cursor % len(pairs)]])
                cursor += 1
            for p in state.params.values():
                p.zero_grad()
            tape = Tape()
            loss = total_loss(tape, seq_batch, prompt_batch, state)
            losses.append(_step(state, names, loss, tape, plan.lr))
        trace.append(float(np.mean(losses)))
    return trace


def run_stage(
    plan: StagePlan,
    state: ModelState,
    split: SplitCorpus,
    lexicon: TagLexicon = DEFAULT_LEXICON,
    templates: TemplatePool = DEFAULT_POOL,
    task_kinds: tuple[str, ...] = (POS, NEG),
    waive_order: bool = False,
) -> list[float]:
    """Run one curriculum stage in place; returns per-epoch mean losses.

    Stages must run in order: a plan for stage k is rejected unless the
    state has already finished stage k-1 (re-running a stage is allowed).
    ``waive_order`` lifts that check for curriculum ablations that skip a
    stage on purpose; ``task_kinds`` restricts the prompt batches for the
    loss ablations.
    """
    if state.stage < plan.stage - 1 and not waive_order:
        raise StateError(
            f"stage {plan.stage} requires a state that has finished stage "
            f"{plan.stage - 1}; this one is at stage {state.stage}"
        )
    if plan.stage == 1:
        trace = _run_pretrain(plan, state, split)
    else:
        trace = _run_prompt_stage(plan, state, split, lexicon, templates, task_kinds)
    state.stage = max(state.stage, plan.stage)
    return trace


# ---------------------------------------------------------------------------
# checkpoints


def _config_to_dict(config: ModelConfig) -> dict:
    return asdict(config)


def _config_from_dict(blob: dict) -> ModelConfig:
    blob = dict(blob)
    backbone = BackboneConfig(**blob.pop("backbone"))
    return ModelConfig(backbone=backbone, **blob)


def save_checkpoint(state: ModelState, path: str) -> None:
    """Write magic, JSON header, then each tensor as little-endian float64."""
    tensors: list[tuple[str, np.ndarray]] = []
    for name in sorted(state.params):
        tensors.append((name, state.params[name].value))
    for name in sorted(state.adam):
        tensors.append((f"adam.m::{name}", state.adam[name].m))
        tensors.append((f"adam.v::{name}", state.adam[name].v))
    entries = []
    offset = 0
    for name, arr in tensors:
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = {
        "version": CHECKPOINT_VERSION,
        "stage": state.stage,
        "vocab": state.vocab,
        "config": _config_to_dict(state.config),
        "tensors": entries,
        "adam_t": {name: state.adam[name].t for name in sorted(state.adam)},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> ModelState:
    """Rebuild a ModelState bit-for-bit from a checkpoint file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8 or raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: not a model checkpoint (bad magic)")
    (header_len,) = struct.unpack("<I", raw[4:8])
    if 8 + header_len > len(raw):
        raise CheckpointFormatError(f"{path}: header length field exceeds file size")
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: unreadable header: {exc}") from exc
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: checkpoint version {header.get('version')!r} not supported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    config = _config_from_dict(header["config"])
    body = raw[8 + header_len :]
    arrays: dict[str, np.ndarray] = {}
    expected_end = 0
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        start = entry["offset"]
        end = start + size * 8
        if end > len(body):
            raise CheckpointFormatError(
                f"{path}: tensor {entry['name']!r} extends past the end of the file"
            )
        arrays[entry["name"]] = (
            np.frombuffer(body[start:end], dtype="<f8").astype(np.float64).reshape(shape)
        )
        expected_end = max(expected_end, end)
    if expected_end != len(body):
        raise CheckpointFormatError(
            f"{path}: blob section is {len(body)} bytes, header accounts for {expected_end}"
        )

    params: dict[str, TapeValue] = {}
    adam: dict[str, AdamState] = {}
    for name, arr in arrays.items():
        if name.startswith("adam."):
            continue
        params[name] = TapeValue(arr)
    adam_t = header.get("adam_t", {})
    for name, p in params.items():
        m = arrays.get(f"adam.m::{name}")
        v = arrays.get(f"adam.v::{name}")
        if m is None or v is None or m.shape != p.value.shape or v.shape != p.value.shape:
            raise CheckpointFormatError(f"{path}: optimizer state for {name!r} missing or misshapen")
        adam[name] = AdamState(m=m, v=v, t=int(adam_t.get(name, 0)))

    towers: dict[str, dict[str, TapeValue]] = {ROUTE_POSITIVE: {}, ROUTE_NEGATIVE: {}}
    pos_prefix = _TOWER_PREFIX[ROUTE_POSITIVE]
    neg_prefix = _TOWER_PREFIX[ROUTE_NEGATIVE]
    for name, p in params.items():
        if name.startswith(pos_prefix):
            towers[ROUTE_POSITIVE][name[len(pos_prefix) :]] = p
        elif name.startswith(neg_prefix):
            towers[ROUTE_NEGATIVE][name[len(neg_prefix) :]] = p
    if config.shared_towers:
        towers[ROUTE_NEGATIVE] = towers[ROUTE_POSITIVE]

    stage = int(header["stage"])
    if stage not in (0, 1, 2, 3):
        raise CheckpointFormatError(f"{path}: stage marker {stage} out of range")
    state = ModelState(config, params, towers, adam, stage=stage)
    if state.vocab != header.get("vocab"):
        raise CheckpointFormatError(
            f"{path}: header vocab {header.get('vocab')} disagrees with the embedding table"
        )
    return state
