"""Command-line entry point: gen-data / train / eval / ablate / serve.

Every command is fully seeded and every artifact embeds the config that
produced it, so re-running a command with the echoed config reproduces
the artifact bitwise.  Errors leave on stderr as one machine-readable
JSON line: usage problems exit 2, everything else exits 1.

Precedence for settings: command-line flags > --config file > defaults.
The config file is JSON mirroring PipelineConfig: top-level keys "gen",
"model", "epochs", "split_ratios", "eval".  PROMPTREC_DATA, when set,
is the default --data directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace

from .backbone import BackboneConfig
from .corpus.store import load_corpus, save_corpus
from .corpus.generate import GeneratorConfig, generate_synthetic_corpus
from .corpus.split import chronological_split
from .corpus.types import NEG, POS, SEQ
from .errors import ConfigurationError, InvalidArgumentError, PromptRecError
from .evalsuite import ALL_METHODS, EvalConfig, evaluate
from .experiments import (
    ABLATION_VARIANTS,
    DEFAULT_SEEDS,
    PipelineConfig,
    run_ablation,
)
from .training import (
    ModelConfig,
    default_stage_plans,
    init_model,
    load_checkpoint,
    run_stage,
    save_checkpoint,
)

DATA_ENV = "PROMPTREC_DATA"
_KIND_FLAGS = {"seq": SEQ, "pos": POS, "neg": NEG}


class _Parser(argparse.ArgumentParser):
    """argparse with single-line JSON usage errors (exit 2)."""

    def error(self, message):
        _fail("usage", message, status=2)


def _fail(code: str, message: str, status: int = 1):
    line = json.dumps({"error": code, "message": " ".join(str(message).split())})
    print(line, file=sys.stderr)
    raise SystemExit(status)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            blob = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file is not valid JSON: {exc.msg}") from exc
    if not isinstance(blob, dict):
        raise ConfigurationError("config file must hold a JSON object")
    return blob


def _tupled(blob: dict, *keys: str) -> dict:
    out = dict(blob)
    for key in keys:
        if key in out and isinstance(out[key], list):
            out[key] = tuple(out[key])
    return out


def _build_pipeline_config(file_blob: dict, args) -> PipelineConfig:
    try:
        gen = GeneratorConfig(**_tupled(file_blob.get("gen", {}), "seq_len_range"))
        model_blob = dict(file_blob.get("model", {}))
        backbone_blob = dict(model_blob.pop("backbone", {}))
        if getattr(args, "arch", None):
            backbone_blob["arch"] = args.arch
        model = ModelConfig(backbone=BackboneConfig(**backbone_blob), **model_blob)
        eval_blob = _tupled(file_blob.get("eval", {}), "kinds", "ns", "ks", "methods")
        eval_cfg = EvalConfig(**eval_blob)
        cfg = PipelineConfig(
            gen=gen,
            model=model,
            epochs=tuple(file_blob.get("epochs", (30, 20, 20))),
            split_ratios=tuple(file_blob.get("split_ratios", (0.8, 0.1, 0.1))),
            eval=eval_cfg,
        )
    except TypeError as exc:
        raise ConfigurationError(f"bad config file field: {exc}") from exc
    if getattr(args, "epochs", None):
        cfg = replace(cfg, epochs=_int_tuple(args.epochs, expect=3, flag="--epochs"))
    return cfg


def _int_tuple(text: str, expect: int | None = None, flag: str = "") -> tuple[int, ...]:
    try:
        vals = tuple(int(part) for part in text.split(",") if part != "")
    except ValueError:
        raise InvalidArgumentError(f"{flag} wants comma-separated integers, got {text!r}")
    if expect is not None and len(vals) != expect:
        raise InvalidArgumentError(f"{flag} wants exactly {expect} integers, got {text!r}")
    return vals


def _eval_config_from_flags(base: EvalConfig, args) -> EvalConfig:
    cfg = base
    if args.task:
        kinds = []
        for part in args.task.lower().split(","):
            if part not in _KIND_FLAGS:
                raise InvalidArgumentError(f"--task wants seq, pos or neg, got {part!r}")
            kinds.append(_KIND_FLAGS[part])
        cfg = replace(cfg, kinds=tuple(kinds))
    if args.n:
        cfg = replace(cfg, ns=_int_tuple(args.n, flag="--n"))
    if args.k:
        cfg = replace(cfg, ks=_int_tuple(args.k, flag="--k"))
    if args.method:
        methods = tuple(args.method.lower().split(","))
        for m in methods:
            if m not in ALL_METHODS:
                raise InvalidArgumentError(f"--method wants base, filter or dpr, got {m!r}")
        cfg = replace(cfg, methods=methods)
    if args.vocab:
        cfg = replace(cfg, vocab=args.vocab)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    return cfg


def _write_json(path: str, blob: dict) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(blob, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def _stage_path(out_dir: str, stage: int) -> str:
    return os.path.join(out_dir, f"checkpoint.stage{stage}.dpr")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen_data(args) -> int:
    cfg = _build_pipeline_config(_load_config_file(args.config), args)
    corpus = generate_synthetic_corpus(cfg.gen, seed=args.seed)
    echo = {"seed": args.seed, "generator": asdict(cfg.gen)}
    items_path, inter_path = save_corpus(corpus, args.out, extra_meta=echo)
    print(json.dumps({"items": items_path, "interactions": inter_path,
                      "users": len(corpus.users), "catalog": corpus.num_items}))
    return 0


def _cmd_train(args) -> int:
    file_blob = _load_config_file(args.config)
    cfg = _build_pipeline_config(file_blob, args)
    corpus = load_corpus(_data_dir(args))
    split = chronological_split(corpus, ratios=cfg.split_ratios)
    stages = _int_tuple(args.stages, flag="--stages") if args.stages else (1, 2, 3)
    if sorted(stages) != list(stages):
        raise InvalidArgumentError("--stages must be ascending")

    os.makedirs(args.out, exist_ok=True)
    seed = args.seed if args.seed is not None else 0
    model_cfg = replace(cfg.model, seed=seed)
    if stages[0] == 1:
        state = init_model(model_cfg, vocab=corpus.num_items)
    else:
        prev = _stage_path(args.out, stages[0] - 1)
        if not os.path.exists(prev):
            _fail(
                "state",
                f"stage {stages[0]} needs the stage {stages[0] - 1} checkpoint at {prev}; "
                "train earlier stages first",
            )
        state = load_checkpoint(prev)
    plans = default_stage_plans(seed, cfg.epochs)
    written = []
    for stage in stages:
        trace = run_stage(plans[stage - 1], state, split)
        path = _stage_path(args.out, stage)
        save_checkpoint(state, path)
        written.append({"stage": stage, "checkpoint": path,
                        "final_loss": trace[-1] if trace else None})
    print(json.dumps({"seed": seed, "stages": written}))
    return 0


def _cmd_eval(args) -> int:
    file_blob = _load_config_file(args.config)
    cfg = _build_pipeline_config(file_blob, args)
    corpus = load_corpus(_data_dir(args))
    split = chronological_split(corpus, ratios=cfg.split_ratios)
    state = load_checkpoint(args.checkpoint)
    eval_cfg = _eval_config_from_flags(cfg.eval, args)
    report = evaluate(state, split, eval_cfg)
    blob = report.to_dict()
    blob["config_echo"] = {
        "eval": asdict(eval_cfg),
        "model": asdict(state.config),
        "checkpoint": args.checkpoint,
    }
    if args.out:
        _write_json(args.out, blob)
        print(json.dumps({"report": args.out, "cells": len(report.cells)}))
    else:
        print(report.table())
    return 0


def _cmd_ablate(args) -> int:
    file_blob = _load_config_file(args.config)
    cfg = _build_pipeline_config(file_blob, args)
    if args.which not in ABLATION_VARIANTS:
        raise InvalidArgumentError(
            f"--which wants one of {sorted(ABLATION_VARIANTS)}, got {args.which!r}"
        )
    seeds = _int_tuple(args.seeds, flag="--seeds") if args.seeds else DEFAULT_SEEDS
    report = run_ablation(args.which, cfg, seeds)
    blob = report.to_dict()
    blob["config_echo"] = {"pipeline": _pipeline_echo(cfg), "seeds": list(seeds)}
    if args.out:
        _write_json(args.out, blob)
        print(json.dumps({"report": args.out, "which": args.which}))
    else:
        print(report.table())
    return 0


def _pipeline_echo(cfg: PipelineConfig) -> dict:
    return {
        "gen": asdict(cfg.gen),
        "model": asdict(cfg.model),
        "epochs": list(cfg.epochs),
        "split_ratios": list(cfg.split_ratios),
        "eval": asdict(cfg.eval),
    }


def _cmd_serve(args) -> int:
    from .serve import run_server

    corpus = load_corpus(_data_dir(args))
    state = load_checkpoint(args.checkpoint)
    static_dir = args.static
    if static_dir is not None and not os.path.isdir(static_dir):
        raise ConfigurationError(f"--static is not a directory: {static_dir}")
    run_server(state, corpus, host=args.host, port=args.port, static_dir=static_dir)
    return 0


def _data_dir(args) -> str:
    data = args.data or os.environ.get(DATA_ENV)
    if not data:
        raise ConfigurationError(
            f"no data directory: pass --data or set {DATA_ENV}"
        )
    return data


def _add_common(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--config", help="JSON config file (flags win over file values)")
    if data:
        p.add_argument("--data", help=f"corpus directory (default: ${DATA_ENV})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="promptrec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[], help="write a synthetic corpus")
    _add_common(p, data=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--arch", choices=("gru", "sas"), help=argparse.SUPPRESS)
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("train", help="run curriculum stages, writing a checkpoint each")
    _add_common(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--stages", help="comma list, e.g. 1,2,3 (default all)")
    p.add_argument("--epochs", help="three comma-separated epoch counts")
    p.add_argument("--arch", choices=("gru", "sas"))
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint, writing an EvalReport")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="report JSON path (default: print table)")
    p.add_argument("--task", help="comma list of seq,pos,neg")
    p.add_argument("--n", help="comma list of compliance depths")
    p.add_argument("--k", help="comma list of cutoffs")
    p.add_argument("--method", help="comma list of base,filter,dpr")
    p.add_argument("--vocab", choices=("genre", "tag"))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--arch", choices=("gru", "sas"), help=argparse.SUPPRESS)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("ablate", help="train and compare ablation variants")
    _add_common(p, data=False)
    p.add_argument("--which", required=True, help="towers, loss, or stages")
    p.add_argument("--seeds", help="comma list (default 0,1,2,3,4)")
    p.add_argument("--out", help="report JSON path (default: print table)")
    p.add_argument("--epochs", help="three comma-separated epoch counts")
    p.add_argument("--arch", choices=("gru", "sas"))
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("serve", help="HTTP inference service over a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--static", help="directory with the built console bundle")
    p.add_argument("--arch", choices=("gru", "sas"), help=argparse.SUPPRESS)
    p.set_defaults(fn=_cmd_serve)
    return parser


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PromptRecError as exc:
        _fail(getattr(exc, "code", "error"), str(exc))
    except OSError as exc:
        _fail("io", str(exc))
    return 1


def main() -> None:
    raise SystemExit(dispatch())


if __name__ == "__main__":
    main()
