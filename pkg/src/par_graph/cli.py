from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import List, Optional

from .checkpoint import load_checkpoint, save_checkpoint
from .config import KEY_STRIDE
from .config_loader import RunConfig, apply_overrides, create_default_config, load_config
from .errors import ConfigError, DataError, ParGraphError
from .metrics import evaluate
from .model import ParModel
from .report import format_stats, format_table
from .scene import LabelVocab, dataset_stats, key_frames, load_dataset, save_dataset
from .schema import EpochLog
from .selftest import run_selftest
from .synth import synth_generate
from .training import predict_all, train

logger = logging.getLogger(__name__)

ABLATION_FLAGS = {
    "no_residual_f": "Drop the original feature f from the individual node",
    "no_fhat": "Drop the graph-updated feature from the individual node",
    "euclid_dist": "Use plain Euclidean anchor distance (no area normalization)",
    "no_dbreve": "Leave the distance affinity out of the relation matrix",
    "no_e": "Leave the learned affinity out of the relation matrix",
    "maxpool_agg": "Replace AiO aggregation by element-wise max-pooling",
    "no_g2i": "Do not feed the global node back into individual readouts",
    "no_g2p": "Do not feed the global node back into group readouts",
}


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(
        prog="par-graph",
        description="Hierarchical graph network for individual, group and global activity recognition",
    )
    parser.add_argument(
        "--config",
        "-c",
        type=Path,
        help="Path to a YAML/JSON config file (default: ./config.yaml if present)",
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override one config value, e.g. train.epochs=10 (repeatable)",
    )
    parser.add_argument(
        "--generate-config",
        action="store_true",
        help="Generate a default config.yaml file and exit",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Only log warnings and errors")

    sub = parser.add_subparsers(dest="command")

    synth = sub.add_parser("synth", help="Generate a synthetic dataset")
    synth.add_argument("--out", type=Path, required=True, help="Output NDJSON file")
    synth.add_argument("--blob", type=Path, help="Write features to this blob file instead of inline")
    synth.add_argument("--seed", type=int, required=True, help="Scene seed")
    synth.add_argument("--frames", type=int, help="Number of frames (overrides synth.n_frames)")

    tr = sub.add_parser("train", help="Train a model on an NDJSON dataset")
    tr.add_argument("--data", type=Path, required=True, help="Training NDJSON file")
    tr.add_argument("--out", type=Path, required=True, help="Checkpoint directory")
    tr.add_argument("--log", type=Path, help="Per-epoch JSON lines log (default: <out>/train_log.jsonl)")
    tr.add_argument("--seed", type=int, required=True, help="Initialization and shuffle seed")
    tr.add_argument("--resume", action="store_true", help="Continue from the checkpoint in --out")
    tr.add_argument("--key-stride", type=int, default=KEY_STRIDE, help="Keep frames with id %% stride == 0")
    for name, text in ABLATION_FLAGS.items():
        tr.add_argument(f"--{name.replace('_', '-')}", action="store_true", help=text)

    ev = sub.add_parser("eval", help="Evaluate a checkpoint on an NDJSON dataset")
    ev.add_argument("--data", type=Path, required=True, help="Test NDJSON file")
    ev.add_argument("--checkpoint", type=Path, required=True, help="Checkpoint directory")
    ev.add_argument("--report", type=Path, help="Write the metrics report as JSON")
    ev.add_argument("--threads", type=int, default=1, help="Parallel inference threads")
    ev.add_argument("--gt-groups", action="store_true", help="Use ground-truth groups instead of clustering")
    ev.add_argument("--cluster", choices=["spectral", "threshold"], help="Group detection method")
    ev.add_argument("--key-stride", type=int, default=KEY_STRIDE, help="Keep frames with id %% stride == 0")

    sub.add_parser("selftest", help="Run built-in numerical and metric checks")
    return parser


def generate_config_file(output_path: Path) -> None:
    """Generate a default config.yaml file"""
    if output_path.exists():
        raise ConfigError(f"{output_path} already exists; remove it first")
    create_default_config(output_path)
    print(f"Default config file created at: {output_path}")
    print("Edit this file and run: par-graph --config config.yaml <command>")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        config = load_config(args.config)
    elif Path("config.yaml").exists():
        logger.info("Using config.yaml from current directory")
        config = load_config(Path("config.yaml"))
    else:
        config = RunConfig()
    apply_overrides(config, args.overrides)
    if args.command == "train":
        flags = config.model.ablations
        for name in ABLATION_FLAGS:
            if getattr(args, name):
                setattr(flags, name, True)
        config.train.seed = args.seed
    if args.command == "synth" and args.frames is not None:
        config.synth.n_frames = args.frames
    if args.command == "eval" and args.cluster:
        config.cluster.method = args.cluster
    config.validate()
    return config


def cmd_synth(args: argparse.Namespace, config: RunConfig) -> int:
    frames = synth_generate(config.synth, seed=args.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(frames, args.out, blob_path=args.blob)
    print(f"Wrote {len(frames)} frames to {args.out}")
    print(format_stats([dataset_stats(frames, args.out.stem)]))
    return 0


def _load_frames(path: Path, vocab: LabelVocab, stride: int) -> list:
    frames = key_frames(load_dataset(path, vocab), stride)
    if not frames:
        raise DataError(f"no key frames in {path} at stride {stride}")
    return frames


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    model_cfg = config.model
    vocab = LabelVocab.default(model_cfg.num_actions, model_cfg.num_social, model_cfg.num_global)
    frames = _load_frames(args.data, vocab, args.key_stride)
    print(format_stats([dataset_stats(frames, args.data.stem)]))

    model = adam = None
    start_epoch = 0
    if args.resume:
        ckpt = load_checkpoint(args.out)
        model, adam, start_epoch, vocab = ckpt.model, ckpt.adam, ckpt.epoch, ckpt.vocab
        config.model = model.config
        print(f"Resuming from epoch {start_epoch}")

    args.out.mkdir(parents=True, exist_ok=True)
    log_path = args.log or args.out / "train_log.jsonl"
    if not args.resume:
        log_path.write_text("", encoding="utf-8")

    def append_log(entry: EpochLog) -> None:
        with open(log_path, "a", encoding="utf-8") as fh:
            fh.write(entry.model_dump_json(by_alias=True) + "\n")

    result = train(
        frames,
        model_config=config.model,
        train_config=config.train,
        model=model,
        adam=adam,
        start_epoch=start_epoch,
        log_callback=append_log,
    )
    save_checkpoint(
        args.out,
        result.model,
        result.adam,
        vocab,
        config.train,
        result.epoch,
        config_echo=config.echo(),
    )
    if result.trace:
        print(f"Final epoch {result.epoch}: loss {result.trace[-1].loss:.5f}")
    print(f"Checkpoint written to {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model: ParModel = ckpt.model
    frames = _load_frames(args.data, ckpt.vocab, args.key_stride)
    print(format_stats([dataset_stats(frames, args.data.stem)]))

    # the label threshold is an inference setting; everything else comes from training
    eval_train = replace(ckpt.train_config, label_threshold=config.train.label_threshold)
    predictions = predict_all(
        frames,
        model,
        eval_train,
        cluster_config=config.cluster,
        threads=args.threads,
        use_gt_groups=args.gt_groups,
    )
    echo = config.echo()
    echo["model"] = asdict(model.config)
    echo["train"] = asdict(eval_train)
    report = evaluate(
        frames,
        predictions,
        sizes=ckpt.vocab.sizes,
        gt_groups_used=args.gt_groups,
        config_echo=echo,
    )
    print()
    print(format_table(report, label="ours*" if args.gt_groups else "ours"))
    if args.report:
        args.report.parent.mkdir(parents=True, exist_ok=True)
        report.write(args.report)
        print(f"\nReport written to {args.report}")
    return 0


def cmd_selftest(args: argparse.Namespace, config: RunConfig) -> int:
    results = run_selftest()
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 0 if not failed else 3


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "selftest": cmd_selftest,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        # Handle config generation
        if args.generate_config:
            generate_config_file(args.config or Path("config.yaml"))
            return 0
        if not args.command:
            parser.error("a command is required (synth, train, eval, selftest)")
        config = resolve_config(args)
        return COMMANDS[args.command](args, config)
    except ParGraphError as exc:
        print(f"par-graph: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"par-graph: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
