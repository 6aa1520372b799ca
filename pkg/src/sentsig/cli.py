"""Command-line entry point: partition, train, embed, eval, combine-eval.

Every command is deterministic given its config file, flags and seed(s), and
finishes by writing a ``manifest.json`` into the output directory; a
directory without a manifest is an aborted, invalid run.  Config files use
INI syntax (key = value under [data], [train], [probe] sections) and
command-line flags win over config values.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .combiner import CombinedProvider, PipelineSpec, run_pipeline
from .corpus import Partition, dice, load_definitions, load_nli, load_sts, partition_by_dice, partition_by_source, save_sts
from .encoder import EmbeddingStore, ToyEncoder, build_vocab, load_dump, save_dump
from .errors import InvalidInputError, SentsigError
from .evalsuite import ProbeConfig, StsReport, aggregate_seeds, eval_probe, eval_sts_partitioned, load_probe_task, probe_results_to_markdown
from .objectives import MultiSchedule, TrainConfig

TRAIN_METHODS = ("sbert", "defsent", "s+d", "d+s", "multi")
METHODS = TRAIN_METHODS + ("average", "concat", "none")


@dataclass
class ExperimentConfig:
    """Effective settings of a run: config file values with flag overrides applied."""

    method: str = "sbert"
    dim: int = 16
    pooling: str = "mean"
    min_count: int = 1
    seeds: list[int] = field(default_factory=lambda: [0])
    out: str | None = None
    sts: str | None = None
    nli: str | None = None
    definitions: str | None = None
    batch_size: int = 16
    epochs: int = 1
    base_lr: float = 1e-3
    warmup_fraction: float = 0.10
    smart_batching: bool = True
    bucket_width: int = 8
    lr_decay: str = "constant"
    tied_head: bool = True
    head_bias: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    nli_cycle: int = 19
    def_cycle: int = 1
    probe_folds: int = 10
    probe_batch_size: int = 64
    probe_epochs: int = 4
    probe_lr: float = 1e-3
    probe_seed: int = 0

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size, epochs=self.epochs, beta1=self.beta1,
            beta2=self.beta2, eps=self.eps, base_lr=self.base_lr,
            warmup_fraction=self.warmup_fraction, seed=seed,
            smart_batching=self.smart_batching, bucket_width=self.bucket_width,
            lr_decay=self.lr_decay, tied_head=self.tied_head, head_bias=self.head_bias,
        )

    def probe_config(self) -> ProbeConfig:
        return ProbeConfig(folds=self.probe_folds, batch_size=self.probe_batch_size,
                           epochs=self.probe_epochs, lr=self.probe_lr,
                           beta1=self.beta1, beta2=self.beta2, eps=self.eps,
                           seed=self.probe_seed)

    def schedule(self) -> MultiSchedule:
        return MultiSchedule(nli_steps_per_cycle=self.nli_cycle,
                             def_steps_per_cycle=self.def_cycle)


def parse_seed_list(text: str) -> list[int]:
    parts = text.replace(",", " ").split()
    if not parts:
        raise InvalidInputError("empty seed list")
    return [int(p) for p in parts]


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}

# (section, key) -> ExperimentConfig attribute and type
_CONFIG_KEYS = {
    ("data", "sts"): ("sts", str),
    ("data", "nli"): ("nli", str),
    ("data", "definitions"): ("definitions", str),
    ("train", "method"): ("method", str),
    ("train", "dim"): ("dim", int),
    ("train", "pooling"): ("pooling", str),
    ("train", "min_count"): ("min_count", int),
    ("train", "seeds"): ("seeds", parse_seed_list),
    ("train", "out"): ("out", str),
    ("train", "batch_size"): ("batch_size", int),
    ("train", "epochs"): ("epochs", int),
    ("train", "base_lr"): ("base_lr", float),
    ("train", "warmup_fraction"): ("warmup_fraction", float),
    ("train", "smart_batching"): ("smart_batching", "bool"),
    ("train", "bucket_width"): ("bucket_width", int),
    ("train", "lr_decay"): ("lr_decay", str),
    ("train", "tied_head"): ("tied_head", "bool"),
    ("train", "head_bias"): ("head_bias", "bool"),
    ("train", "beta1"): ("beta1", float),
    ("train", "beta2"): ("beta2", float),
    ("train", "eps"): ("eps", float),
    ("train", "nli_cycle"): ("nli_cycle", int),
    ("train", "def_cycle"): ("def_cycle", int),
    ("probe", "folds"): ("probe_folds", int),
    ("probe", "batch_size"): ("probe_batch_size", int),
    ("probe", "epochs"): ("probe_epochs", int),
    ("probe", "lr"): ("probe_lr", float),
    ("probe", "seed"): ("probe_seed", int),
}


def load_experiment_config(path: str | None, args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path:
        parser = configparser.ConfigParser()
        read = parser.read(path, encoding="utf-8")
        if not read:
            raise InvalidInputError(f"config file not found: {path}")
        for section in parser.sections():
            for key, raw in parser.items(section):
                spec = _CONFIG_KEYS.get((section, key))
                if spec is None:
                    raise InvalidInputError(f"unknown config key [{section}] {key}")
                attr, conv = spec
                if conv == "bool":
                    if raw.lower() not in _BOOL:
                        raise InvalidInputError(f"[{section}] {key}: expected a boolean, got {raw!r}")
                    value = _BOOL[raw.lower()]
                else:
                    value = conv(raw)
                setattr(cfg, attr, value)
    # flags win over config file values
    for flag, attr in (("method", "method"), ("pooling", "pooling"), ("dim", "dim"),
                       ("out", "out")):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, attr, value)
    if getattr(args, "seeds", None) is not None:
        cfg.seeds = parse_seed_list(args.seeds)
    if getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    if not cfg.seeds:
        raise InvalidInputError("seed list must be nonempty")
    if cfg.method not in METHODS:
        raise InvalidInputError(f"unknown method {cfg.method!r}; expected one of {METHODS}")
    return cfg


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _write_json(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def _write_manifest(out_dir: Path, command: str, config_snapshot: dict,
                    artifacts: dict, started: float, extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "toolkit_version": __version__,
        "config": config_snapshot,
        "artifacts": artifacts,
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
    }
    if extra:
        manifest.update(extra)
    _write_json(out_dir / "manifest.json", manifest)


def _out_dir(cfg_out: str | None) -> Path:
    if not cfg_out:
        raise InvalidInputError("an output directory is required (--out or [train] out)")
    out = Path(cfg_out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config_snapshot(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_provider(path):
    """Load a provider from a checkpoint (JSON) or an embedding dump (dim= header)."""
    p = Path(path)
    if not p.exists():
        raise InvalidInputError(f"provider file not found: {p}")
    with open(p, encoding="utf-8") as fh:
        head = fh.read(4)
    if head.startswith("dim="):
        return load_dump(p)
    if head.startswith("{"):
        return load_checkpoint(p).encoder
    raise InvalidInputError(f"{p}: neither an embedding dump nor a checkpoint")


def _label_filename(label: str) -> str:
    return label.replace("/", "_") + ".tsv"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_partition(args) -> int:
    started = time.perf_counter()
    cfg = load_experiment_config(args.config, args)
    out = _out_dir(cfg.out)
    # several inputs (e.g. train/dev/test files) are pooled before sorting
    pairs = []
    for path in args.sts_files:
        pairs.extend(load_sts(path))
    if args.scheme == "source":
        partition = partition_by_source(pairs)
    else:
        partition = partition_by_dice(pairs, k=args.k)
    summary_subsets = []
    artifacts = {}
    for label, subset in partition.subsets:
        fname = _label_filename(label)
        save_sts(subset, out / fname)
        entry = {"label": label, "file": fname, "n": len(subset)}
        if args.scheme == "dice":
            values = [dice(p.sentence1, p.sentence2) for p in subset]
            entry["min_dice"] = min(values)
            entry["max_dice"] = max(values)
        summary_subsets.append(entry)
        artifacts[label] = str(out / fname)
    summary = {"scheme": args.scheme, "input": [str(p) for p in args.sts_files],
               "n_pairs": len(pairs), "subsets": summary_subsets}
    _write_json(out / "summary.json", summary)
    for entry in summary_subsets:
        line = f"{entry['label']}: {entry['n']} pairs"
        if "min_dice" in entry:
            line += f" (dice {entry['min_dice']:.3f}..{entry['max_dice']:.3f})"
        print(line)
    _write_manifest(out, "partition", _config_snapshot(cfg), artifacts, started)
    return 0


def _require(path: str | None, what: str) -> str:
    if not path:
        raise InvalidInputError(f"method requires a {what} dataset path")
    if not Path(path).exists():
        raise InvalidInputError(f"{what} dataset not found: {path}")
    return path


def cmd_train(args) -> int:
    started = time.perf_counter()
    cfg = load_experiment_config(args.config, args)
    if cfg.method not in TRAIN_METHODS:
        raise InvalidInputError(
            f"method {cfg.method!r} is not trainable; expected one of {TRAIN_METHODS}")
    out = _out_dir(cfg.out)

    needs_nli = cfg.method in ("sbert", "s+d", "d+s", "multi")
    needs_defs = cfg.method in ("defsent", "s+d", "d+s", "multi")
    nli_data = load_nli(_require(cfg.nli, "NLI")) if needs_nli else None
    def_data = load_definitions(_require(cfg.definitions, "definitions")) if needs_defs else None

    texts = []
    if nli_data:
        texts.extend(ex.premise for ex in nli_data)
        texts.extend(ex.hypothesis for ex in nli_data)
    if def_data:
        texts.extend(ex.definition for ex in def_data)
        texts.extend(ex.word for ex in def_data)
    vocab = build_vocab(texts, min_count=cfg.min_count)

    artifacts = {}
    stage_logs = {}
    for seed in cfg.seeds:
        encoder = ToyEncoder.create(vocab, cfg.dim, cfg.pooling, seed=seed)
        spec = PipelineSpec.from_method(cfg.method, cfg.train_config(seed), cfg.schedule())
        result = run_pipeline(spec, encoder, nli_data, def_data)
        nli_head = def_head = None
        stages = []
        for stage_name, stage_result in zip(spec.stages, result.stage_results):
            nli_head = stage_result.nli_head or nli_head
            def_head = stage_result.def_head or def_head
            losses = stage_result.losses
            stages.append({
                "stage": stage_name,
                "steps": len(stage_result.steps),
                "initial_loss": losses[0] if losses else None,
                "final_loss": losses[-1] if losses else None,
                "stream_pattern": [[s, c] for s, c in stage_result.stream_pattern()],
            })
        ckpt = out / f"checkpoint-seed{seed}.json"
        save_checkpoint(ckpt, result.encoder, nli_head=nli_head, def_head=def_head,
                        train_config=cfg.train_config(seed))
        artifacts[f"seed{seed}"] = str(ckpt)
        stage_logs[f"seed{seed}"] = stages
        print(f"seed {seed}: {sum(s['steps'] for s in stages)} steps -> {ckpt}")
    _write_manifest(out, "train", _config_snapshot(cfg), artifacts, started,
                    extra={"stages": stage_logs})
    return 0


def _build_single_or_combined(paths: list[str], mode: str | None):
    providers = [load_provider(p) for p in paths]
    if len(providers) == 1:
        return providers[0]
    if len(providers) == 2 and mode:
        return CombinedProvider(mode, providers[0], providers[1])
    raise InvalidInputError("give one provider, or exactly two with --combine")


def cmd_embed(args) -> int:
    started = time.perf_counter()
    cfg = load_experiment_config(args.config, args)
    out = _out_dir(cfg.out)
    provider = _build_single_or_combined(args.providers, args.combine)
    sentences = []
    seen = set()
    duplicates = 0
    with open(args.sentences, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line in seen:
                duplicates += 1
                continue
            seen.add(line)
            sentences.append(line)
    if duplicates:
        print(f"warning: skipped {duplicates} duplicate sentence(s)", file=sys.stderr)
    store = EmbeddingStore(provider.dim, name=provider.name)
    for sentence in sentences:
        store.add(sentence, provider.embed(sentence))
    dump_path = out / "embeddings.txt"
    save_dump(store, dump_path)
    print(f"wrote {len(sentences)} embeddings (dim={store.dim}) -> {dump_path}")
    _write_manifest(out, "embed", _config_snapshot(cfg),
                    {"dump": str(dump_path), "providers": list(args.providers)}, started)
    return 0


def _load_partition_dir(path: Path) -> Partition:
    summary_file = path / "summary.json"
    if summary_file.exists():
        with open(summary_file, encoding="utf-8") as fh:
            summary = json.load(fh)
        labels_files = [(e["label"], path / e["file"]) for e in summary["subsets"]]
        name = summary.get("scheme", path.name)
    else:
        labels_files = [(p.stem, p) for p in sorted(path.glob("*.tsv"))]
        name = path.name
    if not labels_files:
        raise InvalidInputError(f"no partition subsets found in {path}")
    return Partition(name=name, subsets=[(label, load_sts(f)) for label, f in labels_files])


def _sts_input_partition(args) -> Partition | None:
    if args.sts and args.partition_dir:
        raise InvalidInputError("give either --sts or --partition-dir, not both")
    if args.sts:
        pairs = load_sts(args.sts)
        stem = Path(args.sts).stem
        return Partition(name=stem, subsets=[(stem, pairs)])
    if args.partition_dir:
        return _load_partition_dir(Path(args.partition_dir))
    return None


def _evaluate_providers(providers, partition, probe_paths, probe_config):
    sts_report = None
    if partition is not None:
        reports = [eval_sts_partitioned(p, partition, seed=i) for i, p in enumerate(providers)]
        sts_report = reports[0] if len(reports) == 1 else aggregate_seeds(reports)
    probe_results = {}
    for probe_path in probe_paths or []:
        task = load_probe_task(probe_path)
        accuracies = [eval_probe(p, task, probe_config) for p in providers]
        probe_results[task.name] = {
            "accuracy_x100_mean": 100.0 * sum(accuracies) / len(accuracies),
            "per_provider_x100": [100.0 * a for a in accuracies],
        }
    return sts_report, probe_results


def _write_eval_outputs(out: Path, sts_report: StsReport | None, probe_results: dict) -> dict:
    report = {
        "sts": sts_report.to_json_dict() if sts_report else None,
        "probes": probe_results or None,
    }
    _write_json(out / "report.json", report)
    sections = []
    if sts_report:
        sections.append(sts_report.to_markdown())
    if probe_results:
        means = {name: r["accuracy_x100_mean"] / 100.0 for name, r in probe_results.items()}
        sections.append(probe_results_to_markdown(means))
    with open(out / "report.md", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(sections) if sections else "nothing evaluated\n")
    return {"report_json": str(out / "report.json"), "report_md": str(out / "report.md")}


def cmd_eval(args) -> int:
    started = time.perf_counter()
    cfg = load_experiment_config(args.config, args)
    out = _out_dir(cfg.out)
    providers = [load_provider(p) for p in args.providers]
    partition = _sts_input_partition(args)
    if partition is None and not args.probe:
        raise InvalidInputError("nothing to evaluate: give --sts, --partition-dir or --probe")
    sts_report, probe_results = _evaluate_providers(providers, partition, args.probe,
                                                    cfg.probe_config())
    artifacts = _write_eval_outputs(out, sts_report, probe_results)
    if sts_report:
        print(sts_report.to_markdown())
    _write_manifest(out, "eval", _config_snapshot(cfg), artifacts, started,
                    extra={"providers": list(args.providers)})
    return 0


def cmd_combine_eval(args) -> int:
    started = time.perf_counter()
    cfg = load_experiment_config(args.config, args)
    out = _out_dir(cfg.out)
    if len(args.a) != len(args.b):
        raise InvalidInputError("--a and --b must be given the same number of times")
    providers = [CombinedProvider(args.mode, load_provider(pa), load_provider(pb))
                 for pa, pb in zip(args.a, args.b)]
    partition = _sts_input_partition(args)
    if partition is None and not args.probe:
        raise InvalidInputError("nothing to evaluate: give --sts, --partition-dir or --probe")
    sts_report, probe_results = _evaluate_providers(providers, partition, args.probe,
                                                    cfg.probe_config())
    artifacts = _write_eval_outputs(out, sts_report, probe_results)
    if sts_report:
        print(sts_report.to_markdown())
    _write_manifest(out, "combine-eval", _config_snapshot(cfg), artifacts, started,
                    extra={"mode": args.mode, "providers_a": list(args.a),
                           "providers_b": list(args.b)})
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentsig",
        description="Compare NLI and definition-prediction supervision for sentence embeddings",
    )
    parser.add_argument("--version", action="version", version=f"sentsig {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", help="split an STS file by source or Dice overlap")
    p.add_argument("sts_files", nargs="+",
                   help="STS file(s); several inputs are pooled before partitioning")
    p.add_argument("--scheme", choices=("source", "dice"), required=True)
    p.add_argument("--k", type=int, default=5, help="number of Dice groups")
    _add_common(p)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("train", help="train the toy encoder with a supervision method")
    _add_common(p)
    p.add_argument("--method", choices=TRAIN_METHODS)
    p.add_argument("--pooling", choices=("cls", "mean", "max"))
    p.add_argument("--dim", type=int)
    p.add_argument("--seed", type=int, help="single seed (overrides --seeds)")
    p.add_argument("--seeds", help="seed list, e.g. '0 1 2'")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="write an embedding dump for a sentences file")
    p.add_argument("providers", nargs="+", help="checkpoint or dump path(s)")
    p.add_argument("--sentences", required=True, help="one sentence per line")
    p.add_argument("--combine", choices=("average", "concat"),
                   help="combination mode when two providers are given")
    _add_common(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="evaluate provider(s) on STS and/or probe tasks")
    p.add_argument("providers", nargs="+", help="checkpoint or dump path(s); several = seed mean")
    p.add_argument("--sts", help="STS file to evaluate on")
    p.add_argument("--partition-dir", help="directory produced by the partition command")
    p.add_argument("--probe", action="append", help="probe task file (repeatable)")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("combine-eval", help="evaluate a pairwise combination of providers")
    p.add_argument("--a", action="append", required=True, help="first provider (repeatable)")
    p.add_argument("--b", action="append", required=True, help="second provider (repeatable)")
    p.add_argument("--mode", choices=("average", "concat"), required=True)
    p.add_argument("--sts")
    p.add_argument("--partition-dir")
    p.add_argument("--probe", action="append")
    _add_common(p)
    p.set_defaults(func=cmd_combine_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SentsigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
