"""Command line entry point: ``adapt-ts <verb> [options]``.

Exit codes: 0 success, 1 validation/usage error, 2 I/O or format error.
Every training/evaluation verb prints the fully resolved configuration
before running.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence


from .batching import AlignedStore, align_entries, build_training_set
from .checkpoint import load_checkpoint, save_checkpoint
from .config import FINETUNE_PRESETS, PRESETS, Config, dump_config, finetune_preset, load_config
from .errors import FormatError, ValidationError
from .evaluation import export_embeddings
from .io import ManifestEntry, load_dataset, load_entries, load_manifest, read_csv_sample, write_samples
from .pooling import align_sample, kernel_table, write_aligned
from .train import evaluate, finetune_seeds, pretrain

# sit between the preset and any --config file or flag
FINETUNE_DEFAULTS = {"train.mode": "finetune", "train.warmup_epochs": "0"}

DEFAULTS_NOTE = "Defaults the source method leaves open are marked (gap); README 'Design decisions' explains each."


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(f"{self.prog}: {message}")


def _config_flags(p: argparse.ArgumentParser, preset: str = "desk") -> None:
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="INI config file with [model]/[train]/[noise]/[mask]/[data] sections")
    g.add_argument("--preset", default=preset, choices=sorted(PRESETS), help=f"base settings (default: {preset})")
    g.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override any config key")
    g.add_argument("--seed", type=int, help="run seed (env ADAPT_SEED wins over config, this flag wins over both)")
    g.add_argument("--batch-size", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", type=float, help="base learning rate")
    g.add_argument("--mask-ratio", type=float, help="target masked fraction per sequence (gap: default 0.15)")
    g.add_argument("--span-p", type=float, help="geometric span-length parameter p (default 0.2)")
    g.add_argument("--l-max", type=int, help="maximum span length (default 10)")
    g.add_argument("--p-m", type=float, help="probability a span is zeroed; random-replaced otherwise (default 0.8)")
    g.add_argument("--noise-sigma", type=float, help="Gaussian noise sd (gap: default 0.1)")
    g.add_argument("--balance-datasets", action="store_true", help="pick datasets uniformly instead of samples (gap: off)")
    g.add_argument("--threads", type=int, help="augmentation workers; >0 also enables a 2-batch prefetch queue")
    g.add_argument("--shared-n", action="store_true", help="one masked count for both loss terms (gap: per-domain)")


def _resolve(args, defaults: dict[str, str] | None = None) -> Config:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value
    flag_map = {
        "batch_size": "train.batch_size",
        "epochs": "train.epochs",
        "lr": "train.base_lr",
        "mask_ratio": "mask.mask_ratio",
        "span_p": "mask.p",
        "l_max": "mask.l_max",
        "noise_sigma": "noise.sigma",
        "threads": "data.threads",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = str(value)
    if getattr(args, "p_m", None) is not None:
        overrides["mask.p_m"] = str(args.p_m)
        overrides["mask.p_r"] = str(1.0 - args.p_m)
    if getattr(args, "balance_datasets", False):
        overrides["data.balance_datasets"] = "true"
    if getattr(args, "shared_n", False):
        overrides["train.shared_n"] = "true"
    cfg = load_config(args.config, args.preset, overrides, defaults=defaults)
    if args.seed is not None:
        cfg = cfg.replace(train={"seed": args.seed})
    return cfg


def _echo_config(cfg: Config, out) -> None:
    print("# resolved configuration", file=out)
    print(dump_config(cfg), file=out)


def _n_classes(entries: Sequence[ManifestEntry]) -> int:
    declared = {e.n_classes for e in entries}
    if len(declared) != 1 or None in declared:
        raise ValidationError(f"entries must declare one common class count, got {sorted(map(str, declared))}")
    return declared.pop()


def _store(cfg: Config, manifest, split: str):
    return build_training_set(
        [manifest], cfg.model.seq_len, cfg.model.c_in, split=split, method=cfg.data.method, zscore_spectrum=cfg.data.zscore_spectrum
    )


# --------------------------------------------------------------------------- verbs


def cmd_convert(args, out) -> None:
    samples = [read_csv_sample(p) for p in args.inputs]
    write_samples(args.out, samples)
    print(f"wrote {len(samples)} samples to {args.out}", file=out)


def cmd_inspect_pool(args, out) -> None:
    if args.n < 1 or args.m < 1:
        raise ValidationError("--n and --m must be >= 1")
    print("i,start,end,size", file=out)
    for row in kernel_table(args.n, args.m):
        print(",".join(map(str, row)), file=out)


def cmd_align(args, out) -> None:
    entry = ManifestEntry(args.dataset_id, "train", Path(args.inputs), args.n_classes)
    raw = load_dataset(args.inputs, entry)
    aligned = [align_sample(s, args.seq_len, args.channels, args.zscore_spectrum) for s in raw]
    write_aligned(args.out, aligned)
    print(f"aligned {len(aligned)} samples to ({args.seq_len}, {args.channels}) -> {args.out}", file=out)


def cmd_pretrain(args, out) -> None:
    cfg = _resolve(args)
    _echo_config(cfg, out)
    manifest = load_manifest(args.manifest)

    def echo(rec):
        if rec["kind"] == "epoch":
            print(f"epoch {rec['epoch']:4d}  step {rec['step']:6d}  lr {rec['lr']:.3e}  loss {rec['loss']:.6f}", file=out)

    res = pretrain(cfg, [manifest], out_dir=args.out, resume=args.resume, echo=echo)
    print(f"final loss: {res.epoch_losses[-1]!r}" if res.epoch_losses else "final loss: n/a", file=out)
    print(f"best loss: {res.best_loss!r} (epoch {res.best_epoch})", file=out)


def cmd_finetune(args, out) -> None:
    cfg = _resolve(args, FINETUNE_DEFAULTS)
    if args.task:
        cfg = finetune_preset(args.task, cfg)
    if args.lc:
        cfg = cfg.replace(train={"mode": "finetune_lc"})
    manifest = load_manifest(args.manifest)
    ck = load_checkpoint(args.checkpoint)
    cfg = cfg.replace(
        model={k: v for k, v in ck.model.config.to_dict().items() if k not in ("n_classes", "dropout")},
        data={k: v for k, v in ck.state.get("data", {}).items() if k in ("method", "zscore_spectrum")},
    )
    _echo_config(cfg, out)
    train_entries = manifest.split("train")
    if not train_entries:
        raise ValidationError("--manifest has no train entries")
    n_classes = _n_classes(train_entries)
    train = _store(cfg, manifest, "train")
    val = _store(cfg, manifest, "val") if manifest.split("val") else None
    test = _store(cfg, manifest, "test") if manifest.split("test") else None
    seeds = [int(s) for s in args.seeds.split(",")]
    agg, runs = finetune_seeds(cfg, ck.model, train, n_classes, seeds, val, test)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for s, r in zip(seeds, runs):
        state = {"seed": s, "best_epoch": r.best_epoch, "data": cfg.to_dict()["data"]}
        save_checkpoint(out_dir / f"finetuned_seed{s}.adck", r.model, state)
        print(f"seed {s}: accuracy {r.report.accuracy:.4f}  macro-F1 {r.report.f1:.4f}", file=out)
    report = agg.to_dict()
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    for m in ("accuracy", "precision", "recall", "f1"):
        print(f"{m:9s} {agg.formatted(m)}", file=out)


def cmd_eval(args, out) -> None:
    ck = load_checkpoint(args.checkpoint)
    data = {k: v for k, v in ck.state.get("data", {}).items() if k in ("method", "zscore_spectrum")}
    cfg = Config(model=ck.model.config).replace(data=data)
    _echo_config(cfg, out)
    if ck.model.config.n_classes is None:
        raise ValidationError("--checkpoint has no classifier head; fine-tune it first")
    manifest = load_manifest(args.manifest)
    entries = manifest.split(args.split)
    if not entries:
        raise ValidationError(f"--manifest has no {args.split!r} entries")
    declared = _n_classes(entries)
    if declared != ck.model.config.n_classes:
        raise ValidationError(f"checkpoint has {ck.model.config.n_classes} classes, manifest declares {declared}")
    report = evaluate(ck.model, _store(cfg, manifest, args.split))
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    for m in ("accuracy", "precision", "recall", "f1"):
        print(f"{m:9s} {report.formatted(m)}", file=out)


def cmd_export(args, out) -> None:
    manifest = load_manifest(args.manifest)
    entries = manifest.split(args.split)
    if not entries:
        raise ValidationError(f"--manifest has no {args.split!r} entries")
    model = None
    seq_len, channels = args.seq_len, args.channels
    if args.stage == "encoded":
        if not args.checkpoint:
            raise ValidationError("--checkpoint is required for --stage encoded")
        model = load_checkpoint(args.checkpoint).model
        seq_len, channels = model.config.seq_len, model.config.c_in
    if args.stage == "raw":
        n = export_embeddings(args.out, "raw", raw=load_entries(entries, scope=manifest.scope))
    else:
        aligned = AlignedStore.from_samples(align_entries(entries, seq_len, channels, "pool", args.zscore_spectrum, manifest.scope))
        n = export_embeddings(args.out, args.stage, aligned=aligned, model=model)
    print(f"wrote {n} rows to {args.out}", file=out)


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adapt-ts", description="Adaptive-pooling time-series pretraining toolkit. " + DEFAULTS_NOTE)
    sub = parser.add_subparsers(dest="verb", parser_class=_Parser, metavar="VERB")
    sub.required = True

    p = sub.add_parser("convert", help="CSV series -> binary sample file", description="One CSV per sample, one column per channel, optional '# label: k' comment.")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, help="input CSV files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("inspect-pool", help="print the pooling kernel table", description="Rows (i, start, end, size) for resizing N inputs to M outputs.")
    p.add_argument("--n", type=int, required=True, help="input length")
    p.add_argument("--m", type=int, required=True, help="output length")
    p.set_defaults(func=cmd_inspect_pool)

    p = sub.add_parser("align", help="normalize + pool a sample file to fixed shape", description=DEFAULTS_NOTE)
    p.add_argument("--in", dest="inputs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seq-len", type=int, default=256)
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--dataset-id", default="")
    p.add_argument("--n-classes", type=int, default=None)
    p.add_argument("--zscore-spectrum", action="store_true", help="z-score each spectrum channel before pooling (gap: off)")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("pretrain", help="masked reconstruction pretraining", description=DEFAULTS_NOTE)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="directory for best/last checkpoints and train_log.jsonl")
    p.add_argument("--resume", help="continue from a last.adck checkpoint")
    _config_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="classification fine-tuning over one or more seeds", description=DEFAULTS_NOTE)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True, help="pretrained checkpoint")
    p.add_argument("--out", required=True, help="directory for per-seed checkpoints and report.json")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--lc", action="store_true", help="train only the final linear layer")
    p.add_argument("--task", choices=sorted(FINETUNE_PRESETS), help="batch size / lr / epochs preset")
    _config_flags(p, preset="desk-finetune")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="metrics of a fine-tuned checkpoint", description="Macro precision/recall/F1 (gap: macro averaging).")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-embeddings", help="CSV of raw, pooled or encoded representations", description="One row per sample; last column is the label.")
    p.add_argument("--manifest", required=True)
    p.add_argument("--stage", required=True, choices=["raw", "pooled", "encoded"])
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--split", default="train", choices=["train", "val", "test"])
    p.add_argument("--seq-len", type=int, default=256)
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--zscore-spectrum", action="store_true")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        args.func(args, out)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
