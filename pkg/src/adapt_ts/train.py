"""Masked-reconstruction pretraining and classification fine-tuning."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .batching import AlignedStore, build_training_set, iterate_epoch, prefetch
from .checkpoint import load_checkpoint, save_checkpoint
from .config import Config
from .errors import ValidationError
from .evaluation import MetricsReport, aggregate_seeds, compute_metrics
from .io import DatasetManifest
from .model import CLASSIFIER_PARAMS, AdaptModel
from .optim import AdamWState, adamw_step, clip_gradients, lr_at

_INIT = 0x494E
_DROPOUT = 0x4450
_HEAD = 0x4844


@dataclass
class PretrainResult:
    model: AdaptModel
    epoch_losses: list[float]
    best_loss: float
    best_epoch: int
    checkpoints: dict[str, Path] = field(default_factory=dict)


@dataclass
class FinetuneResult:
    model: AdaptModel
    report: MetricsReport
    epoch_losses: list[float]
    best_epoch: int
    checkpoint: Path | None = None


def _batches(cfg: Config, store: AlignedStore, epoch: int, pretraining: bool):
    noise_on = cfg.noise.enabled_pretrain if pretraining else cfg.noise.enabled_finetune
    it = iterate_epoch(
        store,
        cfg.train.seed,
        epoch,
        cfg.train.batch_size,
        noise=cfg.noise,
        mask=cfg.mask if pretraining else None,
        noise_enabled=noise_on,
        noisy_targets=cfg.train.noisy_targets,
        balance=cfg.data.balance_datasets,
        threads=cfg.data.threads,
        dtype=np.float32,
    )
    return prefetch(it) if cfg.data.threads > 0 else it


def _dropout_rng(cfg: Config, epoch: int, step: int):
    if cfg.model.dropout == 0:
        return None
    return np.random.default_rng([cfg.train.seed, epoch, step, _DROPOUT])


class _JsonLog:
    """Append-only line-delimited training records."""

    def __init__(self, path: Path | None, echo: Callable[[dict], None] | None = None):
        self.fh = open(path, "a", encoding="utf-8") if path else None
        self.echo = echo

    def write(self, record: dict) -> None:
        if self.fh:
            self.fh.write(json.dumps(record, sort_keys=True) + "\n")
            self.fh.flush()
        if self.echo:
            self.echo(record)

    def close(self) -> None:
        if self.fh:
            self.fh.close()


def _as_store(cfg: Config, data, split: str = "train") -> AlignedStore:
    if isinstance(data, AlignedStore):
        return data
    if isinstance(data, DatasetManifest):
        data = [data]
    return build_training_set(
        data, cfg.model.seq_len, cfg.model.c_in, split=split, method=cfg.data.method, zscore_spectrum=cfg.data.zscore_spectrum
    )


def pretrain(
    cfg: Config,
    data: AlignedStore | Sequence[DatasetManifest] | DatasetManifest,
    out_dir: str | Path | None = None,
    resume: str | Path | None = None,
    echo: Callable[[dict], None] | None = None,
    stop_epoch: int | None = None,
) -> PretrainResult:
    """Minimize the masked reconstruction loss over mixed batches.

    With ``out_dir`` set, writes ``last.adck`` every epoch, ``best.adck`` on
    each new lowest epoch-mean loss, and ``train_log.jsonl``.
    ``resume`` continues from a ``last.adck`` written by an identical config.
    ``stop_epoch`` ends this call early while keeping the schedule sized for
    the configured epoch count, so the run can be resumed later.
    """
    store = _as_store(cfg, data)
    tc = cfg.train
    steps_per_epoch = math.ceil(len(store) / tc.batch_size)
    total_steps = max(tc.epochs * steps_per_epoch, 1)
    warmup_steps = tc.warmup_epochs * steps_per_epoch

    if resume is not None:
        ck = load_checkpoint(resume)
        if ck.model.config != cfg.model:
            raise ValidationError("resume checkpoint was written with a different model config")
        model, opt = ck.model, ck.optim or AdamWState()
        start_epoch = int(ck.state.get("epoch", -1)) + 1
        step = int(ck.state.get("step", 0))
        losses = list(ck.state.get("epoch_losses", []))
        best_loss = float(ck.state.get("best_loss", math.inf))
        best_epoch = int(ck.state.get("best_epoch", -1))
    else:
        model = AdaptModel(cfg.model, seed=int(np.random.SeedSequence([tc.seed, _INIT]).generate_state(1)[0]))
        opt = AdamWState()
        start_epoch, step, losses, best_loss, best_epoch = 0, 0, [], math.inf, -1

    out = Path(out_dir) if out_dir is not None else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    paths = {"last": out / "last.adck", "best": out / "best.adck"} if out else {}
    records = _JsonLog(out / "train_log.jsonl" if out else None, echo)
    try:
        end = tc.epochs if stop_epoch is None else min(stop_epoch, tc.epochs)
        for epoch in range(start_epoch, end):
            total, count = 0.0, 0
            for batch in _batches(cfg, store, epoch, pretraining=True):
                lr = lr_at(step, total_steps, warmup_steps, tc.base_lr)
                loss, grads = model.recon_loss_and_grads(
                    batch.input_time,
                    batch.input_freq,
                    batch.target_time,
                    batch.target_freq,
                    batch.mask_time,
                    batch.mask_freq,
                    shared_n=tc.shared_n,
                    rng=_dropout_rng(cfg, epoch, step),
                )
                grads, norm = clip_gradients(grads, tc.clip_max_norm)
                adamw_step(model.params, grads, opt, lr, tc.betas, tc.weight_decay, tc.eps)
                records.write({"kind": "step", "epoch": epoch, "step": step, "lr": lr, "loss": loss, "grad_norm": norm})
                total += loss * len(batch)
                count += len(batch)
                step += 1
            mean_loss = total / count
            losses.append(mean_loss)
            records.write({"kind": "epoch", "epoch": epoch, "step": step, "lr": lr, "loss": mean_loss})
            improved = mean_loss < best_loss
            if improved:
                best_loss, best_epoch = mean_loss, epoch
            if out:
                state = {
                    "epoch": epoch,
                    "step": step,
                    "epoch_losses": losses,
                    "best_loss": best_loss,
                    "best_epoch": best_epoch,
                    "data": cfg.to_dict()["data"],
                }
                save_checkpoint(paths["last"], model, state, opt)
                if improved:
                    save_checkpoint(paths["best"], model, state)
    finally:
        records.close()
    return PretrainResult(model, losses, best_loss, best_epoch, paths)


def evaluate(model: AdaptModel, store: AlignedStore, batch_size: int = 256) -> MetricsReport:
    if not store.has_labels:
        raise ValidationError("evaluation needs labelled samples")
    logits = model.predict(store.time, store.freq, batch_size)
    return compute_metrics(np.argmax(logits, axis=1), store.labels, model.config.n_classes)


def _prepare_classifier(model: AdaptModel, n_classes: int, seed: int) -> AdaptModel:
    have = model.config.n_classes
    if have is None:
        return model.with_classifier(n_classes, seed=int(np.random.SeedSequence([seed, _HEAD]).generate_state(1)[0]))
    if have != n_classes:
        raise ValidationError(f"checkpoint classifier has {have} classes but the dataset declares {n_classes}")
    return model.copy()


def finetune(
    cfg: Config,
    pretrained: AdaptModel | str | Path,
    train_store: AlignedStore,
    n_classes: int,
    val_store: AlignedStore | None = None,
    test_store: AlignedStore | None = None,
    out_path: str | Path | None = None,
    echo: Callable[[dict], None] | None = None,
) -> FinetuneResult:
    """Cross-entropy training of a classifier on top of a pretrained encoder.

    ``finetune_lc`` updates only the classifier head. The model kept is the
    one with the best validation macro-F1 when ``val_store`` is given, else
    the last one. The report is computed on ``test_store`` (or the training
    store when absent).
    """
    tc = cfg.train
    if tc.mode not in ("finetune", "finetune_lc"):
        raise ValidationError(f"finetune needs mode finetune or finetune_lc, got {tc.mode!r}")
    if isinstance(pretrained, (str, Path)):
        pretrained = load_checkpoint(pretrained).model
    if not train_store.has_labels:
        raise ValidationError("fine-tuning needs labels on every training sample")
    if train_store.labels.max() >= n_classes:
        raise ValidationError(f"training labels exceed the declared class count {n_classes}")
    model = _prepare_classifier(pretrained, n_classes, tc.seed)
    if model.config.dropout != cfg.model.dropout:
        model = AdaptModel(replace(model.config, dropout=cfg.model.dropout), model.params, dtype=model.dtype)
    trainable = set(CLASSIFIER_PARAMS) if tc.mode == "finetune_lc" else {
        k for k in model.params if not k.startswith("head.")
    }
    steps_per_epoch = math.ceil(len(train_store) / tc.batch_size)
    total_steps = max(tc.epochs * steps_per_epoch, 1)
    warmup_steps = tc.warmup_epochs * steps_per_epoch
    opt = AdamWState()
    losses: list[float] = []
    best_f1, best_epoch, best_params = -1.0, -1, None
    step = 0
    for epoch in range(tc.epochs):
        total, count = 0.0, 0
        for batch in _batches(cfg, train_store, epoch, pretraining=False):
            lr = lr_at(step, total_steps, warmup_steps, tc.base_lr)
            loss, grads = model.classify_loss_and_grads(
                batch.input_time, batch.input_freq, batch.labels, trainable, rng=_dropout_rng(cfg, epoch, step)
            )
            grads, _ = clip_gradients(grads, tc.clip_max_norm)
            adamw_step(model.params, grads, opt, lr, tc.betas, tc.weight_decay, tc.eps)
            total += loss * len(batch)
            count += len(batch)
            step += 1
        losses.append(total / count)
        record = {"kind": "epoch", "epoch": epoch, "step": step, "lr": lr, "loss": losses[-1]}
        if val_store is not None:
            f1 = evaluate(model, val_store).f1
            record["val_f1"] = f1
            if f1 > best_f1:
                best_f1, best_epoch = f1, epoch
                best_params = {k: v.copy() for k, v in model.params.items()}
        if echo:
            echo(record)
    if best_params is not None:
        model = AdaptModel(model.config, best_params, dtype=model.dtype)
    else:
        best_epoch = tc.epochs - 1
    report = evaluate(model, test_store if test_store is not None else train_store)
    if out_path is not None:
        save_checkpoint(out_path, model, {"best_epoch": best_epoch, "mode": tc.mode, "data": cfg.to_dict()["data"]})
    return FinetuneResult(model, report, losses, best_epoch, Path(out_path) if out_path else None)


def finetune_seeds(
    cfg: Config,
    pretrained: AdaptModel,
    train_store: AlignedStore,
    n_classes: int,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    val_store: AlignedStore | None = None,
    test_store: AlignedStore | None = None,
) -> tuple[MetricsReport, list[FinetuneResult]]:
    """Repeat fine-tuning once per seed; returns the mean/sd report and every run."""
    runs = [
        finetune(cfg.replace(train={"seed": s}), pretrained, train_store, n_classes, val_store, test_store)
        for s in seeds
    ]
    return aggregate_seeds([r.report for r in runs]), runs
