"""Pretrain on a small mixed-shape corpus, then fine-tune a classifier.

Takes about four minutes on one core.
Run: python demos/03_desk_pretrain_finetune.py [output-dir]
"""
import sys
import tempfile
from pathlib import Path

from adapt_ts import synthetic
from adapt_ts.batching import build_training_set
from adapt_ts.config import desk_finetune, desk_pretrain, dump_config
from adapt_ts.evaluation import export_embeddings
from adapt_ts.io import load_manifest
from adapt_ts.train import finetune_seeds, pretrain

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="adapt-demo-"))

# %% Four datasets: lengths 50-500, 1-4 channels, sine-mix vs sawtooth
manifest = load_manifest(synthetic.write_corpus(out / "corpus", seed=0))
for e in manifest.entries:
    print(e.dataset_id, e.split, e.path.name)

cfg = desk_pretrain()
print(dump_config(cfg))
kw = dict(seq_len=cfg.model.seq_len, channels=cfg.model.c_in, zscore_spectrum=cfg.data.zscore_spectrum)
train = build_training_set([manifest], split="train", **kw)
test = build_training_set([manifest], split="test", **kw)
print("train", train.time.shape, "test", test.time.shape)

# %% Masked reconstruction pretraining
res = pretrain(cfg, train, out_dir=out / "pretrain", echo=lambda r: r["kind"] == "epoch" and print(f"epoch {r['epoch']:2d} loss {r['loss']:.4f}"))
print(f"loss ratio last/first: {res.epoch_losses[-1] / res.epoch_losses[0]:.3f}")

# %% Fine-tune over five seeds
agg, runs = finetune_seeds(desk_finetune(), res.model, train, 2, test_store=test)
for m in ("accuracy", "f1"):
    print(m, agg.formatted(m))

# %% Embeddings for an external t-SNE / UMAP
export_embeddings(out / "pooled.csv", "pooled", aligned=test)
export_embeddings(out / "encoded.csv", "encoded", aligned=test, model=runs[0].model)
print("wrote", out / "pooled.csv", "and", out / "encoded.csv")
