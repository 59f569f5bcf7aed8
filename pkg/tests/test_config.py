import pytest

from adapt_ts.config import Config, apply_overrides, desk_pretrain, dump_config, finetune_preset, load_config, full_pretrain
from adapt_ts.errors import ValidationError


def test_full_preset_values():
    cfg = full_pretrain()
    assert (cfg.model.seq_len, cfg.model.c_in, cfg.model.d_model, cfg.model.n_layers) == (256, 32, 128, 6)
    assert (cfg.train.batch_size, cfg.train.epochs, cfg.train.warmup_epochs, cfg.train.base_lr) == (1024, 1000, 40, 5e-4)
    assert (cfg.mask.p, cfg.mask.l_max, cfg.mask.p_m, cfg.mask.p_r) == (0.2, 10, 0.8, 0.2)
    assert cfg.train.clip_max_norm == 1.0


def test_finetune_presets():
    cfg = finetune_preset("epilepsy")
    assert cfg.train.mode == "finetune_lc" and cfg.train.base_lr == 1e-3 and cfg.train.epochs == 15
    assert finetune_preset("emg").train.epochs == 5
    with pytest.raises(ValidationError):
        finetune_preset("imagenet")


def test_dump_and_reload(tmp_path):
    cfg = desk_pretrain().replace(train={"seed": 11, "betas": (0.8, 0.95)}, model={"n_classes": 3})
    path = tmp_path / "run.ini"
    path.write_text(dump_config(cfg))
    assert load_config(path, preset="full") == cfg


def test_precedence(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[train]\nseed = 3\nepochs = 7\n")
    cfg = load_config(path, "desk", {"train.epochs": "9"}, env={"ADAPT_SEED": "42"})
    assert cfg.train.seed == 42 and cfg.train.epochs == 9
    assert load_config(path, "desk", env={}).train.seed == 3


def test_bad_values():
    with pytest.raises(ValidationError):
        apply_overrides(Config(), {"train.epochs": "many"})
    with pytest.raises(ValidationError):
        apply_overrides(Config(), {"train.nope": "1"})
    with pytest.raises(ValidationError):
        apply_overrides(Config(), {"mask.p_m": "0.5"})
    with pytest.raises(ValidationError):
        Config().replace(train={"warmup_epochs": 2000})
