from pathlib import Path

import pytest
import torch

from diagtune import training as tr
from diagtune.model import TinyCausalLM, masked_next_token_loss


def test_fifty_step_finetune_reduces_loss(corpora, tmp_path):
    _, train_path, *_ = corpora
    spec = tr.toy_profile(finetune_path=str(train_path),
                          epochs_finetune=50, max_steps=50,
                          output_dir=str(tmp_path / "ckpt"), seed=1)
    result = tr.train(spec)
    assert len(result.finetune_losses) == 50
    assert result.finetune_losses[-1] < result.finetune_losses[0]
    assert Path(result.checkpoint_path).exists()


def test_two_stage_training_order(corpora, tmp_path):
    pretrain_path, train_path, *_ = corpora
    spec = tr.toy_profile(pretrain_path=str(pretrain_path),
                          finetune_path=str(train_path),
                          max_steps=10, output_dir=str(tmp_path / "ckpt"))
    result = tr.train(spec)
    assert len(result.pretrain_losses) == 10
    assert len(result.finetune_losses) == 10
    model = tr.load_checkpoint(result.checkpoint_path)
    assert isinstance(model, TinyCausalLM)


def test_dry_run_validates_without_checkpoint(corpora, tmp_path):
    _, train_path, *_ = corpora
    spec = tr.toy_profile(finetune_path=str(train_path),
                          output_dir=str(tmp_path / "nothing"))
    report = tr.dry_run(spec)
    assert report["finetune"]["errors"] == []
    assert report["finetune"]["prepared"] > 0
    assert report["finetune"]["loss_tokens"] < report["finetune"]["total_tokens"]
    assert not (tmp_path / "nothing").exists()


def test_spec_without_corpora_rejected():
    with pytest.raises(ValueError):
        tr.dry_run(tr.TrainSpec())


def test_paper_profile_defaults():
    spec = tr.TrainSpec()
    assert spec.learning_rate == 2e-5
    assert spec.batch_size == 8
    assert spec.max_len_pretrain == 256
    assert spec.max_len_finetune == 512


def test_training_is_seed_deterministic(corpora, tmp_path):
    _, train_path, *_ = corpora
    def run(tag):
        spec = tr.toy_profile(finetune_path=str(train_path), max_steps=5,
                              output_dir=str(tmp_path / tag), seed=7)
        return tr.train(spec).finetune_losses
    assert run("a") == run("b")


def test_masked_loss_ignores_masked_positions():
    torch.manual_seed(0)
    model = TinyCausalLM(embed_dim=8, hidden_dim=8)
    ids = torch.randint(0, 255, (2, 12))
    full = torch.ones_like(ids, dtype=torch.bool)
    none_but_last = torch.zeros_like(ids, dtype=torch.bool)
    none_but_last[:, -1] = True
    a = masked_next_token_loss(model, ids, full).detach()
    b = masked_next_token_loss(model, ids, none_but_last).detach()
    assert a.shape == () and b.shape == ()
    assert float(a) != float(b)
