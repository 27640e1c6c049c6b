import math

import pytest

from s2sdespeckle.trainlog import TrainLog


def test_step_indices_must_increase():
    log = TrainLog()
    log.append(step=1, phase="critic", critic_loss=0.5)
    log.append(step=2, phase="generator", total=1.0)
    with pytest.raises(ValueError, match="increase"):
        log.append(step=2, phase="critic", critic_loss=0.1)


def test_non_finite_values_rejected():
    log = TrainLog()
    with pytest.raises(ValueError, match="non-finite"):
        log.append(step=1, phase="critic", critic_loss=math.nan)
    with pytest.raises(ValueError, match="non-finite"):
        log.append(step=1, phase="critic", critic_loss=math.inf)


def test_missing_step_rejected():
    with pytest.raises(ValueError, match="step"):
        TrainLog().append(phase="critic")


def test_jsonl_round_trip(tmp_path):
    log = TrainLog()
    log.append(step=1, epoch=1, phase="critic", critic_loss=0.25, lr_critic=5e-5)
    log.append(step=2, epoch=1, phase="generator", wgan=-0.1, cycle=0.2, tv=0.01, total=0.11)
    path = tmp_path / "log.jsonl"
    log.to_jsonl(path)
    back = TrainLog.from_jsonl(path)
    assert back.records == log.records
    assert back.last_step == 2
    assert len(back.phase("critic")) == 1
