import math

import pytest

import cycleground as cg


def test_iou_hand_example():
    assert cg.iou((0, 0, 2, 2), (1, 1, 3, 3)) == pytest.approx(1 / 7, abs=1e-12)
    with pytest.raises(cg.ValidationError):
        cg.iou((0, 0, 0, 1), (0, 0, 1, 1))


def test_bleu_brevity_penalty():
    scores = cg.bleu([["the", "cat"]], [[["the", "cat", "sat"]]], max_n=1)
    assert scores[0] == pytest.approx(math.exp(1 - 1.5), abs=1e-9)
    with pytest.raises(cg.UsageError):
        cg.bleu([], [], max_n=1)


def test_gradcheck_passes_and_catches_bug():
    assert cg.gradcheck()["passed"]
    assert not cg.gradcheck({"inject_tanh_bug": True})["passed"]


def test_defaults_round_trip():
    spec = cg.world_spec_defaults()
    assert spec["scene_regions"] == 8
    with pytest.raises(cg.ValidationError):
        cg.generate_dataset("/nonexistent-unused", {"scene_regions": 1})
    assert "lambda_decode" in cg.train_config_defaults()


def test_generate_train_evaluate(tmp_path):
    data = tmp_path / "data"
    sizes = cg.generate_dataset(str(data), {"train_size": 64, "val_size": 16, "test_size": 16})
    assert sizes == {"train": 64, "val": 16, "test": 16}
    config = {"max_epochs": 2, "pretrain_epochs": 1, "embed": 16, "hidden": 16, "seed": 3}
    run = cg.train(str(data), str(tmp_path / "run"), config)
    rows = cg.parse_log(run["log_csv"])
    assert [r["phase"] for r in rows] == ["warmup", "joint"]
    assert all(r["train_loss"] > 0 for r in rows)
    again = cg.train(str(data), str(tmp_path / "again"), config)
    assert again["log_csv"] == run["log_csv"]
    report = cg.evaluate(str(data), run["checkpoint"], split="test")
    assert isinstance(report, dict) and report
    with pytest.raises(cg.UsageError):
        cg.evaluate(str(data), run["checkpoint"], split="holdout")
