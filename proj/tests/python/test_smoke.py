import math

import pytest

import giftlab


def test_default_config_round_trips_core_keys():
    cfg = giftlab.default_config()
    for key in ("task", "objective", "n_rollouts", "learning_rate", "seed"):
        assert key in cfg
    assert cfg["task"] == "modsum"
    assert cfg["objective"] == "gift"


def test_group_normalize_is_standardized_and_scale_free():
    values = [1.0, 2.0, 4.0, 8.0]
    norm = giftlab.group_normalize(values)
    assert math.isclose(sum(norm), 0.0, abs_tol=1e-12)
    assert math.isclose(sum(x * x for x in norm) / len(norm), 1.0, rel_tol=1e-12)
    shifted = giftlab.group_normalize([5.0 * v - 3.0 for v in values])
    assert all(abs(a - b) < 1e-9 for a, b in zip(norm, shifted))
    assert giftlab.z_cancellation_check(values, shift=-3.0, scale=5.0)


def test_degenerate_group_maps_to_zeros():
    assert giftlab.group_normalize([2.5] * 6) == [0.0] * 6


def test_gift_loss_value_ignores_positive_affine_maps():
    implicit = [0.1, -0.4, 0.9, 0.2]
    explicit = [1.0, 0.0, 1.0, 0.0]
    base = giftlab.gift_loss_value(implicit, explicit)
    moved = giftlab.gift_loss_value([7.0 * u + 2.0 for u in implicit], explicit)
    assert math.isclose(base, moved, abs_tol=1e-12)


TINY = {
    "n_train": 8,
    "n_eval": 2,
    "embed_dim": 16,
    "window": 2,
    "max_response_len": 1,
    "n_rollouts": 4,
    "train_batch": 4,
    "mini_batch": 2,
    "eval_every": 5,
    "max_steps": 10,
    "seed": 3,
}


def test_train_returns_metrics_and_is_deterministic():
    first = giftlab.train(TINY)
    second = giftlab.train(TINY)
    assert [r["step"] for r in first["metrics"]] == [0, 5, 10]
    assert first["metrics"] == second["metrics"]
    assert first["final_train_pass1"] == first["metrics"][-1]["train_pass1"]
    assert all(math.isfinite(v) for row in first["metrics"] for v in row.values())


def test_train_rejects_unknown_keys():
    with pytest.raises(Exception, match="bogus_knob"):
        giftlab.train({"bogus_knob": 1})


def test_evaluate_reads_back_a_checkpoint(tmp_path):
    out = tmp_path / "run"
    giftlab.train(TINY, str(out))
    assert (out / "metrics.csv").exists()
    scores = giftlab.evaluate(str(out / "final.ckpt"), TINY)
    assert set(scores) == {"train_pass1", "eval_pass1"}
    assert 0.0 <= scores["train_pass1"] <= 1.0
    assert 0.0 <= scores["eval_pass1"] <= 1.0
