import math

import pytest

import hacrec

SMALL = {
    "synth": {"n_users": 20, "n_items": 30, "k": 3, "n_records": 300, "seed": 1},
    "response_dim": 8,
    "response_max_history": 6,
    "fit": {"epochs": 1},
    "policy": {"dim": 8, "max_history": 6, "layers": 1, "heads": 2, "dropout": 0.0, "user_hidden": [8]},
    "train": {"episodes": 8, "batch_size": 8, "buffer_threshold": 16, "critic_hidden": [16, 8]},
    "iterations": 20,
    "eval_every": 10,
    "eval_sessions": 10,
}


@pytest.fixture(scope="module")
def worlds():
    return hacrec.prepare_worlds(SMALL)


def test_reward_and_temper():
    assert hacrec.slate_reward([1, 1, 1, 1, 0, 0, 0, 0, 0, 0]) == 0.28
    temper, left = hacrec.temper_update(10.0, [1, 0, 0, 0, 0, 0, 0, 0, 0, 0])
    assert math.isclose(temper, 10.0 - (1 + 2 * 0.9))
    assert not left


def test_inverse_pool_mean():
    assert hacrec.inverse_pool([[1.0, 0.0], [0.0, 1.0]], [0, 1], 2) == [[0.5, 0.5]]


def test_config_defaults_and_rejection():
    cfg = hacrec.default_config()
    assert cfg["train"]["gamma"] == 0.9
    assert hacrec.normalize_config({"iterations": 3})["iterations"] == 3
    with pytest.raises(ValueError):
        hacrec.normalize_config({"not_a_key": 1})


def test_synthetic_preprocessing():
    log = hacrec.generate_synthetic(n_users=10, n_items=20, k=4, n_records=200, seed=3)
    assert len(log) == 200 and log.list_size == 4
    train, test = hacrec.temporal_split(log, 0.8)
    assert len(train) == 160 and len(test) == 40
    assert max(train.timestamps()) <= min(test.timestamps())
    filtered = hacrec.kcore_filter(log, 5)
    assert len(filtered) <= len(log)
    assert hacrec.binarize_feedback(4.0, "rating_gt_3") == 1
    assert hacrec.binarize_feedback(0.8, "watch_ratio_gt_0.8") == 0


def test_environment_rollout(worlds):
    env = hacrec.Environment(worlds, seed=2)
    obs = env.reset(4)
    agent = hacrec.Agent(SMALL, worlds.log)
    slates, hyper = agent.act(obs)
    assert len(slates) == 4 and all(len(s) == env.list_size for s in slates)
    assert all(len(set(s)) == len(s) for s in slates)
    results = env.step(slates)
    assert len(results) == 4
    for r in results:
        assert -0.2 - 1e-12 <= r["reward"] <= 1.0


def test_training_run(worlds):
    result = hacrec.train_and_evaluate(SMALL, worlds)
    assert [m["iteration"] for m in result["metrics"]] == [0, 10, 20]
    assert result["updates"] > 0
    assert math.isfinite(result["final"]["mean_total_reward"])
    again = hacrec.train_and_evaluate(SMALL, worlds)
    assert again["metrics"] == result["metrics"]


def test_agent_checkpoint(worlds, tmp_path):
    agent = hacrec.Agent(SMALL, worlds.log)
    before = agent.evaluate(worlds, sessions=5, seed=1)
    agent.save(tmp_path / "ckpt")
    other = hacrec.Agent(dict(SMALL, seed=9), worlds.log)
    with pytest.raises(Exception):
        other.load(tmp_path / "ckpt")
    same = hacrec.Agent(SMALL, worlds.log)
    same.load(tmp_path / "ckpt")
    assert same.evaluate(worlds, sessions=5, seed=1) == before
