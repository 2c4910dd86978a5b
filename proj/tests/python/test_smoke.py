import math

import pytest

cp = pytest.importorskip("covert_prompt")


def test_detection_example():
    assert cp.detection.optimal_threshold(1.0, 2.0, 1.0, 1.0) == pytest.approx(1.5)
    assert cp.detection.min_total_error(1.0, 2.0, 1.0, 1.0) == pytest.approx(math.log(4 / 3) / (2 * math.log(2)))
    bound = cp.detection.max_covert_power(1.0, 2.0, 1.0, 0.05)
    assert cp.detection.min_total_error(1.0, 2.0, 1.0, bound) == pytest.approx(0.95, abs=1e-9)


def test_encrypt_example():
    key = cp.pcae.make_key([4, 2, 9, 1, 4], [2, 0, 4, 1, 3], 151936)
    x = [16787, 323, 3539, 1621, 25466]
    y = cp.pcae.encrypt(x, key)
    assert y == [3548, 16791, 25470, 325, 1622]
    assert cp.pcae.decrypt(y, key) == x
    assert cp.pcae.EncryptionKey.from_json(key.to_json()).perm == [2, 0, 4, 1, 3]


def test_round_trip_generated_key():
    key = cp.pcae.generate_key(50, 1000, seed=3)
    x = list(range(0, 1000, 20))
    assert cp.pcae.decrypt(cp.pcae.encrypt(x, key), key) == x


def test_compress_keeps_head_and_tail():
    ids = list(range(100))
    s = [float(i % 7) for i in range(99)]
    out = cp.pcae.compress(ids, 100, s, 0.3, head=5, tail=5)
    assert len(out) == cp.pcae.compressed_length(100, 0.3) == 30
    assert out[:5] == ids[:5] and out[-5:] == ids[-5:]


def test_errors_map_to_value_error():
    with pytest.raises(ValueError):
        cp.detection.min_total_error(1.0, 0.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        cp.pcae.compress([1, 2, 3], 10, [1.0], 0.5)


def test_short_training_run():
    out = cp.train("gppo", 3, ["gppo.total_steps=128", "gppo.rollout=64", "gppo.minibatch=32",
                               "gppo.hidden=16", "experiment.eval_states=20"])
    assert len(out["reward_curve"]) == 2
    assert 0.0 <= out["violation_rate"] <= 1.0
