import math
from pathlib import Path

import numpy as np
import pytest

import rview

FIXTURE = Path(__file__).resolve().parents[1] / "fixtures" / "pointmass_game.jsonl"
SENSOR = rview.SensorParams(55.0, 0.392, 0.8)


@pytest.fixture(scope="module")
def small():
    return rview.generate_dataset(SENSOR, n=4, seed=3, jobs=1)


def test_generate_is_deterministic(small):
    again = rview.generate_dataset(SENSOR, n=4, seed=3, jobs=2)
    assert len(small) == 4
    for a, b in zip(small.trajectories, again.trajectories):
        assert np.array_equal(a.path(), b.path())
    assert [t.scenario_id for t in small.trajectories] == [0, 1, 2, 3]
    assert small.mode == rview.DynamicsMode.unicycle
    assert small.sensor.r_obs == 55.0


def test_replay_and_states(small):
    t = small[0]
    assert rview.replay_error(t) <= 1e-9
    states = t.states()
    assert states.shape == (len(t), 5)
    assert np.allclose(states[:, :2], t.path())


def test_roundtrip(small, tmp_path):
    out = tmp_path / "d.jsonl"
    rview.write_dataset(small, out)
    back = rview.read_dataset(out)
    assert len(back) == len(small)
    assert np.array_equal(back[-1].path(), small[-1].path())


def test_fixture_parses():
    d = rview.read_dataset(FIXTURE)
    assert d.mode == rview.DynamicsMode.pointmass
    assert d.sensor is None
    assert len(d) == 3
    for t in d.trajectories:
        assert rview.replay_error(t, rview.DynamicsMode.pointmass) <= 1e-9


def test_bad_file_raises(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"schema": 999, "mode": "unicycle"}\n')
    with pytest.raises(rview.VersionError):
        rview.read_dataset(bad)
    with pytest.raises(rview.RviewError):
        rview.read_dataset(tmp_path / "missing.jsonl")


def test_metrics():
    p = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    q = p + [0.0, 1.0]
    assert rview.discrete_frechet(p, q) == pytest.approx(1.0)
    assert rview.normalized_frechet(p, q, (0, 0), (100, 0)) == pytest.approx(1.0)
    s = rview.summarize([0.0, 10.0])
    assert s["mean"] == 5.0 and s["std"] == 5.0
    with pytest.raises(rview.PreconditionError):
        rview.discrete_frechet(np.zeros((0, 2)), q)


def test_likelihood_prefers_truth(small):
    truth = rview.dataset_loglik(small, SENSOR, jobs=1)
    off = rview.dataset_loglik(small, rview.SensorParams(20.0, 0.392, 0.8), jobs=1)
    assert math.isfinite(truth) and truth > off


def test_optimizers_with_python_objectives():
    bo = rview.bo_maximize(lambda p: -(p - 0.63) ** 2, iterations=30)
    assert abs(bo["best_params"][0] - 0.63) <= 0.02
    cem = rview.cem_maximize(lambda x: -((x[0] - 3) ** 2) - (x[1] + 1) ** 2, [(-5, 5), (-5, 5)], seed=1)
    assert np.allclose(cem["best_params"], [3, -1], atol=0.05)


def test_bc_train_and_rollout(small, tmp_path):
    cfg = rview.DiffusionConfig()
    cfg.hidden, cfg.hidden_layers, cfg.epochs, cfg.batch = 32, 2, 2, 64
    cfg.sensor_offset_copies = 0
    model = rview.train_bc(small, cfg, seed=1)
    assert len(model.loss_trace) == 2
    path = tmp_path / "m.pdif"
    model.save(path)
    loaded = rview.DiffusionModel.load(path)
    chunk = loaded.sample_chunk([0.0] * rview.encoding_dim(cfg.K), seed=4)
    assert chunk.shape == (cfg.horizon, 3)
    assert np.array_equal(chunk, model.sample_chunk([0.0] * rview.encoding_dim(cfg.K), seed=4))
    t = rview.bc_rollout(loaded, small[0], SENSOR, seed=2)
    again = rview.bc_rollout(loaded, small[0], SENSOR, seed=2)
    assert np.array_equal(t.path(), again.path())
    assert rview.replay_error(t, rview.DynamicsMode.pointmass) <= 1e-9
