import dataclasses
import json
import math

import numpy as np
import pytest

from ddlab import nn, sweep
from ddlab.datagen import DataSpec, Dataset, generate_dataset
from ddlab.trainer import RunRecord, TrainConfig, evaluate, train

SMALL = DataSpec(d=3, n=6, n_train=37, n_test=23, snr=2.0, seed=4)


@pytest.fixture(scope="module")
def small():
    return generate_dataset(SMALL)


def test_compiled_matches_numpy_reference(small):
    cfg = TrainConfig(lr=0.01, epochs=4, batch_size=5, shuffle_seed=9)
    for arch in (nn.ae_arch(6, 5, 2), nn.ArchSpec(6, (4, 3), 2, (3,), "identity")):
        a = train(small, arch, cfg, init_seed=2, backend="compiled")
        b = train(small, arch, cfg, init_seed=2, backend="numpy")
        assert a.steps == b.steps == 4 * 8
        assert a.final_train_mse == pytest.approx(b.final_train_mse, rel=1e-10)
        assert a.final_test_mse == pytest.approx(b.final_test_mse, rel=1e-10)


def test_zero_lr_keeps_initial_loss(small):
    arch = nn.ae_arch(6, 4, 2)
    rec = train(small, arch, TrainConfig(lr=0.0, epochs=2), init_seed=5)
    init = nn.init_model(arch, 5)
    assert rec.final_train_mse == evaluate(init, small.x_train)
    assert rec.final_test_mse == evaluate(init, small.x_test)


def test_training_reduces_loss(small):
    arch = nn.ae_arch(6, 16, 3)
    before = evaluate(nn.init_model(arch, 1), small.x_train)
    rec = train(small, arch, TrainConfig(lr=0.01, epochs=50, batch_size=4), init_seed=1)
    assert rec.final_train_mse < 0.2 * before


def test_step_count_and_cap(small):
    arch = nn.ae_arch(6, 3, 2)
    full = train(small, arch, TrainConfig(epochs=3, batch_size=10), 0)
    assert full.steps == 3 * 4 and not full.capped
    cut = train(small, arch, TrainConfig(epochs=3, batch_size=10, max_steps=6), 0)
    assert cut.steps == 6 and cut.capped
    # budget equal to the schedule is not a cap
    exact = train(small, arch, TrainConfig(epochs=3, batch_size=10, max_steps=12), 0)
    assert exact.steps == 12 and not exact.capped
    assert exact.final_train_mse == full.final_train_mse


def test_determinism_and_seed_sensitivity(small):
    arch = nn.ae_arch(6, 5, 2)
    cfg = TrainConfig(epochs=3, shuffle_seed=1)
    a, b = train(small, arch, cfg, 3), train(small, arch, cfg, 3)
    assert a.final_test_mse == b.final_test_mse
    assert train(small, arch, cfg, 4).final_test_mse != a.final_test_mse
    other = train(small, arch, dataclasses.replace(cfg, shuffle_seed=2), 3)
    assert other.final_test_mse != a.final_test_mse


def test_linear_ae_memorises_tiny_training_set():
    ds = generate_dataset(dataclasses.replace(sweep.LINEAR_AE_DATA, n_train=8, n_test=50))
    rec = train(ds, nn.linear_ae_arch(), TrainConfig.linear_ae(), init_seed=1)
    assert rec.param_count == 29445
    assert rec.steps == 1000
    assert rec.final_train_mse < 1e-4
    assert rec.final_test_mse > 1.0


def test_evaluate_chunking_is_exact(small):
    model = nn.init_model(nn.ae_arch(6, 5, 2), 0)
    whole = evaluate(model, small.x_test, chunk=10_000)
    assert evaluate(model, small.x_test, chunk=1) == pytest.approx(whole, rel=1e-13)
    assert evaluate(model, small.x_test, chunk=7) == pytest.approx(whole, rel=1e-13)
    pred, _ = nn.forward(model, small.x_test)
    assert whole == pytest.approx(np.mean((pred - small.x_test) ** 2), rel=1e-13)


def test_divergence_is_flagged(small):
    bad = small.x_train.copy()
    bad[3, 2] = np.inf
    ds = Dataset(small.spec, small.projection, small.noise_variance, bad, small.x_test)
    rec = train(ds, nn.ae_arch(6, 3, 2), TrainConfig(epochs=2), 0)
    assert rec.diverged
    assert math.isnan(rec.final_train_mse) and math.isnan(rec.final_test_mse)
    assert rec.to_json()["final_test_mse"] is None


def test_trace_and_json(small):
    rec = train(small, nn.ae_arch(6, 3, 2), TrainConfig(epochs=4, eval_every=2), 0)
    assert [t[0] for t in rec.trace] == [2, 4]
    assert rec.trace[-1][1] == rec.final_train_mse
    doc = json.loads(rec.dumps())
    assert doc["arch"]["activation"] == "relu"
    assert doc["seeds"] == {"data": 4, "init": 0, "shuffle": 0}
    assert isinstance(rec, RunRecord)


def test_rejects_mismatched_arch_and_bad_config(small):
    with pytest.raises(ValueError):
        train(small, nn.ae_arch(7, 3, 2), TrainConfig(), 0)
    with pytest.raises(ValueError):
        train(small, nn.ae_arch(6, 3, 2), TrainConfig(), 0, backend="gpu")
    for bad in ({"lr": -1.0}, {"epochs": 0}, {"batch_size": 0}, {"max_steps": 0}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_linear_ae_defaults():
    cfg = TrainConfig.linear_ae()
    assert (cfg.lr, cfg.epochs, cfg.batch_size, cfg.max_steps) == (0.001, 1000, 20, 500_000)
    assert TrainConfig() == TrainConfig(0.001, 200, 10)
