import dataclasses
import math

import pytest
from hypothesis import given, strategies as st

from ddlab import sweep
from ddlab.datagen import DataSpec
from ddlab.sweep import CSV_HEADER, ResultRow, ResultsTable, SweepGrid
from ddlab.trainer import TrainConfig

TINY_DATA = DataSpec(d=3, n=8, n_train=30, n_test=20, seed=11)
TINY_GRID = SweepGrid(latent_values=(2, 4), hidden_values=(3,), seeds_per_cell=2,
                      base_data=TINY_DATA, base_train=TrainConfig(epochs=2, batch_size=8),
                      blocks=(((4,), (3, 6)),))


def row(**kw):
    base = dict(experiment_id="ae", latent=2, hidden=4, n_train=100, n_features=50,
                data_latent_dim=20, snr=10.0, param_count=1000, seed=0, epochs=200, lr=0.001,
                batch_size=10, train_mse=1.5, test_mse=2.5, diverged=False)
    base.update(kw)
    return ResultRow(**base)


def test_csv_header_is_exact():
    text = ResultsTable([row()]).to_csv_text()
    assert text.splitlines()[0] == ("experiment_id,latent,hidden,n_train,n_features,"
                                    "data_latent_dim,snr,param_count,seed,epochs,lr,batch_size,"
                                    "train_mse,test_mse,diverged")
    assert len(CSV_HEADER) == 15


def test_csv_roundtrip_is_lossless(tmp_path):
    rows = [row(seed=1, test_mse=0.1 + 0.2), row(seed=0, train_mse=math.nan, test_mse=math.nan,
                                                 diverged=True), row(latent=5, test_mse=1e-300)]
    table = ResultsTable(rows)
    table.write_csv(tmp_path / "r.csv")
    back = ResultsTable.read_csv(tmp_path / "r.csv")
    assert back == table
    assert back.to_csv_text() == table.to_csv_text()
    assert [r.key for r in back.rows] == sorted(r.key for r in rows)


def test_read_csv_rejects_wrong_header(tmp_path):
    (tmp_path / "r.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        ResultsTable.read_csv(tmp_path / "r.csv")


def test_duplicate_rows_collapse_and_conflicts_raise():
    table = sweep.merge_results([ResultsTable([row()]), ResultsTable([row()])])
    assert len(table) == 1
    with pytest.raises(ValueError):
        sweep.merge_results([ResultsTable([row()]), ResultsTable([row(test_mse=9.0)])])


def test_aggregate_over_seeds():
    table = ResultsTable([row(seed=0, test_mse=1.0), row(seed=1, test_mse=3.0),
                          row(seed=2, test_mse=math.nan, diverged=True)])
    stats = table.aggregate("test_mse")[("ae", 2, 4, 100)]
    assert stats["mean"] == 2.0 and stats["min"] == 1.0 and stats["max"] == 3.0
    assert stats["n_seeds"] == 2 and stats["n_diverged"] == 1


def test_parameterization_ratio():
    assert sweep.parameterization_ratio(29445, 1178, 25) == pytest.approx(29445 / 29450)
    assert row(param_count=200, n_train=4, latent=5).ratio_latent == 10.0
    with pytest.raises(ValueError):
        sweep.parameterization_ratio(10, 0, 5)


@given(st.integers(1, 10**6), st.integers(1, 10**6), st.integers(1, 100))
def test_ratio_is_one_exactly_at_the_balance_point(p, n, o):
    r = sweep.parameterization_ratio(p, n, o)
    assert (r == 1.0) == (p == n * o)


def test_grid_cells_union_in_listed_order():
    assert TINY_GRID.cells() == [(2, 3), (4, 3), (4, 6)]
    with pytest.raises(ValueError):
        SweepGrid(latent_values=(), hidden_values=())


def test_seed_derivation():
    jobs = sweep.ae_jobs(TINY_GRID)
    assert len(jobs) == 6
    j = jobs[5]  # cell 2, replicate 1
    assert (j.seed, j.data_spec.seed, j.init_seed, j.config.shuffle_seed) == (12, 12, 2012, 4012)
    assert len({(x.init_seed, x.config.shuffle_seed) for x in jobs}) == 6
    lin = sweep.linear_ae_jobs((8, 30), sweep.LINEAR_AE_DATA, TrainConfig.linear_ae(), 2)
    assert [x.data_spec.seed for x in lin] == [0, 1, 3000, 3001]
    assert [x.data_spec.n_train for x in lin] == [8, 8, 30, 30]
    with pytest.raises(ValueError):
        sweep.linear_ae_jobs((8,), DataSpec(d=3, n=8), TrainConfig(), 1)


def test_sweep_is_resumable_and_worker_independent(tmp_path, monkeypatch):
    a = sweep.run_ae_sweep(TINY_GRID, tmp_path / "a", workers=1)
    b = sweep.run_ae_sweep(TINY_GRID, tmp_path / "b", workers=2)
    assert len(a) == 6 and a == b
    csv_a = (tmp_path / "a" / "results.csv").read_bytes()
    assert csv_a == (tmp_path / "b" / "results.csv").read_bytes()

    def boom(job):
        raise AssertionError("finished job was rerun")

    monkeypatch.setattr(sweep, "run_job", boom)
    again = sweep.run_ae_sweep(TINY_GRID, tmp_path / "a", workers=1)
    assert again == a
    assert (tmp_path / "a" / "results.csv").read_bytes() == csv_a


def test_resume_from_run_log_with_torn_tail(tmp_path):
    out = tmp_path / "r"
    full = sweep.run_ae_sweep(TINY_GRID, out, workers=1)
    (out / "results.csv").unlink()
    lines = (out / "runs.jsonl").read_text().splitlines(keepends=True)
    (out / "runs.jsonl").write_text("".join(lines[:4]) + lines[4][:25])
    resumed = sweep.run_ae_sweep(TINY_GRID, out, workers=1)
    assert resumed == full


def test_larger_grid_reuses_earlier_cells(tmp_path):
    small = sweep.run_ae_sweep(dataclasses.replace(TINY_GRID, blocks=()), tmp_path, workers=1)
    big = sweep.run_ae_sweep(TINY_GRID, tmp_path, workers=1)
    for r in small.rows:
        assert big.rows[[x.key for x in big.rows].index(r.key)] == r


def test_metadata_records_both_experiments(tmp_path):
    import json

    sweep.run_ae_sweep(dataclasses.replace(TINY_GRID, seeds_per_cell=1), tmp_path, workers=1)
    sweep.run_linear_ae_sweep((8,), config=TrainConfig.linear_ae(epochs=1), seeds=1,
                              out_dir=tmp_path, workers=1)
    meta = json.loads((tmp_path / "metadata.json").read_text())
    assert set(meta["experiments"]) == {"ae", "linear_ae"}
    assert meta["experiments"]["linear_ae"]["arch"]["activation"] == "identity"
    table = ResultsTable.read_csv(tmp_path / "results.csv")
    assert {r.experiment_id for r in table.rows} == {"ae", "linear_ae"}
    assert table.select("linear_ae").rows[0].param_count == 29445


def test_default_workers_env(monkeypatch):
    monkeypatch.setenv("DDLAB_WORKERS", "3")
    assert sweep.default_workers() == 3
    monkeypatch.delenv("DDLAB_WORKERS")
    assert sweep.default_workers() >= 1
