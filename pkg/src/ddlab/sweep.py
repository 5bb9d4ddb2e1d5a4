"""Capacity sweeps over the autoencoder families, with a resumable CSV store.

Seeds derive from one master seed ``S`` (the base ``DataSpec.seed``). For
replicate ``k`` and cell index ``c`` (the cell's position in the grid as
listed, or the size's position in the size list):

* autoencoder grid: ``data = S + k`` (one dataset shared by every cell),
  ``init = S + k + 1000 c``, ``shuffle = S + k + 2000 c``;
* linear AE: as above, but ``data = S + k + 3000 c`` so each size gets a
  fresh dataset.

The ``seed`` column of ``results.csv`` holds ``S + k``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import __version__, nn
from .datagen import DataSpec, generate_dataset
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)

CSV_HEADER = (
    "experiment_id", "latent", "hidden", "n_train", "n_features", "data_latent_dim", "snr",
    "param_count", "seed", "epochs", "lr", "batch_size", "train_mse", "test_mse", "diverged",
)
RESULTS_CSV = "results.csv"
RUNS_JSONL = "runs.jsonl"

DEFAULT_LATENTS = (2, 5, 10, 15, 20, 25, 30, 50, 100, 200)
DEFAULT_HIDDENS = (4, 8, 16, 28, 64, 128, 256, 512, 1024)


@dataclass(frozen=True)
class ResultRow:
    experiment_id: str
    latent: int
    hidden: int
    n_train: int
    n_features: int
    data_latent_dim: int
    snr: float
    param_count: int
    seed: int
    epochs: int
    lr: float
    batch_size: int
    train_mse: float
    test_mse: float
    diverged: bool

    @property
    def key(self):
        return (self.experiment_id, self.latent, self.hidden, self.n_train, self.seed)

    @property
    def cell(self):
        return (self.experiment_id, self.latent, self.hidden, self.n_train)

    @property
    def ratio_features(self) -> float:
        return parameterization_ratio(self.param_count, self.n_train, self.n_features)

    @property
    def ratio_latent(self) -> float:
        return parameterization_ratio(self.param_count, self.n_train, self.latent)

    def same_values(self, other: ResultRow) -> bool:
        def eq(a, b):
            if isinstance(a, float) and math.isnan(a):
                return isinstance(b, float) and math.isnan(b)
            return a == b
        return all(eq(getattr(self, f), getattr(other, f)) for f in CSV_HEADER)

    def csv_fields(self) -> list[str]:
        out = []
        for name in CSV_HEADER:
            value = getattr(self, name)
            if isinstance(value, bool):
                out.append("1" if value else "0")
            elif isinstance(value, float):
                out.append(repr(value))
            else:
                out.append(str(value))
        return out

    @classmethod
    def from_csv(cls, record: dict) -> ResultRow:
        kwargs = {}
        for f in dataclasses.fields(cls):
            raw = record[f.name]
            if f.type == "bool":
                kwargs[f.name] = raw.strip() in ("1", "true", "True")
            elif f.type == "int":
                kwargs[f.name] = int(raw)
            elif f.type == "float":
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = raw
        return cls(**kwargs)


class ResultsTable:
    """Raw per-seed rows, unique by ``(experiment_id, latent, hidden, n_train, seed)``."""

    def __init__(self, rows: Iterable[ResultRow] = ()):
        self._rows: dict[tuple, ResultRow] = {}
        for row in rows:
            self.add(row)

    def add(self, row: ResultRow) -> None:
        old = self._rows.get(row.key)
        if old is not None and not old.same_values(row):
            raise ValueError(f"conflicting results for {row.key}")
        self._rows[row.key] = row

    @property
    def rows(self) -> list[ResultRow]:
        return [self._rows[k] for k in sorted(self._rows)]

    def __len__(self):
        return len(self._rows)

    def __contains__(self, key):
        return key in self._rows

    def __eq__(self, other):
        if not isinstance(other, ResultsTable):
            return NotImplemented
        return self._rows.keys() == other._rows.keys() and all(
            self._rows[k].same_values(other._rows[k]) for k in self._rows
        )

    def select(self, experiment_id: str) -> ResultsTable:
        return ResultsTable(r for r in self._rows.values() if r.experiment_id == experiment_id)

    def aggregate(self, metric: str = "test_mse") -> dict[tuple, dict]:
        """Per-cell mean/min/max of ``metric`` over non-diverged seeds."""
        groups: dict[tuple, list[ResultRow]] = {}
        for row in self.rows:
            groups.setdefault(row.cell, []).append(row)
        out = {}
        for cell, rows in groups.items():
            values = [getattr(r, metric) for r in rows if not r.diverged]
            out[cell] = {
                "mean": math.fsum(values) / len(values) if values else math.nan,
                "min": min(values) if values else math.nan,
                "max": max(values) if values else math.nan,
                "n_seeds": len(values),
                "n_diverged": len(rows) - len(values),
                "param_count": rows[0].param_count,
            }
        return out

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.rows:
            writer.writerow(row.csv_fields())
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")

    @classmethod
    def read_csv(cls, path) -> ResultsTable:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_HEADER:
                raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
            return cls(ResultRow.from_csv(rec) for rec in reader)


def merge_results(tables: Sequence[ResultsTable]) -> ResultsTable:
    """Union of rows; identical duplicates collapse, conflicting ones raise."""
    out = ResultsTable()
    for table in tables:
        for row in table.rows:
            out.add(row)
    return out


def parameterization_ratio(params: int, n_train: int, out_dim: int) -> float:
    """``params / (n_train * out_dim)``; 1 marks the predicted interpolation peak."""
    if params <= 0 or n_train <= 0 or out_dim <= 0:
        raise ValueError("params, n_train and out_dim must all be positive")
    return params / (n_train * out_dim)


# -- grids and jobs ------------------------------------------------------------


@dataclass(frozen=True)
class SweepGrid:
    """Cells to train: the union of ``latent_values x hidden_values`` blocks.

    ``blocks`` holds ``(latents, hiddens)`` pairs; the plain
    ``latent_values``/``hidden_values`` product is the first block.
    """

    latent_values: tuple = DEFAULT_LATENTS
    hidden_values: tuple = DEFAULT_HIDDENS
    seeds_per_cell: int = 3
    base_data: DataSpec = field(default_factory=DataSpec)
    base_train: TrainConfig = field(default_factory=TrainConfig)
    blocks: tuple = ()

    def __post_init__(self):
        if self.seeds_per_cell < 1:
            raise ValueError("seeds_per_cell must be >= 1")
        if not self.cells():
            raise ValueError("grid has no cells")

    def cells(self) -> list[tuple[int, int]]:
        seen = []
        for latents, hiddens in ((self.latent_values, self.hidden_values), *self.blocks):
            for latent in latents:
                for hidden in hiddens:
                    cell = (int(latent), int(hidden))
                    if cell not in seen:
                        seen.append(cell)
        return seen


@dataclass(frozen=True)
class Job:
    experiment_id: str
    data_spec: DataSpec
    arch: nn.ArchSpec
    config: TrainConfig
    init_seed: int
    seed: int

    @property
    def key(self):
        return (self.experiment_id, self.arch.latent, self.arch.encoder_hidden[0],
                self.data_spec.n_train, self.seed)


def derive_seeds(master: int, replicate: int, cell_index: int, fresh_data: bool = False) -> dict:
    base = master + replicate
    return {
        "data": base + 3000 * cell_index if fresh_data else base,
        "init": base + 1000 * cell_index,
        "shuffle": base + 2000 * cell_index,
    }


def ae_jobs(grid: SweepGrid, experiment_id: str = "ae") -> list[Job]:
    jobs = []
    master = grid.base_data.seed
    for c, (latent, hidden) in enumerate(grid.cells()):
        for k in range(grid.seeds_per_cell):
            s = derive_seeds(master, k, c)
            jobs.append(Job(
                experiment_id,
                dataclasses.replace(grid.base_data, seed=s["data"]),
                nn.ae_arch(grid.base_data.n, hidden, latent),
                dataclasses.replace(grid.base_train, shuffle_seed=s["shuffle"]),
                s["init"],
                master + k,
            ))
    return jobs


LINEAR_AE_DATA = DataSpec(d=10, n=25, n_train=1000, n_test=1000, snr=10.0, seed=0)


def linear_ae_jobs(n_train_values: Sequence[int], base: DataSpec, config: TrainConfig,
                   seeds: int, experiment_id: str = "linear_ae") -> list[Job]:
    arch = nn.linear_ae_arch()
    if base.n != arch.n_features:
        raise ValueError(f"linear AE needs n={arch.n_features} features, got {base.n}")
    jobs = []
    for c, n_train in enumerate(n_train_values):
        for k in range(seeds):
            s = derive_seeds(base.seed, k, c, fresh_data=True)
            jobs.append(Job(
                experiment_id,
                dataclasses.replace(base, n_train=int(n_train), seed=s["data"]),
                arch,
                dataclasses.replace(config, shuffle_seed=s["shuffle"]),
                s["init"],
                base.seed + k,
            ))
    return jobs


@lru_cache(maxsize=4)
def _dataset(spec: DataSpec):
    return generate_dataset(spec)


def run_job(job: Job) -> tuple[ResultRow, dict]:
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        record = train(_dataset(job.data_spec), job.arch, job.config, job.init_seed)
    spec, cfg = job.data_spec, job.config
    row = ResultRow(
        experiment_id=job.experiment_id,
        latent=job.arch.latent,
        hidden=job.arch.encoder_hidden[0],
        n_train=spec.n_train,
        n_features=spec.n,
        data_latent_dim=spec.d,
        snr=float(spec.snr),
        param_count=record.param_count,
        seed=job.seed,
        epochs=cfg.epochs,
        lr=float(cfg.lr),
        batch_size=cfg.batch_size,
        train_mse=float(record.final_train_mse),
        test_mse=float(record.final_test_mse),
        diverged=record.diverged,
    )
    return row, record.to_json()


def default_workers() -> int:
    env = os.environ.get("DDLAB_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _load_store(out_dir: Optional[Path]) -> ResultsTable:
    if out_dir is None:
        return ResultsTable()
    tables = []
    csv_path = out_dir / RESULTS_CSV
    if csv_path.exists():
        tables.append(ResultsTable.read_csv(csv_path))
    runs = out_dir / RUNS_JSONL
    if runs.exists():
        rows = []
        for line in runs.read_text(encoding="utf-8").splitlines():
            if line.strip():
                try:
                    rec = json.loads(line)["row"]
                except (json.JSONDecodeError, KeyError):
                    # a run interrupted mid-write leaves a torn last line
                    log.warning("skipping unreadable line in %s", runs)
                    continue
                rows.append(ResultRow(**{**rec, "train_mse": _num(rec["train_mse"]),
                                         "test_mse": _num(rec["test_mse"])}))
        tables.append(ResultsTable(rows))
    return merge_results(tables)


def _num(v):
    return math.nan if v is None else float(v)


def _row_json(row: ResultRow) -> dict:
    out = dataclasses.asdict(row)
    for key in ("train_mse", "test_mse"):
        if math.isnan(out[key]):
            out[key] = None
    return out


def execute(jobs: Sequence[Job], out_dir=None, workers: Optional[int] = None) -> ResultsTable:
    """Run the jobs not already present in ``out_dir`` and return every requested row.

    Completed runs are appended to ``runs.jsonl`` by this process only, as
    they finish; ``results.csv`` is rewritten in sorted key order at the end,
    so its bytes do not depend on the worker count or completion order.
    """
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    store = _load_store(out_dir)
    todo = [j for j in jobs if j.key not in store]
    log.info("%d jobs requested, %d already done", len(jobs), len(jobs) - len(todo))
    workers = default_workers() if workers is None else max(1, int(workers))

    def record(row, run):
        store.add(row)
        if out_dir is not None:
            with open(out_dir / RUNS_JSONL, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"row": _row_json(row), "run": run}, sort_keys=True) + "\n")
        if row.diverged:
            log.warning("run %s diverged", row.key)

    if workers == 1 or len(todo) <= 1:
        for i, job in enumerate(todo, 1):
            record(*run_job(job))
            log.info("finished %s (%d/%d)", job.key, i, len(todo))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_job, job): job for job in todo}
            for i, fut in enumerate(as_completed(futures), 1):
                record(*fut.result())
                log.info("finished %s (%d/%d)", futures[fut].key, i, len(todo))

    if out_dir is not None:
        store.write_csv(out_dir / RESULTS_CSV)
    wanted = {j.key for j in jobs}
    return ResultsTable(r for r in store.rows if r.key in wanted)


def run_ae_sweep(grid: SweepGrid, out_dir=None, workers: Optional[int] = None) -> ResultsTable:
    """Train every ``(latent, hidden)`` cell of ``grid`` for each seed replicate."""
    table = execute(ae_jobs(grid), out_dir, workers)
    if out_dir is not None:
        write_metadata(out_dir, "ae", grid_to_json(grid))
    return table


def run_linear_ae_sweep(n_train_values: Sequence[int], base: DataSpec = LINEAR_AE_DATA,
                        config: Optional[TrainConfig] = None, seeds: int = 3,
                        out_dir=None, workers: Optional[int] = None) -> ResultsTable:
    """Fixed linear AE, training-set size swept over ``n_train_values``."""
    config = config or TrainConfig.linear_ae()
    table = execute(linear_ae_jobs(n_train_values, base, config, seeds), out_dir, workers)
    if out_dir is not None:
        write_metadata(out_dir, "linear_ae", {
            "n_train_values": [int(v) for v in n_train_values],
            "seeds": seeds,
            "data": dataclasses.asdict(base),
            "train": dataclasses.asdict(config),
            "arch": arch_to_json(nn.linear_ae_arch()),
        })
    return table


def arch_to_json(arch: nn.ArchSpec) -> dict:
    out = dataclasses.asdict(arch)
    out["activation"] = arch.activation.value
    return out


def grid_to_json(grid: SweepGrid) -> dict:
    return {
        "cells": [list(c) for c in grid.cells()],
        "seeds_per_cell": grid.seeds_per_cell,
        "data": dataclasses.asdict(grid.base_data),
        "train": dataclasses.asdict(grid.base_train),
    }


def write_metadata(out_dir, experiment_id: str, config: dict) -> None:
    path = Path(out_dir) / "metadata.json"
    meta = json.loads(path.read_text()) if path.exists() else {}
    meta["tool_version"] = __version__
    meta.setdefault("experiments", {})[experiment_id] = config
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
