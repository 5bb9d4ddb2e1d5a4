"""One training job: mini-batch Adam on reconstruction MSE."""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import nn
from .datagen import DataSpec, Dataset, make_rng

DEFAULT_MAX_STEPS = 500_000


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    epochs: int = 200
    batch_size: int = 10
    shuffle_seed: int = 0
    eval_every: int = 0
    max_steps: Optional[int] = DEFAULT_MAX_STEPS

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError(f"lr must be non-negative, got {self.lr!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1 or None")

    @classmethod
    def linear_ae(cls, **overrides) -> TrainConfig:
        """Hyperparameters of the linear-AE experiment (1000 epochs, batch 20)."""
        return cls(**{"lr": 0.001, "epochs": 1000, "batch_size": 20, **overrides})


@dataclass
class RunRecord:
    arch: nn.ArchSpec
    data_spec: DataSpec
    train_config: TrainConfig
    seeds: dict
    param_count: int
    final_train_mse: float
    final_test_mse: float
    steps: int
    capped: bool
    diverged: bool = False
    trace: list = field(default_factory=list)
    wall_time: float = 0.0

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        out["arch"]["activation"] = self.arch.activation.value
        for key in ("final_train_mse", "final_test_mse"):
            if not math.isfinite(out[key]):
                out[key] = None
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def evaluate(model: nn.Model, data: np.ndarray, chunk: int = 4096) -> float:
    """Full-batch reconstruction MSE, computed in row chunks."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != model.arch.n_features:
        raise ValueError(f"data must have shape (N, {model.arch.n_features}), got {data.shape}")
    total = 0.0
    for start in range(0, data.shape[0], chunk):
        part = data[start : start + chunk]
        pred, _ = nn.forward(model, part)
        total += float(np.sum((pred - part) ** 2))
    return total / data.size


def _layout(arch: nn.ArchSpec):
    w_off, b_off, n_out, n_in = [], [], [], []
    k = 0
    for o, i in arch.layer_shapes():
        w_off.append(k)
        k += o * i
        b_off.append(k)
        k += o
        n_out.append(o)
        n_in.append(i)
    ints = lambda xs: np.asarray(xs, dtype=np.int64)  # noqa: E731
    return ints(w_off), ints(b_off), ints(n_out), ints(n_in), np.asarray(arch.activated())


def _epoch_numpy(model, state, x, perm, batch_size, max_new):
    taken, loss = 0, 0.0
    for start in range(0, len(perm), batch_size):
        if taken >= max_new:
            break
        xb = x[perm[start : start + batch_size]]
        pred, cache = nn.forward(model, xb)
        loss = nn.mse_loss(pred, xb)
        nn.adam_step(model, nn.backward(model, cache, xb), state)
        taken += 1
    return taken, loss


def train(
    dataset: Dataset,
    arch: nn.ArchSpec,
    config: TrainConfig,
    init_seed: int,
    backend: str = "compiled",
) -> RunRecord:
    """Train a freshly initialised autoencoder on ``dataset.x_train``.

    Each epoch draws a fresh permutation from the ``config.shuffle_seed``
    stream; the last batch of an epoch may be short. Training stops after
    ``config.epochs`` epochs or ``config.max_steps`` optimizer steps,
    whichever comes first. A non-finite loss or parameter stops the run and
    marks the record ``diverged`` with NaN losses.

    ``backend="numpy"`` runs the reference ``nn`` functions step by step;
    the default compiled loop computes the same updates much faster.
    """
    if arch.n_features != dataset.spec.n:
        raise ValueError(
            f"arch expects {arch.n_features} features, dataset has {dataset.spec.n}"
        )
    t0 = time.perf_counter()
    x_train, x_test = dataset.x_train, dataset.x_test
    model = nn.init_model(arch, init_seed)
    state = nn.AdamState.for_model(model, lr=config.lr)
    rng = make_rng(config.shuffle_seed)
    budget = config.max_steps if config.max_steps is not None else math.inf

    if backend == "compiled":
        from ._kernel import _run_epoch

        layout = _layout(arch)

        def run_epoch(perm, max_new):
            taken, loss = _run_epoch(
                model.params, state.first_moment, state.second_moment, state.step,
                state.lr, state.beta1, state.beta2, state.epsilon,
                x_train, perm, config.batch_size, max_new, *layout,
            )
            state.step += taken
            model.version += taken
            return taken, loss
    elif backend == "numpy":
        def run_epoch(perm, max_new):
            return _epoch_numpy(model, state, x_train, perm, config.batch_size, max_new)
    else:
        raise ValueError(f"unknown backend {backend!r}")

    per_epoch = -(-x_train.shape[0] // config.batch_size)
    capped = config.epochs * per_epoch > budget
    trace = []
    diverged = False
    for epoch in range(1, config.epochs + 1):
        if state.step >= budget:
            break
        perm = rng.permutation(x_train.shape[0]).astype(np.int64)
        max_new = int(min(budget - state.step, len(perm)))
        _, loss = run_epoch(perm, max_new)
        if not (math.isfinite(loss) and np.isfinite(model.params).all()):
            diverged = True
            break
        if config.eval_every and epoch % config.eval_every == 0:
            trace.append((epoch, evaluate(model, x_train), evaluate(model, x_test)))

    if diverged:
        train_mse = test_mse = math.nan
    else:
        train_mse = evaluate(model, x_train)
        test_mse = evaluate(model, x_test)
        if not (math.isfinite(train_mse) and math.isfinite(test_mse)):
            diverged = True
            train_mse = test_mse = math.nan

    return RunRecord(
        arch=arch,
        data_spec=dataset.spec,
        train_config=config,
        seeds={"data": dataset.spec.seed, "init": init_seed, "shuffle": config.shuffle_seed},
        param_count=nn.param_count(arch),
        final_train_mse=train_mse,
        final_test_mse=test_mse,
        steps=state.step,
        capped=capped,
        diverged=diverged,
        trace=trace,
        wall_time=time.perf_counter() - t0,
    )
