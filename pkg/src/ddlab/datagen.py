"""Synthetic latent-linear data: ``x = D z + eps``.

Random numbers come from numpy's ``PCG64`` bit generator and the
``Generator.standard_normal`` ziggurat transform. Both are covered by numpy's
stream-compatibility policy, so a seed reproduces the same bits on any
machine running the same numpy major version.

Stream order for a dataset is fixed: the projection ``D`` (row-major, n x d),
then the train rows, then the test rows. Each row draws its ``d`` latent
values followed by its ``n`` noise values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DataSpec:
    d: int = 20
    n: int = 50
    n_train: int = 5000
    n_test: int = 10000
    snr: float = 10.0
    seed: int = 0

    def __post_init__(self):
        for name in ("d", "n", "n_train", "n_test"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not self.snr > 0:
            raise ValueError(f"snr must be positive, got {self.snr!r}")


@dataclass
class Dataset:
    spec: DataSpec
    projection: np.ndarray
    noise_variance: float
    x_train: np.ndarray
    x_test: np.ndarray = field(repr=False)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.noise_variance == other.noise_variance
            and np.array_equal(self.projection, other.projection)
            and np.array_equal(self.x_train, other.x_train)
            and np.array_equal(self.x_test, other.x_test)
        )


def noise_scale(snr: float, d: int) -> float:
    """Variance of each projection entry giving the requested SNR.

    With ``D_ij ~ N(0, r)`` we have ``E||Dz||^2 = n d r`` and
    ``E||eps||^2 = n``, so ``r = snr**2 / d`` sets the norm ratio.
    """
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr!r}")
    if d < 1:
        raise ValueError(f"d must be a positive integer, got {d!r}")
    return snr**2 / d


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _draw_components(spec: DataSpec):
    """Replay the generation stream, returning ``D`` and the split components."""
    rng = make_rng(spec.seed)
    r = noise_scale(spec.snr, spec.d)
    projection = np.sqrt(r) * rng.standard_normal((spec.n, spec.d))
    splits = []
    for rows in (spec.n_train, spec.n_test):
        block = rng.standard_normal((rows, spec.d + spec.n))
        z, eps = block[:, : spec.d], block[:, spec.d :]
        splits.append((z @ projection.T, eps))
    return r, projection, splits


def generate_dataset(spec: DataSpec) -> Dataset:
    """Draw ``D`` once, then independent train and test samples that share it."""
    r, projection, ((sig_tr, eps_tr), (sig_te, eps_te)) = _draw_components(spec)
    return Dataset(
        spec=spec,
        projection=projection,
        noise_variance=r,
        x_train=sig_tr + eps_tr,
        x_test=sig_te + eps_te,
    )


def measure_snr(dataset: Dataset) -> float:
    """Empirical ``mean ||D z_i|| / mean ||eps_i||`` over the train split."""
    _, _, ((signal, noise), _) = _draw_components(dataset.spec)
    return float(np.linalg.norm(signal, axis=1).mean() / np.linalg.norm(noise, axis=1).mean())
