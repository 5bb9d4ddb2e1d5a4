"""Binary dataset file (``DDL1``).

Layout, all little-endian: the 4-byte magic ``DDL1``; the ``DataSpec``
fields in declaration order (``d, n, n_train, n_test`` as int64, ``snr`` as
float64, ``seed`` as uint64); then ``D`` (n x d), ``x_train`` and ``x_test``
as row-major float64.
"""

import struct

import numpy as np

from .datagen import DataSpec, Dataset, noise_scale

DATASET_MAGIC = b"DDL1"
_HEADER = struct.Struct("<4qdQ")


def save_dataset(dataset: Dataset, path) -> None:
    s = dataset.spec
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(_HEADER.pack(s.d, s.n, s.n_train, s.n_test, float(s.snr), s.seed))
        for arr in (dataset.projection, dataset.x_train, dataset.x_test):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != DATASET_MAGIC:
        raise ValueError(f"{path}: not a DDL1 dataset file")
    d, n, n_train, n_test, snr, seed = _HEADER.unpack_from(raw, 4)
    spec = DataSpec(d=d, n=n, n_train=n_train, n_test=n_test, snr=snr, seed=seed)
    body = np.frombuffer(raw, dtype="<f8", offset=4 + _HEADER.size).astype(np.float64)
    sizes = [n * d, n_train * n, n_test * n]
    if body.size != sum(sizes):
        raise ValueError(f"{path}: truncated or oversized payload")
    D, x_train, x_test = np.split(body, np.cumsum(sizes)[:2])
    return Dataset(spec, D.reshape(n, d), noise_scale(snr, d),
                   x_train.reshape(n_train, n), x_test.reshape(n_test, n))
