"""
Synthetic low-rank data
=======================

Samples are ``x = D z + noise`` with a shared projection ``D`` of shape
``(n, d)``. The projection entries are scaled so that the signal norm is
about ``snr`` times the noise norm.
"""

import numpy as np

from ddlab.datagen import DataSpec, generate_dataset, measure_snr, noise_scale

spec = DataSpec(d=20, n=50, n_train=5000, n_test=10000, snr=10.0, seed=0)
ds = generate_dataset(spec)
print(ds.x_train.shape, ds.x_test.shape)

# projection entries have variance snr^2 / d
print("entry variance of D:", ds.projection.var(), "target", noise_scale(spec.snr, spec.d))

# the realised ratio depends on the particular draw of D
print("measured snr at seed 0:", measure_snr(ds))
snrs = [measure_snr(generate_dataset(DataSpec(n_train=500, n_test=1, seed=s))) for s in range(20)]
print("over 20 draws: mean %.3f, min %.3f, max %.3f" % (np.mean(snrs), np.min(snrs), np.max(snrs)))

# the data live near a d-dimensional subspace: 20 large singular values, then noise
sv = np.linalg.svd(ds.x_train, compute_uv=False)
print(np.round(sv[:25] / sv[0], 3))
