"""
Training one autoencoder
========================

A ``50 -> h -> l -> h -> 50`` ReLU autoencoder trained with Adam on
reconstruction MSE. A bottleneck narrower than the data's latent dimension
cannot reconstruct the signal; a wider one can, and then also starts to
copy some of the noise.
"""

from ddlab import nn
from ddlab.datagen import DataSpec, generate_dataset
from ddlab.trainer import TrainConfig, train

ds = generate_dataset(DataSpec(n_train=1000, n_test=2000, seed=1))
config = TrainConfig(epochs=30)

for latent in (5, 20, 40):
    arch = nn.ae_arch(50, 64, latent)
    rec = train(ds, arch, config, init_seed=1)
    print(f"latent {latent:3d}  params {rec.param_count:6d}  "
          f"train {rec.final_train_mse:8.4f}  test {rec.final_test_mse:8.4f}  "
          f"{rec.wall_time:.1f} s")

# the same seeds give the same numbers
again = train(ds, nn.ae_arch(50, 64, 20), config, init_seed=1)
print("repeatable:", again.final_test_mse == train(ds, nn.ae_arch(50, 64, 20), config, 1).final_test_mse)
