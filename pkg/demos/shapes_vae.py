"""
A dense VAE on synthetic shapes
===============================

Generating the 16x16 shapes data, training a plain VAE for a few epochs and
writing reconstructions next to the originals as a PGM image.
"""

import numpy as np

from latentsd import synth
from latentsd.evalrep import reconstruction_error, tile, write_pgm
from latentsd.sdtrain import TrainConfig, train
from latentsd.seeding import stream
from latentsd.vae import VaeModel, decode_array, encode_mean

# %%
# Five factors; the target is "square and bright", a quarter of the data.
data = synth.generate(n=2000, seed=0)
print("factors:", data.spec.names, "target rate", data.targets.mean())

# %%
model = VaeModel(data.spec.pixels, latent_dim=16, rng=stream(0, "init"))
print("recon before:", round(reconstruction_error(model, data.images), 2))
run = train(model, data.images, data.targets, TrainConfig(mode="vae_only", epochs=10, seed=0))
for r in run.records[::3]:
    print(f"epoch {r['epoch']:>2}  recon {r['recon']:.2f}  kl {r['kl']:.2f}")
print("recon after:", round(reconstruction_error(model, data.images), 2))

# %%
# Top row originals, bottom row reconstructions from the encoder mean.
x = data.images[:8]
x_hat = decode_array(model, encode_mean(model, x))
write_pgm("shapes_vae_reconstructions.pgm", tile(np.vstack([x, x_hat]), 16, 16, columns=8))
print("wrote shapes_vae_reconstructions.pgm")
