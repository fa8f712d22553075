"""
Inspecting discovered latents
=============================

After subgroup-aware training: the latent subgroup report, a traversal of
the latent in the best subgroup and the decoded mean latent of each subgroup.
"""

from latentsd import synth
from latentsd.evalrep import average_subgroup_decode, final_discovery, tile, traverse_latent, write_pgm
from latentsd.sdtrain import TrainConfig, train
from latentsd.seeding import stream
from latentsd.vae import VaeModel

# %%
data = synth.generate(n=3000, seed=2)
model = VaeModel(data.spec.pixels, 16, rng=stream(2, "init"))
train(model, data.images, data.targets, TrainConfig(mode="sd_from_scratch", epochs=15, seed=2))

# %%
# Row "Empty" is the whole population.
found = final_discovery(model, data.images, data.targets)
print(found.report.to_text())

# %%
# Sweep the first latent of the best subgroup around the mean code.
latent = int(found.ranked[0][0].selectors[0].attribute)
grid = traverse_latent(model, found.latents.mean(axis=0), latent, scale=float(found.latents[:, latent].std()))
write_pgm("latent_traversal.pgm", tile(grid.images, 16, 16))

# %%
# Population mean decode first, then one image per subgroup.
decodes = average_subgroup_decode(model, found.ranked, found.latents, found.table)
write_pgm("subgroup_decodes.pgm", tile(decodes, 16, 16))
print(f"wrote latent_traversal.pgm (latent {latent}) and subgroup_decodes.pgm")
