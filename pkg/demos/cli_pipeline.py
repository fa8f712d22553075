"""
The command-line pipeline
=========================

synth -> discover -> train -> report through the `latentsd` entry point,
the same as running the shell commands shown in each comment.
"""

import tempfile
from pathlib import Path

from latentsd.cli import main

out = Path(tempfile.mkdtemp(prefix="latentsd_"))

# %%
# latentsd synth --n 2000 --seed 0 --out DIR/data
main(["synth", "--n", "2000", "--seed", "0", "--out", str(out / "data")])

# %%
# latentsd discover --csv DIR/data/factors.csv --target target --out DIR/discover
main(["discover", "--csv", str(out / "data" / "factors.csv"), "--target", "target", "--out", str(out / "discover")])

# %%
# latentsd train --images ... --targets ... --mode sd --epochs 5 --out DIR/train
main(["train", "--images", str(out / "data" / "images.bin"), "--targets", str(out / "data" / "targets.csv"),
      "--mode", "sd", "--epochs", "5", "--out", str(out / "train")])

# %%
# latentsd report --checkpoint DIR/train/model.ckpt --images ... --targets ... --out DIR/report
main(["report", "--checkpoint", str(out / "train" / "model.ckpt"), "--images", str(out / "data" / "images.bin"),
      "--targets", str(out / "data" / "targets.csv"), "--out", str(out / "report")])
print("outputs in", out)
