import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from latentsd import synth  # noqa: E402
from latentsd.sdtrain import TrainConfig, train  # noqa: E402
from latentsd.seeding import stream  # noqa: E402
from latentsd.vae import VaeModel  # noqa: E402


@pytest.fixture(scope="session")
def shapes_run():
    """Subgroup-aware model on the synthetic shapes at benchmark scale (seed 0)."""
    data = synth.generate(n=5000, seed=0)
    model = VaeModel(data.spec.pixels, latent_dim=16, rng=stream(0, "init"))
    run = train(model, data.images, data.targets, TrainConfig(mode="sd_from_scratch", epochs=30, seed=0))
    return data, model, run


def pytest_terminal_summary(terminalreporter):
    import acceptance_log
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
