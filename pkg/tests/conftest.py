import numpy as np
import pytest

from latent_spectrum.datagen import DatasetSpec, generate, standardize
from latent_spectrum.vae import VaeConfig, encode_dataset, train_vae


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset():
    spec = DatasetSpec(n_samples=400, n_features=8, n_informative=4, n_redundant=1, k_classes=3, seed=3)
    return standardize(generate(spec))


@pytest.fixture(scope="session")
def small_vae(small_dataset):
    cfg = VaeConfig(input_dim=8, encoder_hidden=(16,), decoder_hidden=(16,), latent_dim=2, epochs=15, seed=1)
    return train_vae(small_dataset, cfg)


@pytest.fixture(scope="session")
def small_embedding(small_dataset, small_vae):
    return encode_dataset(small_vae[0], small_dataset, seed=7)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record():
    """Append one human-readable pass/fail line for the acceptance summary."""

    def _record(criterion: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
