from pathlib import Path

import numpy as np
import pytest

from erbfit.pqr import parse_pqr_file

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def bundled_pqr() -> Path:
    return DATA_DIR / "molecule.pqr"


@pytest.fixture(scope="session")
def molecule(bundled_pqr):
    return parse_pqr_file(bundled_pqr)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
