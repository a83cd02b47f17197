import os

import numpy as np
import pytest


@pytest.fixture(scope="session", autouse=True)
def _ed_cache(tmp_path_factory):
    # keep ED spectra within the test session, away from the user cache
    old = os.environ.get("STOQMPS_CACHE")
    os.environ["STOQMPS_CACHE"] = str(tmp_path_factory.mktemp("ed_cache"))
    yield
    if old is None:
        del os.environ["STOQMPS_CACHE"]
    else:
        os.environ["STOQMPS_CACHE"] = old


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_density_matrix(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
