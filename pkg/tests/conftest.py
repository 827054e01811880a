import numpy as np
import pytest

from matterwave import kernels
from matterwave.grid import build_grid
from matterwave.hamiltonian import PotentialModel, TwoChannelHamiltonian, lih_masses


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_grid():
    return build_grid(16, 12, 0.3, 0.4, r0=1.0, Z0=-0.5, mu_r=2.0, M_Z=5.0)


@pytest.fixture(scope="session")
def desk_hamiltonian():
    mu, M = lih_masses()
    g = build_grid(256, 256, 0.1, 0.1, r0=1.0, Z0=0.0, mu_r=mu, M_Z=M)
    return TwoChannelHamiltonian.from_model(g, PotentialModel())


@pytest.fixture(scope="session")
def coarse_hamiltonian():
    """Default model on a 64x64 grid (cheap dynamics)."""
    mu, M = lih_masses()
    g = build_grid(64, 64, 0.25, 0.25, r0=1.0, Z0=0.0, mu_r=mu, M_Z=M)
    return TwoChannelHamiltonian.from_model(g, PotentialModel())


@pytest.fixture(params=kernels.available_backends())
def kernel_backend(request):
    previous = kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)


def random_field(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# acceptance bookkeeping: one PASS/FAIL line per criterion in the terminal summary
_criteria: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call":
        return
    n, title = mark.args
    detail = getattr(item, "criterion_detail", "")
    _criteria[n] = (title, "PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, verdict, detail = _criteria[n]
        terminalreporter.write_line(f"criterion {n} [{verdict}] {title}" + (f": {detail}" if detail else ""))


@pytest.fixture
def report(request):
    """Attach a one-line measurement summary to the running acceptance test."""
    def record(text):
        request.node.criterion_detail = text
        print(text)
    return record
