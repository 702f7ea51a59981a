import numpy as np
import pytest

from kdlab import data

FD_STEP = 1e-5


def central_diff(f, z, h=FD_STEP):
    """Central finite differences of a scalar function ``f`` at the vector ``z``."""
    z = np.array(z, dtype=np.float64)
    g = np.empty_like(z)
    for i in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp.flat[i] += h
        zm.flat[i] -= h
        g.flat[i] = (f(zp) - f(zm)) / (2 * h)
    return g


def rel_err(a, b):
    """``||a - b||_inf / max(||a||_inf, ||b||_inf)``; 0 when both vanish."""
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)))
    return 0.0 if scale == 0 else float(np.max(np.abs(a - b)) / scale)


def random_logits(rng, k, low=-5.0, high=5.0):
    return rng.uniform(low, high, size=k)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_data():
    ds = data.gen_gaussian_mixture(4, 6, 40, 0.4, seed=3)
    return data.split(ds, 0.25, seed=3)


# -- acceptance reporting -----------------------------------------------------------

_CRITERIA = []
_SETUP_TIME = pytest.StashKey[float]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    # shared fixtures train models during setup, so setup time counts too
    spent = item.stash.get(_SETUP_TIME, 0.0) + report.duration
    if report.when == "setup":
        item.stash[_SETUP_TIME] = report.duration
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = mark.args
        _CRITERIA.append((number, title, report.outcome, spent))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome, duration in sorted(_CRITERIA):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {verdict}  {title}  ({duration:.2f}s)")
