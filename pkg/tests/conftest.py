import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    """One default Euclidean-plane pipeline run (seed 0), shared by the
    regression and acceptance tests: ``(output dir, summary)``."""
    from tubed.pipeline import PipelineConfig, run_pipeline

    out = tmp_path_factory.mktemp("pipeline_default")
    summary = run_pipeline(PipelineConfig(), out)
    return out, summary


# -- acceptance report ---------------------------------------------------------
# Tests marked ``@pytest.mark.criterion(n, "title")`` get one PASS/FAIL line
# each in the terminal summary.

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    n, title = mark.args
    ok = _CRITERIA.get(n, (title, True))[1] and not rep.failed
    if rep.when == "call" or rep.failed:
        _CRITERIA[n] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}")
