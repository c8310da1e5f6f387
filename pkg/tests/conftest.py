import pytest

from lcsfd.config import StudyConfig

SMOKE = {
    "realizations": 2,
    "master_seed": 11,
    "signal": {"n": 256, "line_indices": [3, 10, 17, 24]},
    "eval_counts": [21, 21],
    "n_test": 2048,
    "design": {"solver": {"max_iterations": 8, "lc_inner_iterations": 8, "max_outer": 3}},
    "train": {"max_iterations": 25, "restarts": 1},
}


def smoke_config(**changes):
    return StudyConfig.from_dict({**SMOKE, **changes})


@pytest.fixture(scope="session")
def smoke_study():
    from lcsfd.harness import montecarlo

    return montecarlo(smoke_config())


# ------------------------------------------------------- acceptance summary

_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    detail = dict(item.user_properties).get("detail", "")
    status = "PASS" if rep.passed else "FAIL"
    _CRITERIA.append((mark.args[0], mark.args[1], status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status, detail in sorted(_CRITERIA, key=lambda c: c[0]):
        line = f"{status}  criterion {number:2d}  {title}"
        terminalreporter.write_line(f"{line}: {detail}" if detail else line)
