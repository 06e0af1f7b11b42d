import pytest

_RESULTS: dict[str, tuple[str, str]] = {}


def pytest_addoption(parser):
    parser.addoption("--skip-slow", action="store_true", default=False,
                     help="skip the long PPO training acceptance criteria")


def pytest_collection_modifyitems(config, items):
    if not config.getoption("--skip-slow"):
        return
    skip = pytest.mark.skip(reason="long training run skipped with --skip-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        if report.skipped:
            outcome = "SKIP"
            if isinstance(report.longrepr, tuple):
                detail = detail or report.longrepr[2]
        else:
            outcome = "PASS" if report.passed else "FAIL"
        _RESULTS[name] = (outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_RESULTS):
        outcome, detail = _RESULTS[name]
        number = name.split("_")[2]
        terminalreporter.write_line(f"criterion {int(number):2d}: {outcome}  {name[len('test_criterion_00_'):]}"
                                    + (f"  [{detail}]" if detail else ""))
