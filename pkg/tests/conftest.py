import socket

import pytest

_criteria: list[tuple[str, str, str]] = []


class NetworkBlocked(RuntimeError):
    pass


def _refuse(*args, **kwargs):
    raise NetworkBlocked("tests must not touch the network")


@pytest.fixture(autouse=True, scope="session")
def _no_network():
    mp = pytest.MonkeyPatch()
    mp.setattr(socket.socket, "connect", _refuse)
    mp.setattr(socket.socket, "connect_ex", _refuse)
    mp.setattr(socket, "create_connection", _refuse)
    yield
    mp.undo()


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        props = dict(report.user_properties)
        name = props.get("criterion", report.nodeid.rsplit("::", 1)[-1])
        verdict = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
        _criteria.append((name, verdict, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, detail in _criteria:
        terminalreporter.write_line(f"{verdict}  {name}" + (f"  ({detail})" if detail else ""))
