import re

_CRITERIA: dict[int, tuple[str, bool]] = {}


def record_criterion(number: int, label: str, passed: bool) -> None:
    _CRITERIA[number] = (label, passed)


def pytest_runtest_makereport(item, call):
    if call.when != "call":
        return
    match = re.match(r"test_criterion_(\d+)", item.name)
    if match:
        number = int(match.group(1))
        label, _ = _CRITERIA.get(number, (item.name, True))
        _CRITERIA[number] = (label, call.excinfo is None)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        label, passed = _CRITERIA[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} [{status}] {label}")
