import pytest

_VERDICTS: list[str] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    criterion = item.get_closest_marker('criterion')
    if criterion is None or report.when != 'call':
        return
    number, title = criterion.args
    verdict = 'PASS' if report.passed else 'FAIL'
    line = f'{verdict} criterion {number}: {title}'
    # Prefer the test's own line, which carries its measured numbers.
    for printed in report.capstdout.splitlines():
        if printed.startswith(line):
            line = printed
    _VERDICTS.append(line)


def pytest_configure(config):
    config.addinivalue_line('markers', 'criterion(number, title): acceptance criterion')


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section('acceptance')
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[2].rstrip(':'))):
            terminalreporter.write_line(line)
