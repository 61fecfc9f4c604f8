import re

ACCEPTANCE = []


def _order(line):
    num, suffix = re.match(r"criterion (\d+)(\w*)", line).groups()
    return int(num), suffix


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=_order):
        terminalreporter.write_line(line)
