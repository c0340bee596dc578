import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> list of (passed, test name)
_ACCEPTANCE = {}


def pytest_configure(config):
    for i in range(1, 10):
        config.addinivalue_line("markers", f"criterion_{i}: acceptance criterion {i}")


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and not report.passed):
        for key in report.keywords:
            if key.startswith("criterion_"):
                number = int(key.split("_")[1])
                _ACCEPTANCE.setdefault(number, []).append(
                    (report.passed, report.nodeid.split("::")[-1])
                )


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        results = _ACCEPTANCE[number]
        ok = all(passed for passed, _ in results)
        names = ", ".join(name for _, name in results)
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  [{names}]")
