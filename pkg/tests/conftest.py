"""Replays the release-criteria verdict lines after the test summary."""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get(
        "tests.test_acceptance"
    )
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("release criteria")
        for line in verdicts:
            terminalreporter.write_line(line)
