import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Replays the acceptance verdict lines after the run.

    The criterion tests print their lines as they go, but pytest's fd-level
    capture swallows stdout for passing tests; the terminal reporter is the
    one channel that always reaches the user.
    """
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None) if mod else None
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in verdicts:
            terminalreporter.write_line(line)
