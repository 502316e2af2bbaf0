import os
import sys

from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import MEASURED
    except ImportError:
        return
    if not MEASURED:
        return
    terminalreporter.section("acceptance measurements")
    for key in sorted(MEASURED):
        terminalreporter.write_line(f"{key}: {MEASURED[key]}")
