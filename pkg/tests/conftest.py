import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = {}


def record_acceptance(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture(scope="session")
def small_certificate(tmp_path_factory):
    """A quick proof (N = 20, m = 80) on [1.2, 1.20025] written through the CLI."""
    from bridgeorbit.cli_io import main

    path = tmp_path_factory.mktemp("cert") / "small.json"
    code = main(["prove", "--beta0", "1.2", "--beta1", "1.20025", "--N", "20", "--m", "80",
                 "--out", str(path)])
    assert code == 0
    return path


@pytest.fixture(scope="session")
def small_pair(small_certificate):
    from bridgeorbit.records import load_records, read_record

    return read_record(load_records(small_certificate)[0])
