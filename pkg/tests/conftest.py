import collections

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance summary -----------------------------------------------------
# test_acceptance.py names its tests test_criterion_NN_*; after the run we
# print one PASS/FAIL line per criterion.

_acceptance = collections.OrderedDict()


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance" in report.nodeid and name.startswith("test_criterion_"):
        key = name[len("test_criterion_"):]
        crit, _, label = key.partition("_")
        outcome = "PASS" if report.passed else "FAIL"
        _acceptance[int(crit)] = (label.replace("_", " "), outcome)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for crit in sorted(_acceptance):
        label, outcome = _acceptance[crit]
        terminalreporter.write_line(f"criterion {crit:2d} [{label}]: {outcome}")
