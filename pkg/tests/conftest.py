import os
import re
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("repo", deadline=None, derandomize=True, print_blob=True)
settings.load_profile("repo")

_ACCEPTANCE = pytest.StashKey[dict]()


def _order(key):
    num, tail = re.match(r"(\d+)(.*)", key).groups()
    return int(num), tail


@pytest.fixture
def verdict(request):
    """Record one acceptance line; printed again in the terminal summary."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(key, passed, detail):
        line = f"criterion {key:<3s} {'PASS' if passed else 'FAIL'}  {detail}"
        store[key] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for key in sorted(store, key=_order):
            terminalreporter.write_line(store[key])
