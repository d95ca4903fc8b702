import functools
import sys

import pytest

from cadgraph import synth


@functools.lru_cache(maxsize=None)
def synth_case(name: str):
    specs = {**synth.suite(), **synth.adversarial_suite()}
    return synth.generate(specs[name])


@pytest.fixture(scope="session")
def linear_case():
    return synth_case("linear_chain")


@pytest.fixture(scope="session")
def bolt_case():
    return synth_case("bolt_cluster")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
