import numpy as np
import pytest

from fsood.synth import SynthConfig, synth_bundle


@pytest.fixture(scope="session")
def small_cfg():
    return SynthConfig(n_classes=3, train_per_class=10, test_per_class=8, d_o=6, d_ft=5, n_ood=12, n_ood_sets=2, seed=3)


@pytest.fixture(scope="session")
def small_bundle(small_cfg):
    return synth_bundle(small_cfg)


@pytest.fixture(scope="session")
def default_bundle():
    return synth_bundle(SynthConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary: one PASS/FAIL line per criterion ---------------------

_criteria = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when not in ("setup", "call"):
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "tests": 0, "failed": []})
    if call.when == "call":
        entry["tests"] += 1
    if call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception):
        entry["ok"] = False
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "PASS" if e["ok"] and e["tests"] else "FAIL"
        line = f"[{status}] criterion {number}: {e['title']} ({e['tests']} checks)"
        if e["failed"]:
            line += " failed: " + ", ".join(e["failed"])
        terminalreporter.write_line(line)
