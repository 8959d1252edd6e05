from __future__ import annotations

import time
from pathlib import Path

import numpy as np
import pytest

from imn.data import AspectInstance
from imn.model import IMN, ModelConfig, build_model
from imn.synthetic import FISH_EXAMPLE
from imn.vocab import build_vocab

# ---------------------------------------------------------------------------
# shared small-model fixtures

TINY = dict(d_general=6, d_domain=4, first_layer=((3, 3), (5, 3)), hidden=5, kernel=5)


def tiny_config(**overrides) -> ModelConfig:
    return ModelConfig(**{**TINY, **overrides})


SENTENCES = [
    FISH_EXAMPLE,
    AspectInstance(["great", "food", "."], ["BP", "BA", "O"], ["none", "pos", "none"]),
    AspectInstance(["the", "wine", "list", "is", "okay"], ["O", "BA", "IA", "O", "BP"],
                   ["none", "neu", "neu", "none", "none"]),
]


@pytest.fixture
def vocab():
    return build_vocab([[t for s in SENTENCES for t in s.tokens],
                        "great phone tasty soup the battery died restaurant electronics".split()])


@pytest.fixture
def make_model(vocab):
    def make(seed: int = 0, **overrides) -> IMN:
        return build_model(tiny_config(**overrides), vocab, np.random.default_rng(seed))
    return make


# ---------------------------------------------------------------------------
# one overfit CLI run on the fixture corpus, shared by the CLI and acceptance tests

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def overfit_run(tmp_path_factory):
    """Train with ``fixtures/fixture.cfg`` (default hyperparameters, 300 epochs)."""
    from imn.cli import main

    out = tmp_path_factory.mktemp("overfit")
    start = time.perf_counter()
    code = main(["train", "--config", str(FIXTURES / "fixture.cfg"), "--set", f"checkpoint_dir={out}"])
    return {"code": code, "dir": out, "seconds": time.perf_counter() - start}


# ---------------------------------------------------------------------------
# acceptance criteria report: one line per criterion at the end of the run

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "outcomes": []})
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        if call.excinfo is None:
            entry["outcomes"].append("passed")
        elif call.excinfo.errisinstance(pytest.skip.Exception):
            entry["outcomes"].append("skipped")
        else:
            entry["outcomes"].append("failed")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        outcomes = entry["outcomes"]
        if not outcomes:
            status = "NOT RUN"
        elif "failed" in outcomes:
            status = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"criterion {number}: {status:<7} {entry['title']}")
