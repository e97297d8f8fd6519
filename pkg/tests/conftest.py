from __future__ import annotations

import os
from collections import defaultdict
from pathlib import Path

import pytest

from jellybench.config import CACHE_ENV, ExperimentConfig
from jellybench.synthetic import make_synthetic_dataset

_CRITERIA: dict[int, dict] = defaultdict(lambda: {"title": "", "outcomes": []})


def pytest_configure(config):
    # a developer's cache override must not leak into test runs
    os.environ.pop(CACHE_ENV, None)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA[number]
    entry["title"] = title
    if report.when == "call" or (report.when == "setup" and not report.passed):
        reason = ""
        if report.skipped and isinstance(report.longrepr, tuple):
            reason = report.longrepr[2]
        entry["outcomes"].append((report.outcome, reason))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        outcomes = [o for o, _ in entry["outcomes"]]
        if "failed" in outcomes:
            verdict = "FAIL"
        elif outcomes and all(o == "skipped" for o in outcomes):
            verdict = "SKIP"
        elif outcomes:
            verdict = "PASS"
        else:
            verdict = "NOT RUN"
        reasons = sorted({r for o, r in entry["outcomes"] if o == "skipped" and r})
        tail = f"  ({'; '.join(reasons)})" if verdict == "SKIP" and reasons else ""
        terminalreporter.write_line(f"criterion {number}: {verdict:<7} {entry['title']}{tail}")


@pytest.fixture(scope="session")
def synthetic_root(tmp_path_factory) -> Path:
    return make_synthetic_dataset(tmp_path_factory.mktemp("synthetic") / "jellyfish", seed=0)


def synthetic_config(root: Path, out: Path, **overrides) -> ExperimentConfig:
    data = {
        "dataset_root": str(root),
        "output_dir": str(out),
        "cache_dir": str(out / "cache"),
        "weights": "random",
        "seed": 7,
        "augmentation": {"target_count": 24},
        "extract_batch_size": 16,
    }
    data.update(overrides)
    return ExperimentConfig.from_dict(data)


@pytest.fixture(scope="session")
def full_grid(synthetic_root, tmp_path_factory):
    """The whole 44-cell grid on the synthetic fixture with seeded random backbones."""
    from jellybench.experiment import run_experiment

    cfg = synthetic_config(synthetic_root, tmp_path_factory.mktemp("grid_a"))
    return cfg, run_experiment(cfg)
