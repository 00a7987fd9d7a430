from __future__ import annotations

import numpy as np
import pytest

from stvslab.core import Dataset, Label, ScenarioParams, TimeSeriesInstance
from stvslab import simgen

SCEN = ScenarioParams(1.0, 0.8, 0, 0.0)

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def make_instance(i, series, label=None, truth=None, scenario=SCEN):
    return TimeSeriesInstance(i, scenario, np.asarray(series, dtype=np.float64), label, truth)


def make_dataset(series_list, labels=None, dt_s=0.01):
    arrs = [np.asarray(s, dtype=np.float64) for s in series_list]
    labels = labels or [None] * len(arrs)
    insts = [make_instance(i, s, lab) for i, (s, lab) in enumerate(zip(arrs, labels))]
    m, d = arrs[0].shape
    return Dataset(tuple(insts), d // 3, m, dt_s)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_grid():
    return simgen.GridConfig(n_buses=3, n_lines=2, n_samples=80, m=20, seed=7)


@pytest.fixture(scope="session")
def small_dataset(small_grid):
    return simgen.generate_dataset(small_grid)


@pytest.fixture(scope="session")
def small_labeled(small_dataset):
    return small_dataset.with_instances(i.with_label(i.truth) for i in small_dataset)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


__all__ = ["ACCEPTANCE", "Label", "make_dataset", "make_instance"]
