"""Shared fixtures: one default pipeline run per test session."""

from __future__ import annotations

from dataclasses import dataclass

import pytest
from hypothesis import settings as hyp_settings

from lpv_lanekeep import pipeline as pl
from lpv_lanekeep.config import Settings, parse_config
from lpv_lanekeep.polytope import Polytope
from lpv_lanekeep.scheduling import PcaReduction, Trajectory

hyp_settings.register_profile("default", max_examples=60, deadline=None)
hyp_settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@dataclass
class Pipeline:
    settings: Settings
    traj: Trajectory
    reduction: PcaReduction
    poly: Polytope
    design: pl.Design


def build_pipeline() -> Pipeline:
    settings = parse_config()
    traj = pl.collect(settings)
    reduction, poly = pl.reduce(traj, settings)
    design = pl.synthesize(traj, reduction, poly, settings)
    return Pipeline(settings, traj, reduction, poly, design)


@pytest.fixture(scope="session")
def default_pipeline() -> Pipeline:
    return build_pipeline()


@pytest.fixture(scope="session")
def default_runs(default_pipeline):
    """Default interchange runs for both controllers: ``{kind: (log, metrics)}``."""
    p = default_pipeline
    return {kind: pl.simulate(p.settings, kind, p.design, p.reduction, p.poly)
            for kind in ("lpv", "lti")}


@pytest.fixture
def acceptance_line():
    def emit(line: str) -> None:
        ACCEPTANCE_LINES.append(line)
        print(line)
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
