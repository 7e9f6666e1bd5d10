"""Shared fixtures plus the acceptance-criteria terminal summary."""

from __future__ import annotations

import pytest

from agentrank import PipelineConfig, TemplateSet, TokenOverlapBackend, build_separation_corpus

# Populated by test_acceptance.py; echoed after the run so every criterion
# gets one visible pass/fail line even under output capture.
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def templates() -> TemplateSet:
    return TemplateSet.load()


@pytest.fixture(scope="session")
def separation_corpus():
    """(catalog, log) with ten synthetic users; see agentrank.synth."""
    return build_separation_corpus(num_users=10)


@pytest.fixture()
def mock_backend() -> TokenOverlapBackend:
    return TokenOverlapBackend()


@pytest.fixture()
def pipeline_cfg() -> PipelineConfig:
    """Config sized for the synthetic corpus.

    The history budget is wide enough that the recency baseline sees the
    full 16-event history, not just its session tail.
    """
    return PipelineConfig(max_history_items=16, seed=7)
