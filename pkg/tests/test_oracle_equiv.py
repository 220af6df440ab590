"""Differential tests: engine simulation vs the naive oracle."""

from pathlib import Path

import pytest

from cookiegate.oracle import oracle_simulate
from cookiegate.policy import PolicyKind
from cookiegate.psl import bundled_rules
from cookiegate.replay import load_trace, parse_trace, simulate

from tracegen import random_traces

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
RULES = bundled_rules()


@pytest.mark.parametrize("policy", list(PolicyKind))
def test_oracle_matches_on_fixture(policy):
    trace = load_trace(str(FIXTURES / "osn-widget.json"))
    engine = simulate(trace, policy, RULES)
    oracle = oracle_simulate(trace, policy, RULES)
    assert engine.comparable_dict() == oracle.comparable_dict()


def test_oracle_matches_on_empty_trace():
    trace = parse_trace('{"pages": [{"seq": 1, "top_level_url": "http://pub.com/"}]}')
    for policy in PolicyKind:
        assert (
            simulate(trace, policy, RULES).comparable_dict()
            == oracle_simulate(trace, policy, RULES).comparable_dict()
        )


def test_oracle_matches_on_random_traces():
    # quick development run; the acceptance suite runs the full 1,000
    for trace in random_traces(150, seed=7):
        for policy in PolicyKind:
            engine = simulate(trace, policy, RULES)
            oracle = oracle_simulate(trace, policy, RULES)
            assert engine.comparable_dict() == oracle.comparable_dict(), (
                f"divergence under {policy.value}"
            )
