import sys
from pathlib import Path

import pytest

from tempstream.pddl import parse_domain, parse_problem, parse_streams
from tempstream.sexpr import SourceText
from tempstream.temporal import load_config

ROOT = Path(__file__).resolve().parent.parent
DOMAINS = ROOT / "domains"
DATA = ROOT / "data"
sys.path.insert(0, str(Path(__file__).resolve().parent))


def load(name):
    return SourceText.from_path(DOMAINS / name)


@pytest.fixture(scope="session")
def washing():
    dom = parse_domain(load("washing.pddl"))
    return dom, parse_problem(load("washing-problem.pddl"), dom)


@pytest.fixture(scope="session")
def electrochem():
    dom = parse_domain(load("electrochem.pddl"))
    prob = parse_problem(load("electrochem-problem.pddl"), dom)
    specs = parse_streams(load("electrochem.stream"), dom)
    cfg = load_config(DOMAINS / "electrochem.toml")
    return dom, prob, specs, cfg


@pytest.fixture(scope="session")
def electrochem_plans(electrochem):
    from tempstream.planner import solve_temporal

    dom, prob, specs, cfg = electrochem
    return {mode: solve_temporal(dom, prob, specs, cfg, mode=mode) for mode in ("sequential", "parallel")}


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
