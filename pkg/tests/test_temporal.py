from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_durative_config, random_lifted_task, start_end_projection_mismatches
from tempstream.model import apply, ground_task, holds
from tempstream.pddl import Atom, Literal
from tempstream.streams import FactSet, eval_eager
from tempstream.temporal import (
    DurativeConfig,
    DurativeError,
    default_config,
    load_config,
    make_durative,
    quantize_duration,
    timing_name,
    timing_value,
)

from conftest import DOMAINS


@pytest.mark.parametrize("seconds, units", [(45, 1), (60, 1), (61, 2), (120, 2), (150, 3), (180, 3)])
def test_quantize(seconds, units):
    assert quantize_duration(seconds, 60) == units


@pytest.mark.parametrize("seconds", [0, -5])
def test_quantize_rejects_non_positive(seconds):
    with pytest.raises(DurativeError):
        quantize_duration(seconds, 60)


def test_timing_names():
    assert timing_name(120) == "t120"
    assert timing_value("t120") == 120
    with pytest.raises(DurativeError):
        timing_value("beaker1")


@pytest.mark.parametrize("kwargs, message", [
    ({"unit_T": 0}, "positive"),
    ({"unit_T": 60, "t_max": 90}, "multiple"),
    ({"durations": {"wash": 0}}, "positive"),
])
def test_config_invariants(kwargs, message):
    with pytest.raises(DurativeError, match=message):
        DurativeConfig(**kwargs)


def test_default_horizon_is_forty_units():
    cfg = DurativeConfig(unit_T=30)
    assert cfg.t_max == 1200
    assert cfg.grid()[:3] == [0, 30, 60] and cfg.grid()[-1] == 1200


def test_washing_transform(washing):
    dom, _ = washing
    dd = make_durative(dom, default_config(dom))
    assert len(dd.domain.actions) == 6
    start = dd.domain.action("wash-start")
    # washing already declares is_free, so the bookkeeping predicate gets a fresh name
    free = dd.names.is_free
    assert free != "is_free"
    effects = {str(l) for l in start.effect.literals}
    assert f"(not ({free} ?glsw))" in effects
    assert "(agent_at_time ?glsw ?t)" in effects
    assert str(start.effect.cost) == "(cost_start_wash ?t)"
    end = dd.domain.action("wash-end")
    swaps = [c for c in end.effect.conditional if str(c.condition[0]) == "(not (= ?t ?new_t))"]
    assert len(swaps) == 1
    assert {str(l) for l in swaps[0].effect.literals} == {"(not (at_time ?t))", "(at_time ?new_t)"}
    assert "(update_time_wash ?agent_t ?t ?new_t)" in {str(l) for l in end.precondition}
    assert str(end.effect.cost) == "(cost_end_wash)"


def test_missing_duration(washing):
    dom, _ = washing
    cfg = DurativeConfig(durations={"pick": 60, "place": 60}, agents={"pick": "rob", "place": "rob"})
    with pytest.raises(DurativeError, match="wash"):
        make_durative(dom, cfg)


def test_unresolvable_agent(washing):
    dom, _ = washing
    cfg = DurativeConfig(durations={"pick": 60, "place": 60, "wash": 60},
                         agents={"pick": "rob", "place": "rob", "wash": "robot"})
    with pytest.raises(DurativeError, match=r"\?robot"):
        make_durative(dom, cfg)


def test_unknown_configured_action(washing):
    dom, _ = washing
    cfg = default_config(dom)
    cfg = DurativeConfig(durations={**cfg.durations, "dance": 60}, agents=cfg.agents)
    with pytest.raises(DurativeError, match="dance"):
        make_durative(dom, cfg)


def test_load_config(electrochem):
    _, _, _, cfg = electrochem
    assert cfg.unit_T == 60
    assert cfg.agents["measure_redox"] == ("?pot", "?s")
    assert {quantize_duration(v, 60) for v in cfg.durations.values()} == {1, 2, 3}
    again = load_config(DOMAINS / "electrochem.toml", unit_T=30, t_max=600)
    assert (again.unit_T, again.t_max) == (30, 600)
    assert DurativeConfig.from_dict(cfg.to_dict()) == cfg


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_start_end_composition(seed):
    rng = np.random.default_rng(seed)
    dom, prob = random_lifted_task(rng)
    mismatches, _ = start_end_projection_mismatches(dom, prob, random_durative_config(dom, rng, t_max_units=8), rng)
    assert mismatches == []


def test_start_end_composition_washing(washing):
    dom, prob = washing
    mismatches, checked = start_end_projection_mismatches(dom, prob, default_config(dom), np.random.default_rng(0))
    assert mismatches == [] and checked >= 3


def _durative_states(dom, prob, cfg, limit=3000):
    dd = make_durative(dom, cfg)
    dprob = dd.problem(prob)
    eager = eval_eager(dd.streams, FactSet(dprob.init, {}, {}), cfg)
    task = ground_task(dd.domain, dprob, eager)
    seen = {task.init.atoms}
    frontier = [task.init]
    while frontier and len(seen) < limit:
        s = frontier.pop()
        for a in task.actions:
            if holds(s, a.precondition):
                t = apply(s, a)
                if t.atoms not in seen:
                    seen.add(t.atoms)
                    frontier.append(t)
    return dd, seen


def _check_clock_and_exclusivity(dd, states):
    for atoms in states:
        clocks = [a for a in atoms if a.predicate == dd.names.at_time]
        assert len(clocks) == 1
        busy = Counter(a.args[0] for a in atoms if a.predicate == dd.names.agent_at_time)
        assert all(n == 1 for n in busy.values())
        free = {a.args[0] for a in atoms if a.predicate == dd.names.is_free}
        assert not free & set(busy)


def test_clock_and_exclusivity_washing(washing):
    dom, prob = washing
    dd, states = _durative_states(dom, prob, default_config(dom, t_max=480))
    assert len(states) > 10
    _check_clock_and_exclusivity(dd, states)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_clock_and_exclusivity_random(seed):
    rng = np.random.default_rng(seed)
    dom, prob = random_lifted_task(rng)
    dd, states = _durative_states(dom, prob, random_durative_config(dom, rng, t_max_units=6), limit=1500)
    _check_clock_and_exclusivity(dd, states)


def test_joint_action_claims_every_agent(electrochem):
    dom, _, _, cfg = electrochem
    dd = make_durative(dom, cfg)
    start = dd.domain.action("measure_redox-start")
    claimed = {l.atom.args[0] for l in start.effect.literals if l.atom.predicate == dd.names.agent_at_time}
    assert claimed == {"?pot", "?s"}
