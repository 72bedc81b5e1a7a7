"""Durative start/end transformation of instantaneous action schemas.

Every action ``a`` becomes ``a-start`` and ``a-end``.  The start claims the
acting agent(s) at the current global time ``(at_time ?t)`` and pays the
time-varying cost ``cost_start_a(t) = t``; the end applies ``a``'s effects,
releases the agent(s), advances the global clock through the eagerly
certified ``update_time_a`` relation and pays ``cost_end_a = D_a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .pddl import (
    TOTAL_COST,
    ActionSchema,
    Atom,
    ConditionalEffect,
    Domain,
    Effect,
    FunctionTerm,
    Literal,
    PredicateDecl,
    Problem,
    StreamSpec,
    StreamSpecSet,
    TypedName,
)

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

TIMING = "timing"
DEFAULT_HORIZON_UNITS = 40


class DurativeError(Exception):
    pass


def quantize_duration(seconds: float, unit_T: float) -> int:
    """Number of time units needed to cover ``seconds`` (45 s at T=60 is 1T, 150 s is 3T)."""
    if seconds <= 0:
        raise DurativeError(f"duration must be positive, got {seconds}")
    if unit_T <= 0:
        raise DurativeError(f"unit_T must be positive, got {unit_T}")
    return math.ceil(round(seconds / unit_T, 9))


def timing_name(seconds: int) -> str:
    return f"t{int(seconds)}"


def timing_value(name: str) -> int:
    if not name.startswith("t") or not name[1:].isdigit():
        raise DurativeError(f"not a timing object: {name!r}")
    return int(name[1:])


def _as_int(value, what: str) -> int:
    if isinstance(value, float):
        if not value.is_integer():
            raise DurativeError(f"{what} must be a whole number of seconds, got {value}")
        value = int(value)
    return value


@dataclass(frozen=True)
class DurativeConfig:
    unit_T: int = 60
    t_max: int | None = None
    durations: Mapping[str, float] = field(default_factory=dict)
    # action name -> parameter names of the acting agent(s)
    agents: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        unit = _as_int(self.unit_T, "unit_T")
        if unit <= 0:
            raise DurativeError("unit_T must be positive")
        t_max = DEFAULT_HORIZON_UNITS * unit if self.t_max is None else _as_int(self.t_max, "t_max")
        if t_max < 0 or t_max % unit:
            raise DurativeError(f"t_max ({t_max}) must be a non-negative multiple of unit_T ({unit})")
        for name, d in self.durations.items():
            if d <= 0:
                raise DurativeError(f"duration of {name!r} must be positive")
        agents = {}
        for name, params in self.agents.items():
            if isinstance(params, str):
                params = (params,)
            agents[name.lower()] = tuple(p.lower() if p.startswith("?") else "?" + p.lower() for p in params)
        object.__setattr__(self, "unit_T", unit)
        object.__setattr__(self, "t_max", t_max)
        object.__setattr__(self, "durations", {k.lower(): v for k, v in self.durations.items()})
        object.__setattr__(self, "agents", agents)

    def duration(self, action: str) -> int:
        """Quantized duration D_a in seconds."""
        try:
            seconds = self.durations[action]
        except KeyError:
            raise DurativeError(f"no duration configured for action {action!r}") from None
        return quantize_duration(seconds, self.unit_T) * self.unit_T

    def grid(self) -> list[int]:
        return list(range(0, self.t_max + 1, self.unit_T))

    def to_dict(self) -> dict:
        return {
            "unit_T": self.unit_T,
            "t_max": self.t_max,
            "durations": dict(sorted(self.durations.items())),
            "agents": {k: [p[1:] for p in v] for k, v in sorted(self.agents.items())},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DurativeConfig":
        return cls(
            unit_T=data.get("unit_T", 60),
            t_max=data.get("t_max"),
            durations=dict(data.get("durations", {})),
            agents={k: tuple([v] if isinstance(v, str) else v) for k, v in data.get("agents", {}).items()},
        )


def load_config(path, unit_T: int | None = None, t_max: int | None = None) -> DurativeConfig:
    data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    if unit_T is not None:
        data["unit_T"] = unit_T
    if t_max is not None:
        data["t_max"] = t_max
    return DurativeConfig.from_dict(data)


def default_config(dom: Domain, unit_T: int = 60, t_max: int | None = None) -> DurativeConfig:
    """Every action takes 1T and is performed by its first parameter."""
    return DurativeConfig(
        unit_T=unit_T,
        t_max=t_max,
        durations={a.name: unit_T for a in dom.actions},
        agents={a.name: (a.parameters[0].name,) if a.parameters else () for a in dom.actions},
    )


@dataclass(frozen=True)
class Bookkeeping:
    at_time: str = "at_time"
    is_free: str = "is_free"
    agent_at_time: str = "agent_at_time"
    running: str = "running_"


@dataclass(frozen=True)
class DurativeDomain:
    base: Domain
    domain: Domain
    config: DurativeConfig
    streams: StreamSpecSet
    agents: Mapping[str, tuple[str, ...]]
    names: Bookkeeping

    @staticmethod
    def start_name(action: str) -> str:
        return f"{action}-start"

    @staticmethod
    def end_name(action: str) -> str:
        return f"{action}-end"

    def bookkeeping_predicates(self) -> set[str]:
        n = self.names
        preds = {n.at_time, n.is_free, n.agent_at_time}
        preds |= {n.running + a.name for a in self.base.actions}
        return preds

    def agent_objects(self, prob: Problem) -> list[str]:
        agent_types = set()
        for a in self.base.actions:
            ptype = {p.name: p.type for p in a.parameters}
            agent_types.update(ptype[ag] for ag in self.agents[a.name])
        found = []
        for tn in list(self.base.constants) + list(prob.objects):
            if any(self.base.is_subtype(tn.type, t) for t in agent_types):
                found.append(tn.name)
        return found

    def problem(self, prob: Problem) -> Problem:
        """The base problem plus timing objects, the clock at t0 and every agent free."""
        timing = tuple(TypedName(timing_name(t), TIMING) for t in self.config.grid())
        init = set(prob.init)
        init.add(Atom(self.names.at_time, (timing_name(0),)))
        init.update(Atom(self.names.is_free, (o,)) for o in self.agent_objects(prob))
        return Problem(
            name=prob.name,
            domain_name=self.domain.name,
            objects=tuple(prob.objects) + timing,
            init=frozenset(init),
            goal=prob.goal,
            init_values=dict(prob.init_values),
        )


def _fresh(base: str, taken: set[str]) -> str:
    name = base
    while name in taken:
        name = "dur_" + name
    return name


def _fresh_var(base: str, taken: set[str]) -> str:
    name = base
    while name in taken:
        name += "_"
    return name


def _strip_costs(eff: Effect) -> Effect:
    return Effect(
        eff.literals,
        tuple(ConditionalEffect(c.condition, _strip_costs(c.effect)) for c in eff.conditional),
        None,
    )


def make_durative(dom: Domain, cfg: DurativeConfig) -> DurativeDomain:
    if TIMING in dom.types and dom.types[TIMING] != "object":
        raise DurativeError("type 'timing' is already declared with another parent")
    pred_names = {p.name for p in dom.predicates}
    running = "running_"
    while any(running + a.name in pred_names for a in dom.actions):
        running = "dur_" + running
    names = Bookkeeping(
        at_time=_fresh("at_time", pred_names),
        is_free=_fresh("is_free", pred_names),
        agent_at_time=_fresh("agent_at_time", pred_names),
        running=running,
    )
    action_names = {a.name for a in dom.actions}
    for a in dom.actions:
        for derived in (DurativeDomain.start_name(a.name), DurativeDomain.end_name(a.name)):
            if derived in action_names:
                raise DurativeError(f"action name {derived!r} collides with a transformed action")

    agents: dict[str, tuple[str, ...]] = {}
    for a in dom.actions:
        cfg.duration(a.name)  # raises when missing
        if a.name not in cfg.agents:
            raise DurativeError(f"no agent parameter configured for action {a.name!r}")
        params = {p.name for p in a.parameters}
        for ag in cfg.agents[a.name]:
            if ag not in params:
                raise DurativeError(f"agent parameter {ag} is not a parameter of action {a.name!r}")
        agents[a.name] = cfg.agents[a.name]
    for name in cfg.durations:
        if name not in action_names:
            raise DurativeError(f"configured action {name!r} does not exist in domain {dom.name!r}")

    t_type = TypedName("?t", TIMING)
    predicates = list(dom.predicates) + [
        PredicateDecl(names.at_time, (t_type,)),
        PredicateDecl(names.is_free, (TypedName("?agent"),)),
        PredicateDecl(names.agent_at_time, (TypedName("?agent"), t_type)),
    ]
    functions = [f for f in dom.functions if f.name != TOTAL_COST]
    functions.insert(0, PredicateDecl(TOTAL_COST))
    actions: list[ActionSchema] = []
    streams: list[StreamSpec] = []

    for a in dom.actions:
        taken = {p.name for p in a.parameters}
        v_t = _fresh_var("?t", taken)
        v_at = _fresh_var("?agent_t", taken | {v_t})
        v_nt = _fresh_var("?new_t", taken | {v_t, v_at})
        pnames = tuple(p.name for p in a.parameters)
        ags = agents[a.name]
        update_pred = f"update_time_{a.name}"
        running_pred = names.running + a.name
        cost_start, cost_end = f"cost_start_{a.name}", f"cost_end_{a.name}"

        predicates.append(PredicateDecl(
            update_pred, (TypedName("?agent_t", TIMING), TypedName("?t", TIMING), TypedName("?new_t", TIMING))
        ))
        predicates.append(PredicateDecl(running_pred, tuple(a.parameters) + (TypedName(v_t, TIMING),)))
        functions.append(PredicateDecl(cost_start, (t_type,)))
        functions.append(PredicateDecl(cost_end))

        start_pre = list(a.precondition)
        start_pre.append(Literal(Atom(names.at_time, (v_t,))))
        start_pre += [Literal(Atom(names.is_free, (ag,))) for ag in ags]
        start_eff = [Literal(Atom(names.is_free, (ag,)), True) for ag in ags]
        start_eff += [Literal(Atom(names.agent_at_time, (ag, v_t))) for ag in ags]
        start_eff.append(Literal(Atom(running_pred, pnames + (v_t,))))
        actions.append(ActionSchema(
            DurativeDomain.start_name(a.name),
            tuple(a.parameters) + (TypedName(v_t, TIMING),),
            tuple(start_pre),
            Effect(tuple(start_eff), (), FunctionTerm(cost_start, (v_t,))),
        ))

        base_eff = _strip_costs(a.effect)
        end_pre = list(a.precondition)
        end_pre.append(Literal(Atom(names.at_time, (v_t,))))
        for ag in ags:
            end_pre.append(Literal(Atom(names.is_free, (ag,)), True))
            end_pre.append(Literal(Atom(names.agent_at_time, (ag, v_at))))
        end_pre.append(Literal(Atom(running_pred, pnames + (v_at,))))
        end_pre.append(Literal(Atom(update_pred, (v_at, v_t, v_nt))))
        end_eff = list(base_eff.literals)
        for ag in ags:
            end_eff.append(Literal(Atom(names.agent_at_time, (ag, v_at)), True))
            end_eff.append(Literal(Atom(names.is_free, (ag,))))
        end_eff.append(Literal(Atom(running_pred, pnames + (v_at,)), True))
        swap = ConditionalEffect(
            (Literal(Atom("=", (v_t, v_nt)), True),),
            Effect((Literal(Atom(names.at_time, (v_t,)), True), Literal(Atom(names.at_time, (v_nt,))))),
        )
        actions.append(ActionSchema(
            DurativeDomain.end_name(a.name),
            tuple(a.parameters) + tuple(TypedName(v, TIMING) for v in (v_at, v_t, v_nt)),
            tuple(end_pre),
            Effect(tuple(end_eff), base_eff.conditional + (swap,), FunctionTerm(cost_end, ())),
        ))

        streams.append(StreamSpec(
            name=update_pred,
            kind="eager",
            inputs=(TypedName("?agent_t", TIMING), TypedName("?t", TIMING)),
            outputs=(TypedName("?new_t", TIMING),),
            certified_facts=(Atom(update_pred, ("?agent_t", "?t", "?new_t")),),
            generator="update_time",
            params={"action": a.name},
        ))

    types = dict(dom.types)
    types[TIMING] = "object"
    requirements = set(dom.requirements) | {
        ":typing", ":negative-preconditions", ":equality", ":conditional-effects", ":action-costs"
    }
    domain = Domain(
        name=dom.name,
        requirements=frozenset(requirements),
        types=types,
        constants=dom.constants,
        predicates=tuple(predicates),
        functions=tuple(functions),
        actions=tuple(actions),
    )
    return DurativeDomain(dom, domain, cfg, StreamSpecSet(tuple(streams)), agents, names)
