"""The planning loop: eager costs, optimistic streams, search, stream binding.

In parallel mode the domain goes through the durative start/end transform and
the search minimizes the sum of start time plus duration over all actions.
Sequential mode keeps the instantaneous domain, charges each action its
duration and executes the resulting plan back to back.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Mapping

from .model import GroundAction, GroundTask, InapplicableAction, State, apply, ground_task, holds_literal
from .pddl import Atom, Domain, Literal, Problem, StreamSpecSet, parse_atom
from .search import PlanPrefix, SearchConfig, weighted_astar
from .streams import (
    FactSet,
    StreamInstance,
    StreamRegistry,
    bind_stream,
    eval_eager,
    instantiate_optimistic,
    is_optimistic,
)
from .temporal import DurativeConfig, DurativeDomain, make_durative, timing_value

log = logging.getLogger(__name__)

MODES = ("sequential", "parallel")
PHASES = ("start", "end", "instantaneous")


class PlanningError(Exception):
    pass


class IterationLimitExceeded(PlanningError):
    def __init__(self, limit: int):
        super().__init__(f"no bound plan after {limit} iterations")
        self.limit = limit


@dataclass(frozen=True)
class PlanStep:
    name: str
    args: tuple[str, ...]
    phase: str
    t_start: int
    duration: int
    agents: tuple[str, ...] = ()
    # timing arguments of the durative ground action: (t) for a start,
    # (t_agent, t, t_new) for an end, empty for instantaneous steps
    timing: tuple[str, ...] = ()
    action: GroundAction | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")

    @property
    def ground_name(self) -> str:
        if self.phase == "instantaneous":
            return self.name
        return f"{self.name}-{self.phase}"

    @property
    def ground_args(self) -> tuple[str, ...]:
        return self.args + self.timing

    def __str__(self):
        head = self.name if self.phase == "instantaneous" else f"{self.name}:{self.phase}"
        return "(" + " ".join((head,) + self.args) + ")"

    def to_json(self) -> dict:
        return {
            "action": self.name,
            "args": list(self.args),
            "phase": self.phase,
            "t_start": self.t_start,
            "duration": self.duration,
            "agents": list(self.agents),
            "timing": list(self.timing),
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "PlanStep":
        return cls(d["action"], tuple(d["args"]), d["phase"], int(d["t_start"]), int(d["duration"]),
                   tuple(d.get("agents", ())), tuple(d.get("timing", ())))


@dataclass(frozen=True)
class Plan:
    steps: tuple[PlanStep, ...]
    cost: int
    mode: str
    # stream-certified facts (and the objects they introduce) the plan relies on
    certified: tuple[Atom, ...] = ()
    objects: Mapping[str, str] = field(default_factory=dict)
    config: DurativeConfig | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    def __len__(self):
        return len(self.steps)

    @property
    def actions(self) -> list[PlanStep]:
        """One step per executed action (the start of each start/end pair)."""
        return [s for s in self.steps if s.phase != "end"]

    @property
    def makespan(self) -> int:
        return max((s.t_start + s.duration for s in self.steps), default=0)

    def to_json(self) -> dict:
        return {
            "steps": [s.to_json() for s in self.steps],
            "cost": self.cost,
            "makespan": self.makespan,
            "mode": self.mode,
            "certified": [str(a) for a in sorted(self.certified)],
            "objects": dict(sorted(self.objects.items())),
            "config": self.config.to_dict() if self.config else None,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    @classmethod
    def from_json(cls, d: Mapping) -> "Plan":
        cfg = DurativeConfig.from_dict(d["config"]) if d.get("config") else None
        return cls(
            tuple(PlanStep.from_json(s) for s in d["steps"]),
            int(d["cost"]),
            d["mode"],
            tuple(parse_atom(a) for a in d.get("certified", ())),
            dict(d.get("objects", {})),
            cfg,
        )

    @classmethod
    def loads(cls, text: str) -> "Plan":
        return cls.from_json(json.loads(text))


def plan_total_cost(plan: Plan) -> int:
    """Sum over executed actions of start time plus duration."""
    return sum(s.t_start + s.duration for s in plan.actions)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    failed_step: int | None = None  # 1-based
    failed_literal: str | None = None
    reason: str = ""
    goal_satisfied: bool = False
    cost: float = 0

    def __str__(self):
        if self.valid:
            return f"plan valid, goal satisfied, cost {_num(self.cost)}"
        if self.failed_step is not None:
            return f"plan invalid at step {self.failed_step}: {self.reason}"
        return f"plan invalid: {self.reason}"


def _num(x):
    return int(x) if float(x).is_integer() else x


def validate_plan(plan: Plan, task: GroundTask) -> ValidationReport:
    """Replay ``plan`` from the task's initial state; never raises on a bad plan."""
    state = task.init
    for i, step in enumerate(plan.steps, start=1):
        ga = task.by_key.get((step.ground_name, step.ground_args))
        if ga is None:
            return ValidationReport(False, i, None, f"{step} is not an action of the task (unknown or unreachable)")
        try:
            state = apply(state, ga)
        except InapplicableAction as exc:
            shown = exc.lifted if exc.lifted is not None else exc.literal
            return ValidationReport(False, i, str(shown), f"precondition {shown} of {step} does not hold")
    goal_ok = all(holds_literal(state.atoms, lit) for lit in task.goal)
    if not goal_ok:
        missing = next(str(l) for l in task.goal if not holds_literal(state.atoms, l))
        return ValidationReport(False, None, missing, f"goal {missing} does not hold at the end",
                                False, state.total_cost)
    return ValidationReport(True, None, None, "", True, state.total_cost)


# ---------------------------------------------------------------------------
# the loop


@dataclass
class EvaluationResult:
    steps: list[GroundAction] | None
    new_facts: FactSet = field(default_factory=FactSet)
    failed: list[StreamInstance] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.steps is not None


def evaluate_optimistic_plan(steps: list[GroundAction], registry: StreamRegistry) -> EvaluationResult:
    """Bind every placeholder the plan mentions, in plan order.

    On success the plan comes back with placeholders replaced and the newly
    certified facts; on the first failure the failed instance is reported.
    """
    order: list[str] = []
    for ga in steps:
        for arg in ga.args:
            if is_optimistic(arg) and arg not in order:
                order.append(arg)
    if not order:
        return EvaluationResult(list(steps))
    # bind producers before consumers when placeholders feed other streams
    pending = []
    seen = set()

    def visit(placeholder):
        inst = registry.by_placeholder[placeholder]
        if inst.key in seen:
            return
        for x in inst.input_binding:
            if is_optimistic(x):
                visit(x)
        seen.add(inst.key)
        pending.append(inst)

    for p in order:
        visit(p)

    mapping: dict[str, str] = {}
    new = FactSet()
    for inst in pending:
        concrete = tuple(mapping.get(x, x) for x in inst.input_binding)
        target = inst if concrete == inst.input_binding else _concrete_instance(registry, inst, concrete)
        facts = bind_stream(target, registry)
        if facts is None:
            return EvaluationResult(None, new, [inst])
        mapping.update(zip(inst.outputs, target.values))
        new = new | facts
    log.info("bound %d stream instance(s); new facts: %s", len(pending),
             ", ".join(str(a) for a in sorted(new.certified)))
    return EvaluationResult([ga.substitute(mapping) for ga in steps], new)


def _concrete_instance(registry: StreamRegistry, inst: StreamInstance, inputs) -> StreamInstance:
    key = (inst.spec.name, tuple(inputs))
    found = registry.instances.get(key)
    if found is None:
        found = StreamInstance(inst.spec, tuple(inputs), depth=inst.depth)
        registry.instances[key] = found
    return found


@dataclass
class Episode:
    """Planning-domain view shared by solving and validation."""

    mode: str
    base: Domain
    domain: Domain
    problem: Problem
    config: DurativeConfig
    durative: DurativeDomain | None
    eager: FactSet

    def ground(self, extra: FactSet) -> GroundTask:
        task = ground_task(self.domain, self.problem, self.eager | extra)
        if self.mode == "sequential":
            task = task.with_costs(lambda a: self.config.duration(a.name))
        return task


def prepare(dom: Domain, prob: Problem, specs: StreamSpecSet, cfg: DurativeConfig, mode: str,
            registry: StreamRegistry | None = None) -> Episode:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    registry = registry or StreamRegistry(config=cfg)
    if mode == "parallel":
        dd = make_durative(dom, cfg)
        pprob = dd.problem(prob)
        eager = eval_eager(specs + dd.streams, FactSet(pprob.init), cfg, registry)
        return Episode(mode, dom, dd.domain, pprob, cfg, dd, eager)
    for a in dom.actions:
        cfg.duration(a.name)
        if a.name not in cfg.agents:
            raise PlanningError(f"no agent parameter configured for action {a.name!r}")
    return Episode(mode, dom, dom, prob, cfg, None, FactSet())


def solve_temporal(dom: Domain, prob: Problem, specs: StreamSpecSet | None = None,
                   cfg: DurativeConfig | None = None, scfg: SearchConfig | None = None,
                   mode: str = "parallel", registry: StreamRegistry | None = None,
                   iteration_limit: int = 25) -> Plan | None:
    from .temporal import default_config

    specs = specs or StreamSpecSet(())
    cfg = cfg or default_config(dom)
    scfg = scfg or SearchConfig()
    registry = registry or StreamRegistry(config=cfg)
    if registry.config is None:
        registry.config = cfg
    ep = prepare(dom, prob, specs, cfg, mode, registry)
    optimistic = StreamSpecSet(tuple(s for s in specs if s.kind == "optimistic"))

    for iteration in range(1, iteration_limit + 1):
        base = FactSet(ep.problem.init, {}, {}) | ep.eager
        u_star = instantiate_optimistic(optimistic, base, registry)
        task = ep.ground(u_star)
        prefix = weighted_astar(task, scfg)
        if prefix is None:
            if mode == "parallel":
                log.warning("no plan within t_max (%d s)", cfg.t_max)
            else:
                log.warning("no plan exists")
            return None
        log.info("iteration %d: optimistic plan of %d steps, g = %s", iteration, len(prefix.steps), prefix.g)
        result = evaluate_optimistic_plan(prefix.steps, registry)
        if not result.ok:
            for inst in result.failed:
                log.info("stream instance %s failed; blacklisted", inst)
                registry.blacklist.add(inst.key)
            continue
        plan = _build_plan(ep, prefix, result)
        return plan
    raise IterationLimitExceeded(iteration_limit)


def _build_plan(ep: Episode, prefix: PlanPrefix, result: EvaluationResult) -> Plan:
    cfg = ep.config
    steps: list[PlanStep] = []
    params = {a.name: [p.name for p in a.parameters] for a in ep.base.actions}
    if ep.mode == "sequential":
        t = 0
        for ga in result.steps:
            d = cfg.duration(ga.name)
            steps.append(PlanStep(ga.name, ga.args, "instantaneous", t, d,
                                  _agents(cfg, params[ga.name], ga.name, ga.args), (), ga))
            t += d
        if prefix.g != t:
            raise PlanningError(f"search cost {prefix.g} differs from the sequential makespan {t}")
    else:
        for ga in result.steps:
            base, phase = ga.name.rsplit("-", 1)
            n = len(params[base])
            args, timing = ga.args[:n], ga.args[n:]
            t_start = timing_value(timing[0])
            steps.append(PlanStep(base, args, phase, t_start, cfg.duration(base),
                                  _agents(cfg, params[base], base, args), timing, ga))
    objects = {k: v for k, v in result.new_facts.objects.items()}
    plan = Plan(tuple(steps), 0, ep.mode, tuple(sorted(result.new_facts.certified)), objects, cfg)
    cost = plan_total_cost(plan)
    if ep.mode == "parallel" and cost != prefix.g:
        raise PlanningError(f"search cost {prefix.g} differs from the summed start times and durations {cost}")
    return Plan(plan.steps, cost, plan.mode, plan.certified, plan.objects, cfg)


def _agents(cfg: DurativeConfig, params, name, args) -> tuple[str, ...]:
    binding = dict(zip(params, args))
    return tuple(binding[p] for p in cfg.agents.get(name, ()))


def ground_for_plan(dom: Domain, prob: Problem, plan: Plan, specs: StreamSpecSet | None = None) -> GroundTask:
    """Ground task against which a serialized plan can be validated."""
    from .temporal import default_config

    cfg = plan.config or default_config(dom)
    ep = prepare(dom, prob, specs or StreamSpecSet(()), cfg, plan.mode)
    return ep.ground(FactSet(frozenset(plan.certified), {}, dict(plan.objects)))
