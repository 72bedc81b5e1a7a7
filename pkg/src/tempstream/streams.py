"""Eager and optimistic stream evaluation.

Eager streams (time and cost bookkeeping) are enumerated once over the time
grid before search.  Optimistic streams emit placeholder objects ``#o1``,
``#o2``, ... that stand in for sampler outputs until a candidate plan needs
them, at which point :func:`bind_stream` calls the registered generator.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .pddl import Atom, StreamSpec, StreamSpecSet
from .temporal import TIMING, DurativeConfig, timing_name, timing_value

log = logging.getLogger(__name__)

MAX_PLACEHOLDER_DEPTH = 3
PLACEHOLDER_PREFIX = "#o"


class StreamError(Exception):
    pass


class UnknownGenerator(StreamError):
    def __init__(self, name: str):
        super().__init__(f"no generator registered: {name}")
        self.name = name


def is_optimistic(name: str) -> bool:
    return name.startswith(PLACEHOLDER_PREFIX)


@dataclass(frozen=True)
class FactSet:
    certified: frozenset = frozenset()
    function_values: Mapping[tuple, float] = field(default_factory=dict)
    # objects introduced by the facts (timing objects, placeholders, sampled values)
    objects: Mapping[str, str] = field(default_factory=dict)

    def __or__(self, other: "FactSet") -> "FactSet":
        return FactSet(
            self.certified | other.certified,
            {**self.function_values, **other.function_values},
            {**self.objects, **other.objects},
        )

    def __len__(self):
        return len(self.certified)


@dataclass(frozen=True)
class GeneratorContext:
    config: DurativeConfig | None = None
    seed: int = 0


Generator = Callable[[tuple, Mapping, GeneratorContext], Iterable[tuple]]


def update_time(t_agent: int, t: int, T_action: int, t_max: int) -> int | None:
    """New global time after an action started at ``t_agent`` ends while the clock reads ``t``."""
    t_agent_end = t_agent + T_action
    t_new = max(t, t_agent_end)
    if not (t_agent <= t <= t_agent_end) or t_new >= t_max:
        return None
    return t_new


def _gen_update_time(inputs, params, ctx: GeneratorContext):
    if ctx.config is None:
        raise StreamError("update_time needs a durative configuration")
    t_agent, t = (timing_value(x) for x in inputs)
    out = update_time(t_agent, t, ctx.config.duration(params["action"]), ctx.config.t_max)
    if out is not None:
        yield (timing_name(out),)


def _gen_constant(inputs, params, ctx):
    value = params.get("value")
    if value is None:
        return
    yield tuple(value) if isinstance(value, tuple) else (value,)


def _gen_table_lookup(inputs, params, ctx):
    for row in params.get("table", ()):
        row = (row,) if isinstance(row, str) else tuple(row)
        if row[: len(inputs)] == tuple(inputs):
            yield row[len(inputs):]


def _gen_sample_token(inputs, params, ctx):
    for value in params.get("values", ()):
        yield (value,)


BUILTIN_GENERATORS: dict[str, Generator] = {
    "update_time": _gen_update_time,
    "constant": _gen_constant,
    "table-lookup": _gen_table_lookup,
    "sample-token": _gen_sample_token,
}


@dataclass
class StreamInstance:
    spec: StreamSpec
    input_binding: tuple[str, ...]
    outputs: tuple[str, ...] = ()
    status: str = "untried"
    depth: int = 1
    values: tuple[str, ...] | None = None

    @property
    def key(self) -> tuple[str, tuple[str, ...]]:
        return self.spec.name, self.input_binding

    def __str__(self):
        return f"{self.spec.name}({', '.join(self.input_binding)})"

    def certified(self, outputs: tuple[str, ...]) -> frozenset:
        binding = dict(zip((v.name for v in self.spec.inputs), self.input_binding))
        binding.update(zip((v.name for v in self.spec.outputs), outputs))
        return frozenset(a.substitute(binding) for a in self.spec.certified_facts)


class StreamRegistry:
    """Per-episode generator table, optimistic instances and blacklist."""

    def __init__(self, seed: int = 0, config: DurativeConfig | None = None,
                 generators: Mapping[str, Generator] | None = None):
        self.seed = seed
        self.config = config
        self.generators: dict[str, Generator] = dict(BUILTIN_GENERATORS)
        if generators:
            self.generators.update(generators)
        self.instances: dict[tuple, StreamInstance] = {}
        self.by_placeholder: dict[str, StreamInstance] = {}
        self.blacklist: set[tuple] = set()
        self._counter = 0

    def register(self, name: str, fn: Generator):
        self.generators[name] = fn

    def generator(self, name: str) -> Generator:
        try:
            return self.generators[name]
        except KeyError:
            raise UnknownGenerator(name) from None

    @property
    def context(self) -> GeneratorContext:
        return GeneratorContext(self.config, self.seed)

    def new_placeholder(self) -> str:
        self._counter += 1
        return f"{PLACEHOLDER_PREFIX}{self._counter}"

    def optimistic_instance(self, spec: StreamSpec, inputs: tuple[str, ...], depth: int) -> StreamInstance:
        key = (spec.name, inputs)
        inst = self.instances.get(key)
        if inst is None:
            outs = tuple(self.new_placeholder() for _ in spec.outputs)
            inst = StreamInstance(spec, inputs, outs, depth=depth)
            self.instances[key] = inst
            for p in outs:
                self.by_placeholder[p] = inst
        return inst


def _stream_bindings(spec: StreamSpec, facts: Iterable[Atom], objects: Mapping[str, str]):
    """Input bindings satisfying the domain facts; unconstrained timing inputs range over timing objects."""
    by_pred: dict[str, list[tuple]] = {}
    for a in facts:
        by_pred.setdefault(a.predicate, []).append(a.args)

    def rec(i, binding):
        if i == len(spec.domain_facts):
            yield binding
            return
        atom = spec.domain_facts[i]
        for args in by_pred.get(atom.predicate, ()):
            new = dict(binding)
            for term, value in zip(atom.args, args):
                if term.startswith("?"):
                    if new.setdefault(term, value) != value:
                        break
                elif term != value:
                    break
            else:
                yield from rec(i + 1, new)

    free = [v for v in spec.inputs if not any(v.name in a.args for a in spec.domain_facts)]
    pools = []
    for v in free:
        pool = [o for o, t in objects.items() if t == v.type]
        if v.type == TIMING:
            pool.sort(key=timing_value)
        pools.append(pool)
    seen = set()
    for partial in rec(0, {}):
        for combo in itertools.product(*pools):
            binding = dict(partial)
            binding.update(zip((v.name for v in free), combo))
            inputs = tuple(binding[v.name] for v in spec.inputs)
            if inputs not in seen:
                seen.add(inputs)
                yield inputs


def eval_eager(specs: StreamSpecSet, base: FactSet, cfg: DurativeConfig,
               registry: StreamRegistry | None = None) -> FactSet:
    """Certify every eager stream output over the grid plus the start/end cost functions."""
    registry = registry or StreamRegistry(config=cfg)
    ctx = GeneratorContext(cfg, registry.seed)
    timing = {timing_name(t): TIMING for t in cfg.grid()}
    objects = {**base.objects, **timing}
    certified = set()
    for spec in specs:
        if spec.kind != "eager":
            continue
        gen = registry.generator(spec.generator)
        for inputs in _stream_bindings(spec, base.certified, objects):
            inst = StreamInstance(spec, inputs)
            for outputs in gen(inputs, spec.params, ctx):
                outputs = tuple(outputs)
                if any(is_optimistic(o) for o in outputs):
                    raise StreamError(f"eager stream {spec.name} produced a placeholder")
                certified |= inst.certified(outputs)

    values: dict[tuple, float] = {}
    for action in cfg.durations:
        for t in cfg.grid():
            values[(f"cost_start_{action}", (timing_name(t),))] = t
        values[(f"cost_end_{action}", ())] = cfg.duration(action)
    return FactSet(frozenset(certified), values, timing)


def instantiate_optimistic(specs: StreamSpecSet, base: FactSet, registry: StreamRegistry) -> FactSet:
    """Certify optimistic stream outputs with placeholders, to a fixpoint (depth capped)."""
    facts = set(base.certified)
    produced: set[Atom] = set()
    objects: dict[str, str] = {}
    pool = dict(base.objects)
    changed = True
    while changed:
        changed = False
        for spec in specs:
            if spec.kind != "optimistic":
                continue
            for inputs in list(_stream_bindings(spec, facts, pool)):
                if (spec.name, inputs) in registry.blacklist:
                    continue
                depth = 1 + max(
                    (registry.by_placeholder[x].depth for x in inputs if x in registry.by_placeholder),
                    default=0,
                )
                if depth > MAX_PLACEHOLDER_DEPTH:
                    continue
                inst = registry.optimistic_instance(spec, inputs, depth)
                for var, placeholder in zip(spec.outputs, inst.outputs):
                    objects[placeholder] = var.type
                    pool[placeholder] = var.type
                new = inst.certified(inst.outputs) - facts
                if new:
                    facts |= new
                    produced |= new
                    changed = True
    return FactSet(frozenset(produced), {}, objects)


def bind_stream(inst: StreamInstance, registry: StreamRegistry) -> FactSet | None:
    """Run the generator for ``inst``; None (and status ``failed``) when it yields nothing."""
    if inst.status == "bound":
        return FactSet(inst.certified(inst.values), {}, _typed_outputs(inst, inst.values))
    if inst.status == "failed":
        return None
    gen = registry.generator(inst.spec.generator)
    if any(is_optimistic(x) for x in inst.input_binding):
        raise StreamError(f"{inst} has unbound placeholder inputs")
    for outputs in gen(inst.input_binding, inst.spec.params, registry.context):
        inst.values = tuple(outputs)
        inst.status = "bound"
        log.debug("bound %s -> %s", inst, inst.values)
        return FactSet(inst.certified(inst.values), {}, _typed_outputs(inst, inst.values))
    inst.status = "failed"
    log.debug("stream instance %s failed", inst)
    return None


def _typed_outputs(inst: StreamInstance, values) -> dict[str, str]:
    return {v: var.type for var, v in zip(inst.spec.outputs, values)}
