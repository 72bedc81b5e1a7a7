"""Grounding, closed-world states and transitions.

Grounding instantiates every action schema over the typed object universe and
keeps only instances whose positive preconditions are reachable under the
delete relaxation from the initial atoms plus any stream-certified facts.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Mapping

from .pddl import TOTAL_COST, ActionSchema, Atom, Domain, Effect, FunctionTerm, Literal, Problem

if TYPE_CHECKING:
    from .streams import FactSet

log = logging.getLogger(__name__)


class GroundingError(Exception):
    pass


class InapplicableAction(Exception):
    def __init__(self, action: "GroundAction", literal: Literal, lifted: Literal | None = None):
        self.action = action
        self.literal = literal
        self.lifted = lifted
        shown = lifted if lifted is not None else literal
        super().__init__(f"{action} is not applicable: precondition {shown} fails ({literal})")


@dataclass(frozen=True)
class State:
    atoms: frozenset = frozenset()
    total_cost: float = 0

    def __contains__(self, atom: Atom) -> bool:
        return atom in self.atoms


@dataclass(frozen=True)
class GroundConditional:
    condition: tuple[Literal, ...]
    add: frozenset
    delete: frozenset
    cost: float = 0


@dataclass(frozen=True)
class GroundAction:
    name: str
    args: tuple[str, ...]
    precondition: tuple[Literal, ...] = ()
    add: frozenset = frozenset()
    delete: frozenset = frozenset()
    conditional: tuple[GroundConditional, ...] = ()
    cost: float = 0
    lifted_precondition: tuple[Literal, ...] = field(default=(), compare=False, repr=False)

    def __str__(self):
        return "(" + " ".join((self.name,) + self.args) + ")"

    @property
    def key(self) -> tuple[str, tuple[str, ...]]:
        return self.name, self.args

    def substitute(self, mapping: Mapping[str, str]) -> "GroundAction":
        def lits(xs):
            return tuple(l.substitute(mapping) for l in xs)

        def atoms(xs):
            return frozenset(a.substitute(mapping) for a in xs)

        return GroundAction(
            self.name,
            tuple(mapping.get(a, a) for a in self.args),
            lits(self.precondition),
            atoms(self.add),
            atoms(self.delete),
            tuple(
                GroundConditional(lits(c.condition), atoms(c.add), atoms(c.delete), c.cost)
                for c in self.conditional
            ),
            self.cost,
            self.lifted_precondition,
        )


@dataclass(frozen=True)
class GroundTask:
    objects: Mapping[str, str]
    atoms: frozenset
    actions: tuple[GroundAction, ...]
    init: State
    goal: tuple[Literal, ...] = ()

    @cached_property
    def by_key(self) -> dict:
        return {a.key: a for a in self.actions}

    @cached_property
    def compiled(self) -> "CompiledTask":
        return CompiledTask(self)

    def with_costs(self, cost_of) -> "GroundTask":
        """Copy of the task with each action's base cost replaced by ``cost_of(action)``."""
        actions = tuple(
            GroundAction(a.name, a.args, a.precondition, a.add, a.delete, a.conditional,
                         cost_of(a), a.lifted_precondition)
            for a in self.actions
        )
        return GroundTask(self.objects, self.atoms, actions, self.init, self.goal)


# ---------------------------------------------------------------------------
# semantics


def holds_literal(atoms, lit: Literal) -> bool:
    if lit.atom.predicate == "=":
        value = lit.atom.args[0] == lit.atom.args[1]
    else:
        value = lit.atom in atoms
    return value != lit.negated


def holds(s: State, c) -> bool:
    """Evaluate a ground literal or conjunction under the closed-world assumption."""
    if isinstance(c, Literal):
        c = (c,)
    elif isinstance(c, Atom):
        c = (Literal(c),)
    return all(holds_literal(s.atoms, lit) for lit in c)


def apply(s: State, a: GroundAction) -> State:
    for i, lit in enumerate(a.precondition):
        if not holds_literal(s.atoms, lit):
            lifted = a.lifted_precondition[i] if i < len(a.lifted_precondition) else None
            raise InapplicableAction(a, lit, lifted)
    add, delete, cost = set(a.add), set(a.delete), a.cost
    for cond in a.conditional:
        if all(holds_literal(s.atoms, lit) for lit in cond.condition):
            add |= cond.add
            delete |= cond.delete
            cost += cond.cost
    return State(frozenset((s.atoms - delete) | add), s.total_cost + cost)


# ---------------------------------------------------------------------------
# grounding


def _fluent_predicates(dom: Domain) -> set[str]:
    found = set()

    def walk(eff: Effect):
        found.update(l.atom.predicate for l in eff.literals)
        for c in eff.conditional:
            walk(c.effect)

    for a in dom.actions:
        walk(a.effect)
    return found


class _Universe:
    def __init__(self, dom: Domain, objects: Mapping[str, str]):
        self.members: dict[str, list[str]] = {t: [] for t in dom.types}
        for name, typ in objects.items():
            for t in dom.ancestors(typ):
                self.members.setdefault(t, []).append(name)
        self.sets = {t: set(v) for t, v in self.members.items()}

    def of(self, typ: str) -> list[str]:
        return self.members.get(typ, [])


class _Index:
    def __init__(self):
        self.by_pred: dict[str, list[tuple]] = {}
        self.by_pos: dict[tuple, list[tuple]] = {}

    def add(self, atom: Atom):
        self.by_pred.setdefault(atom.predicate, []).append(atom.args)
        for i, v in enumerate(atom.args):
            self.by_pos.setdefault((atom.predicate, i, v), []).append(atom.args)


def _bindings(schema: ActionSchema, index: _Index, universe: _Universe, static_preds, static_true,
              delta: _Index | None = None):
    """Consistent parameter bindings; with ``delta``, only those using at least one delta atom."""
    ptype = {p.name: p.type for p in schema.parameters}
    positives = [l.atom for l in schema.precondition if not l.negated and l.atom.predicate != "="]
    checks = [l for l in schema.precondition
              if l.atom.predicate == "=" or (l.negated and l.atom.predicate in static_preds)]

    def consistent(binding):
        for lit in checks:
            atom = lit.atom.substitute(binding)
            if atom.predicate == "=":
                value = atom.args[0] == atom.args[1]
            else:
                value = atom in static_true
            if value == lit.negated:
                return False
        return True

    def rec(remaining, binding):
        if not remaining:
            free = [p for p in schema.parameters if p.name not in binding]
            pools = [universe.of(p.type) for p in free]
            for combo in itertools.product(*pools):
                full = dict(binding)
                full.update(zip((p.name for p in free), combo))
                if consistent(full):
                    yield full
            return
        # join the literal with the most bound terms first
        best = max(
            range(len(remaining)),
            key=lambda i: sum(1 for t in remaining[i].args if not t.startswith("?") or t in binding),
        )
        atom = remaining[best]
        rest = remaining[:best] + remaining[best + 1:]
        candidates = None
        for i, t in enumerate(atom.args):
            value = binding.get(t, t) if t.startswith("?") else t
            if not value.startswith("?"):
                candidates = index.by_pos.get((atom.predicate, i, value), [])
                break
        if candidates is None:
            candidates = index.by_pred.get(atom.predicate, [])
        for args in candidates:
            new = match(atom, args, binding)
            if new is not None:
                yield from rec(rest, new)

    def match(atom, args, binding):
        new = binding
        for t, v in zip(atom.args, args):
            if t.startswith("?"):
                bound = new.get(t)
                if bound is None:
                    if v not in universe.sets.get(ptype[t], ()):
                        return None
                    if new is binding:
                        new = dict(binding)
                    new[t] = v
                elif bound != v:
                    return None
            elif t != v:
                return None
        return new

    if delta is None:
        yield from rec(positives, {})
        return
    seen = set()
    for i, atom in enumerate(positives):
        rest = positives[:i] + positives[i + 1:]
        for args in delta.by_pred.get(atom.predicate, ()):
            start = match(atom, args, {})
            if start is None:
                continue
            for b in rec(rest, start):
                key = tuple(sorted(b.items()))
                if key not in seen:
                    seen.add(key)
                    yield b


def _condition_predicates(schema: ActionSchema) -> set[str]:
    preds: set[str] = set()

    def walk(eff: Effect):
        for c in eff.conditional:
            preds.update(l.atom.predicate for l in c.condition if not l.negated and l.atom.predicate != "=")
            walk(c.effect)

    walk(schema.effect)
    return preds


def _relaxed_adds(eff: Effect, binding, reached, static_true, out: list, cond=()):
    if cond:
        for lit in cond:
            atom = lit.atom.substitute(binding)
            if atom.predicate == "=":
                if (atom.args[0] == atom.args[1]) == lit.negated:
                    return
            elif not lit.negated and atom not in reached:
                return
    for lit in eff.literals:
        if not lit.negated:
            out.append(lit.atom.substitute(binding))
    for c in eff.conditional:
        _relaxed_adds(c.effect, binding, reached, static_true, out, c.condition)


def _resolve_cost(expr, binding, values) -> float | None:
    if expr is None:
        return None
    if isinstance(expr, FunctionTerm):
        key = (expr.name, tuple(binding.get(a, a) for a in expr.args))
        return values.get(key)
    return expr


def _instantiate(schema: ActionSchema, binding, static_preds, static_true, values, default_cost):
    args = tuple(binding[p.name] for p in schema.parameters)
    pre = tuple(l.substitute(binding) for l in schema.precondition)
    keep = [i for i, l in enumerate(pre) if l.atom.predicate != "="]
    conditionals = []
    adds, dels = set(), set()
    base_cost = _resolve_cost(schema.effect.cost, binding, values)
    if schema.effect.cost is not None and base_cost is None:
        return None
    cost = default_cost if base_cost is None else base_cost

    def flatten(eff: Effect, cond: tuple[Literal, ...]):
        lits = [l.substitute(binding) for l in eff.literals]
        branch_cost = _resolve_cost(eff.cost, binding, values)
        if eff.cost is not None and branch_cost is None:
            raise LookupError(str(eff.cost))
        if cond:
            conditionals.append(GroundConditional(
                cond,
                frozenset(l.atom for l in lits if not l.negated),
                frozenset(l.atom for l in lits if l.negated),
                branch_cost or 0,
            ))
        else:
            adds.update(l.atom for l in lits if not l.negated)
            dels.update(l.atom for l in lits if l.negated)
        for c in eff.conditional:
            resolved = []
            for lit in c.condition:
                g = lit.substitute(binding)
                if g.atom.predicate == "=" or g.atom.predicate in static_preds:
                    if holds_literal(static_true, g):
                        continue
                    break
                resolved.append(g)
            else:
                flatten(c.effect, cond + tuple(resolved))

    base = Effect(schema.effect.literals, schema.effect.conditional, None)
    try:
        flatten(base, ())
    except LookupError:
        return None
    return GroundAction(
        schema.name,
        args,
        tuple(pre[i] for i in keep),
        frozenset(adds),
        frozenset(dels - adds),
        tuple(conditionals),
        cost,
        tuple(schema.precondition[i] for i in keep),
    )


def ground_task(dom: Domain, prob: Problem, extra_facts: "FactSet | None" = None) -> GroundTask:
    objects: dict[str, str] = {}
    for tn in list(dom.constants) + list(prob.objects):
        objects[tn.name] = tn.type
    init_atoms = set(prob.init)
    values = dict(prob.init_values)
    if extra_facts is not None:
        for name, typ in extra_facts.objects.items():
            if objects.get(name, typ) != typ:
                raise GroundingError(f"object {name!r} declared with conflicting types")
            objects[name] = typ
        init_atoms |= set(extra_facts.certified)
        values.update(extra_facts.function_values)

    for lit in prob.goal:
        for arg in lit.atom.args:
            if arg not in objects:
                raise GroundingError(f"goal mentions unknown object {arg!r}")

    universe = _Universe(dom, objects)
    fluent = _fluent_predicates(dom)
    static_preds = {p.name for p in dom.predicates} - fluent
    static_true = frozenset(a for a in init_atoms if a.predicate not in fluent)
    uses_costs = any(f.name == TOTAL_COST for f in dom.functions)
    default_cost = 0 if uses_costs else 1

    index = _Index()
    reached = set()
    for atom in sorted(init_atoms):
        reached.add(atom)
        index.add(atom)
    # semi-naive fixpoint: after the first round a schema is only joined against
    # bindings that use an atom added in the previous round.  Effect conditions
    # are not part of the join, so a new condition atom forces a full re-join.
    cond_preds = {s.name: _condition_predicates(s) for s in dom.actions}
    delta: _Index | None = None
    while True:
        new = []
        for schema in dom.actions:
            if delta is None or cond_preds[schema.name] & delta.by_pred.keys():
                bindings = _bindings(schema, index, universe, static_preds, static_true)
            else:
                bindings = _bindings(schema, index, universe, static_preds, static_true, delta)
            for binding in bindings:
                _relaxed_adds(schema.effect, binding, reached, static_true, new)
        fresh = [a for a in dict.fromkeys(new) if a not in reached]
        if not fresh:
            break
        delta = _Index()
        for atom in fresh:
            reached.add(atom)
            index.add(atom)
            delta.add(atom)

    actions = []
    seen = set()
    for schema in dom.actions:
        for binding in _bindings(schema, index, universe, static_preds, static_true):
            ga = _instantiate(schema, binding, static_preds, static_true, values, default_cost)
            if ga is None:
                log.debug("pruned %s: undefined cost", schema.name)
                continue
            if ga.key not in seen:
                seen.add(ga.key)
                actions.append(ga)

    _check_required_types(dom, prob, reached, universe)

    atoms = set(reached)
    for a in actions:
        atoms.update(l.atom for l in a.precondition)
        atoms |= a.add | a.delete
        for c in a.conditional:
            atoms.update(l.atom for l in c.condition)
            atoms |= c.add | c.delete
    atoms.update(l.atom for l in prob.goal if l.atom.predicate != "=")
    return GroundTask(
        objects=objects,
        atoms=frozenset(atoms),
        actions=tuple(actions),
        init=State(frozenset(init_atoms), 0),
        goal=tuple(prob.goal),
    )


def _check_required_types(dom: Domain, prob: Problem, reached, universe: _Universe):
    for lit in prob.goal:
        if lit.negated or lit.atom.predicate == "=" or lit.atom in reached:
            continue
        for schema in dom.actions:
            produced = set()
            _collect_add_predicates(schema.effect, produced)
            if lit.atom.predicate not in produced:
                continue
            for p in schema.parameters:
                if not universe.of(p.type):
                    raise GroundingError(
                        f"no objects of type {p.type!r}, required by action {schema.name!r} "
                        f"to reach goal {lit.atom}"
                    )


def _collect_add_predicates(eff: Effect, out: set):
    out.update(l.atom.predicate for l in eff.literals if not l.negated)
    for c in eff.conditional:
        _collect_add_predicates(c.effect, out)


# ---------------------------------------------------------------------------
# bitmask form used by search and the heuristics


class CompiledTask:
    """Fluent atoms as bit positions; static atoms are folded away."""

    def __init__(self, task: GroundTask):
        self.task = task
        fluent = set()
        for a in task.actions:
            fluent |= a.add | a.delete
            for c in a.conditional:
                fluent |= c.add | c.delete
        self.atoms = sorted(fluent)
        self.index = {atom: i for i, atom in enumerate(self.atoms)}
        self.static = frozenset(x for x in task.init.atoms if x not in self.index)

        self.actions: list[GroundAction] = []
        self.pre_pos: list[int] = []
        self.pre_neg: list[int] = []
        self.add: list[int] = []
        self.delete: list[int] = []
        self.conds: list[tuple] = []
        self.cost: list[float] = []
        for a in task.actions:
            compiled = self._literals(a.precondition)
            if compiled is None:
                continue
            pos, neg = compiled
            conds = []
            for c in a.conditional:
                cc = self._literals(c.condition)
                if cc is None:
                    continue
                conds.append((cc[0], cc[1], self._mask(c.add), self._mask(c.delete), c.cost))
            self.actions.append(a)
            self.pre_pos.append(pos)
            self.pre_neg.append(neg)
            self.add.append(self._mask(a.add))
            self.delete.append(self._mask(a.delete))
            self.conds.append(tuple(conds))
            self.cost.append(a.cost)

        goal = self._literals(task.goal)
        self.goal_possible = goal is not None
        self.goal_pos, self.goal_neg = goal if goal is not None else (0, 0)
        self.init = self._mask(x for x in task.init.atoms if x in self.index)
        self._build_successor_index()

    def _mask(self, atoms: Iterable[Atom]) -> int:
        m = 0
        for x in atoms:
            m |= 1 << self.index[x]
        return m

    def _literals(self, lits) -> tuple[int, int] | None:
        """Split a conjunction into (positive, negative) fluent masks; None if statically false."""
        pos = neg = 0
        for lit in lits:
            if lit.atom.predicate == "=":
                if not holds_literal((), lit):
                    return None
                continue
            i = self.index.get(lit.atom)
            if i is None:
                if not holds_literal(self.static, lit):
                    return None
                continue
            if lit.negated:
                neg |= 1 << i
            else:
                pos |= 1 << i
        if pos & neg:
            return None
        return pos, neg

    def _build_successor_index(self):
        freq = [0] * len(self.atoms)
        for pos in self.pre_pos:
            for i in bits(pos):
                freq[i] += 1
        self.by_atom: dict[int, list[int]] = {}
        self.unconditioned: list[int] = []
        for k, pos in enumerate(self.pre_pos):
            if not pos:
                self.unconditioned.append(k)
                continue
            rarest = min(bits(pos), key=lambda i: freq[i])
            self.by_atom.setdefault(rarest, []).append(k)

    def applicable(self, state: int) -> list[int]:
        out = [k for k in self.unconditioned if not state & self.pre_neg[k]]
        for i in bits(state):
            for k in self.by_atom.get(i, ()):
                if state & self.pre_pos[k] == self.pre_pos[k] and not state & self.pre_neg[k]:
                    out.append(k)
        out.sort()
        return out

    def successor(self, state: int, k: int) -> tuple[int, float]:
        add, delete, cost = self.add[k], self.delete[k], self.cost[k]
        for cpos, cneg, cadd, cdel, ccost in self.conds[k]:
            if state & cpos == cpos and not state & cneg:
                add |= cadd
                delete |= cdel
                cost += ccost
        return (state & ~delete) | add, cost

    def is_goal(self, state: int) -> bool:
        return self.goal_possible and state & self.goal_pos == self.goal_pos and not state & self.goal_neg

    def to_state(self, state: int, total_cost: float = 0) -> State:
        return State(self.static | frozenset(self.atoms[i] for i in bits(state)), total_cost)

    def from_state(self, s: State) -> int:
        return self._mask(x for x in s.atoms if x in self.index)


def bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low
