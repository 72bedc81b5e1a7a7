"""Parser, validator and printer for the supported PDDL fragment and ``.stream`` files.

Supported requirements are ``:strips :typing :negative-preconditions :equality
:conditional-effects :action-costs``.  Preconditions are conjunctions of
possibly negated atoms (including ``=``); effects are add/delete literals,
``when`` branches and at most one ``(increase (total-cost) ...)`` per branch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Union

from .sexpr import ParseError, SList, SourceText, Symbol, location, read_all

SUPPORTED_REQUIREMENTS = frozenset(
    {
        ":strips",
        ":typing",
        ":negative-preconditions",
        ":equality",
        ":conditional-effects",
        ":action-costs",
    }
)
TOTAL_COST = "total-cost"
STREAM_KINDS = ("eager", "optimistic")


@dataclass(frozen=True, order=True)
class Atom:
    predicate: str
    args: tuple[str, ...] = ()

    def __str__(self):
        return "(" + " ".join((self.predicate,) + self.args) + ")"

    def substitute(self, binding: Mapping[str, str]) -> "Atom":
        return Atom(self.predicate, tuple(binding.get(a, a) for a in self.args))


@dataclass(frozen=True, order=True)
class Literal:
    atom: Atom
    negated: bool = False

    def __str__(self):
        return f"(not {self.atom})" if self.negated else str(self.atom)

    def substitute(self, binding: Mapping[str, str]) -> "Literal":
        return Literal(self.atom.substitute(binding), self.negated)


@dataclass(frozen=True)
class TypedName:
    name: str
    type: str = "object"


@dataclass(frozen=True)
class PredicateDecl:
    name: str
    parameters: tuple[TypedName, ...] = ()

    @property
    def arity(self):
        return len(self.parameters)


@dataclass(frozen=True)
class FunctionTerm:
    name: str
    args: tuple[str, ...] = ()

    def __str__(self):
        return "(" + " ".join((self.name,) + self.args) + ")"


CostExpr = Union[int, float, FunctionTerm]


@dataclass(frozen=True)
class Effect:
    literals: tuple[Literal, ...] = ()
    conditional: tuple["ConditionalEffect", ...] = ()
    cost: CostExpr | None = None


@dataclass(frozen=True)
class ConditionalEffect:
    condition: tuple[Literal, ...]
    effect: Effect


@dataclass(frozen=True)
class ActionSchema:
    name: str
    parameters: tuple[TypedName, ...] = ()
    precondition: tuple[Literal, ...] = ()
    effect: Effect = Effect()

    def free_variables(self) -> set[str]:
        found = set()
        for lit in self.precondition:
            found.update(a for a in lit.atom.args if a.startswith("?"))
        _effect_variables(self.effect, found)
        return found


def _effect_variables(eff: Effect, found: set):
    for lit in eff.literals:
        found.update(a for a in lit.atom.args if a.startswith("?"))
    if isinstance(eff.cost, FunctionTerm):
        found.update(a for a in eff.cost.args if a.startswith("?"))
    for cond in eff.conditional:
        for lit in cond.condition:
            found.update(a for a in lit.atom.args if a.startswith("?"))
        _effect_variables(cond.effect, found)


@dataclass(frozen=True)
class Domain:
    name: str
    requirements: frozenset = frozenset()
    # child type -> parent type; ``object`` maps to None
    types: Mapping[str, str | None] = field(default_factory=lambda: {"object": None})
    constants: tuple[TypedName, ...] = ()
    predicates: tuple[PredicateDecl, ...] = ()
    functions: tuple[PredicateDecl, ...] = ()
    actions: tuple[ActionSchema, ...] = ()

    def predicate(self, name: str) -> PredicateDecl | None:
        for p in self.predicates:
            if p.name == name:
                return p
        return None

    def action(self, name: str) -> ActionSchema:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)

    def ancestors(self, type_name: str) -> list[str]:
        """``type_name`` followed by its parents up to ``object``."""
        chain = []
        t = type_name
        while t is not None:
            chain.append(t)
            t = self.types.get(t)
        return chain

    def is_subtype(self, child: str, parent: str) -> bool:
        return parent in self.ancestors(child)


@dataclass(frozen=True)
class Problem:
    name: str
    domain_name: str
    objects: tuple[TypedName, ...] = ()
    init: frozenset = frozenset()
    goal: tuple[Literal, ...] = ()
    # numeric initial values, e.g. ``(= (total-cost) 0)``
    init_values: Mapping[tuple, float] = field(default_factory=dict)


@dataclass(frozen=True)
class StreamSpec:
    name: str
    kind: str
    inputs: tuple[TypedName, ...] = ()
    domain_facts: tuple[Atom, ...] = ()
    outputs: tuple[TypedName, ...] = ()
    certified_facts: tuple[Atom, ...] = ()
    generator: str = ""
    params: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class StreamSpecSet:
    streams: tuple[StreamSpec, ...] = ()

    def __len__(self):
        return len(self.streams)

    def __iter__(self):
        return iter(self.streams)

    def __add__(self, other: "StreamSpecSet") -> "StreamSpecSet":
        return StreamSpecSet(self.streams + tuple(other.streams))

    def of_kind(self, kind: str) -> "StreamSpecSet":
        return StreamSpecSet(tuple(s for s in self.streams if s.kind == kind))


# ---------------------------------------------------------------------------
# reading helpers


class _Reader:
    def __init__(self, src: SourceText):
        self.src = src

    def error(self, message, item=None):
        line, col = location(item)
        raise ParseError(message, line, col, self.src.origin)

    def expect_list(self, item, what):
        if not isinstance(item, SList):
            self.error(f"expected {what}, got {item!r}", item)
        return item

    def expect_symbol(self, item, what):
        if not isinstance(item, str):
            self.error(f"expected {what}", item)
        return item

    def typed_list(self, items, variables: bool, types=None) -> list[tuple[TypedName, object]]:
        """Parse ``a b - t c`` into typed names; returns (TypedName, source token) pairs."""
        out = []
        pending = []
        i = 0
        while i < len(items):
            tok = self.expect_symbol(items[i], "a name in typed list")
            if tok == "-":
                if i + 1 >= len(items) or not pending:
                    self.error("dangling '-' in typed list", tok)
                type_tok = self.expect_symbol(items[i + 1], "a type name")
                if type_tok == "either":
                    self.error("'either' types are not supported", type_tok)
                if types is not None and type_tok not in types:
                    self.error(f"undeclared type {type_tok!r}", type_tok)
                out.extend((TypedName(str(p), str(type_tok)), p) for p in pending)
                pending = []
                i += 2
                continue
            if variables and not tok.startswith("?"):
                self.error(f"expected a variable, got {tok!r}", tok)
            if not variables and tok.startswith("?"):
                self.error(f"unexpected variable {tok!r}", tok)
            pending.append(tok)
            i += 1
        out.extend((TypedName(str(p), "object"), p) for p in pending)
        return out

    def atom(self, item) -> Atom:
        lst = self.expect_list(item, "an atom")
        if not lst:
            self.error("empty atom", lst)
        parts = [self.expect_symbol(x, "a term") for x in lst]
        return Atom(str(parts[0]), tuple(str(p) for p in parts[1:]))

    def literal(self, item) -> Literal:
        lst = self.expect_list(item, "a literal")
        if lst and lst[0] == "not":
            if len(lst) != 2:
                self.error("'not' takes exactly one argument", lst)
            return Literal(self.atom(lst[1]), True)
        return Literal(self.atom(lst), False)

    def condition(self, item) -> list[tuple[Literal, object]]:
        lst = self.expect_list(item, "a condition")
        if not lst:
            return []
        head = lst[0]
        if head == "and":
            out = []
            for sub in lst[1:]:
                out.extend(self.condition(sub))
            return out
        if head in ("or", "imply", "forall", "exists"):
            self.error(f"unsupported condition {head!r}", head)
        return [(self.literal(lst), lst)]

    def cost_expr(self, item) -> CostExpr:
        if isinstance(item, SList):
            a = self.atom(item)
            return FunctionTerm(a.predicate, a.args)
        tok = self.expect_symbol(item, "a number or function term")
        try:
            value = float(tok)
        except ValueError:
            self.error(f"expected a number, got {tok!r}", tok)
        if value < 0:
            self.error("cost increase must be non-negative", tok)
        return int(value) if value.is_integer() else value

    def effect(self, item) -> Effect:
        lst = self.expect_list(item, "an effect")
        literals, conditional, cost = [], [], None

        def walk(node):
            nonlocal cost
            node = self.expect_list(node, "an effect")
            if not node:
                return
            head = node[0]
            if head == "and":
                for sub in node[1:]:
                    walk(sub)
            elif head == "when":
                if len(node) != 3:
                    self.error("'when' takes a condition and an effect", node)
                cond = [lit for lit, _ in self.condition(node[1])]
                conditional.append(ConditionalEffect(tuple(cond), self.effect(node[2])))
            elif head == "increase":
                if len(node) != 3:
                    self.error("'increase' takes two arguments", node)
                target = self.atom(node[1])
                if target.predicate != TOTAL_COST or target.args:
                    self.error("only (increase (total-cost) ...) is supported", node)
                if cost is not None:
                    self.error("more than one cost increase in one effect branch", node)
                cost = self.cost_expr(node[2])
            elif head == "forall":
                self.error("unsupported effect 'forall'", head)
            else:
                literals.append(self.literal(node))

        walk(lst)
        return Effect(tuple(literals), tuple(conditional), cost)


def parse_atom(text: str) -> Atom:
    """Parse a single ground atom such as ``(at beaker1 table_loc)``."""
    src = SourceText(text)
    forms = read_all(src)
    if len(forms) != 1 or not isinstance(forms[0], SList) or not forms[0]:
        raise ParseError(f"expected one atom, got {text!r}", 1, 1, src.origin)
    node = forms[0]
    if any(not isinstance(x, str) for x in node):
        raise ParseError(f"expected a flat atom, got {text!r}", node.line, node.col, src.origin)
    return Atom(str(node[0]), tuple(str(x) for x in node[1:]))


def _check_header(r: _Reader, forms, keyword: str):
    if not forms:
        r.error(f"empty input; expected (define ({keyword} ...))")
    if len(forms) > 1:
        r.error("unexpected trailing form", forms[1])
    top = r.expect_list(forms[0], "(define ...)")
    if len(top) < 2 or top[0] != "define":
        r.error("expected (define ...)", top)
    head = r.expect_list(top[1], f"({keyword} NAME)")
    if len(head) != 2 or head[0] != keyword:
        r.error(f"expected ({keyword} NAME)", head)
    return top, str(r.expect_symbol(head[1], "a name"))


# ---------------------------------------------------------------------------
# domain


def parse_domain(src: SourceText | str) -> Domain:
    if isinstance(src, str):
        src = SourceText(src)
    r = _Reader(src)
    top, name = _check_header(r, read_all(src), "domain")

    requirements: set[str] = set()
    types: dict[str, str | None] = {"object": None}
    type_tokens: dict[str, object] = {}
    constants: list[TypedName] = []
    predicates: list[PredicateDecl] = []
    functions: list[PredicateDecl] = []
    raw_actions: list = []
    seen_sections = set()

    for section in top[2:]:
        sec = r.expect_list(section, "a domain section")
        if not sec:
            r.error("empty section", sec)
        key = sec[0]
        if key in seen_sections and key != ":action":
            r.error(f"duplicate section {key}", key)
        seen_sections.add(key)
        if key == ":requirements":
            for req in sec[1:]:
                req = r.expect_symbol(req, "a requirement flag")
                if req not in SUPPORTED_REQUIREMENTS:
                    r.error(f"unsupported requirement {req}", req)
                requirements.add(str(req))
        elif key == ":types":
            for tn, tok in r.typed_list(sec[1:], variables=False):
                if tn.name == "object":
                    if tn.type != "object":
                        r.error("type 'object' cannot have a parent", tok)
                    continue
                if tn.name in type_tokens:
                    r.error(f"duplicate declaration of type {tn.name!r}", tok)
                type_tokens[tn.name] = tok
                types[tn.name] = tn.type
            for child, parent in types.items():
                if parent is not None and parent not in types:
                    r.error(f"undeclared type {parent!r}", type_tokens[child])
            _check_acyclic(r, types, type_tokens)
        elif key == ":constants":
            for tn, tok in r.typed_list(sec[1:], variables=False, types=types):
                if any(c.name == tn.name for c in constants):
                    r.error(f"duplicate declaration of constant {tn.name!r}", tok)
                constants.append(tn)
        elif key == ":predicates":
            for decl in sec[1:]:
                pd = _predicate_decl(r, decl, types)
                if pd.name == "=" or any(p.name == pd.name for p in predicates):
                    r.error(f"duplicate declaration of predicate {pd.name!r}", decl)
                predicates.append(pd)
        elif key == ":functions":
            items = list(sec[1:])
            i = 0
            while i < len(items):
                fd = _predicate_decl(r, items[i], types)
                if any(f.name == fd.name for f in functions):
                    r.error(f"duplicate declaration of function {fd.name!r}", items[i])
                functions.append(fd)
                i += 1
                if i < len(items) and items[i] == "-":
                    if i + 1 >= len(items) or items[i + 1] != "number":
                        r.error("only numeric functions are supported", items[i])
                    i += 2
        elif key == ":action":
            raw_actions.append(sec)
        elif key == ":durative-action":
            r.error("unsupported section :durative-action", key)
        else:
            r.error(f"unknown or unsupported section {key}", key)

    dom = Domain(
        name=name,
        requirements=frozenset(requirements),
        types=types,
        constants=tuple(constants),
        predicates=tuple(predicates),
        functions=tuple(functions),
    )
    actions: list[ActionSchema] = []
    for sec in raw_actions:
        act = _parse_action(r, sec, dom)
        if any(a.name == act.name for a in actions):
            r.error(f"duplicate declaration of action {act.name!r}", sec[1])
        actions.append(act)
    return Domain(
        name=dom.name,
        requirements=dom.requirements,
        types=dom.types,
        constants=dom.constants,
        predicates=dom.predicates,
        functions=dom.functions,
        actions=tuple(actions),
    )


def _check_acyclic(r: _Reader, types, type_tokens):
    for start in types:
        seen = set()
        t = start
        while t is not None:
            if t in seen:
                r.error(f"cyclic type hierarchy through {start!r}", type_tokens.get(start))
            seen.add(t)
            t = types.get(t)


def _predicate_decl(r: _Reader, decl, types) -> PredicateDecl:
    decl = r.expect_list(decl, "a predicate declaration")
    if not decl:
        r.error("empty predicate declaration", decl)
    pname = r.expect_symbol(decl[0], "a predicate name")
    params = r.typed_list(decl[1:], variables=True, types=types)
    return PredicateDecl(str(pname), tuple(tn for tn, _ in params))


def _parse_action(r: _Reader, sec, dom: Domain) -> ActionSchema:
    if len(sec) < 2:
        r.error("action without a name", sec)
    aname = str(r.expect_symbol(sec[1], "an action name"))
    fields = {}
    i = 2
    while i < len(sec):
        key = r.expect_symbol(sec[i], "an action keyword")
        if key not in (":parameters", ":precondition", ":effect"):
            r.error(f"unknown action keyword {key}", key)
        if key in fields:
            r.error(f"duplicate {key} in action {aname!r}", key)
        if i + 1 >= len(sec):
            r.error(f"missing value for {key}", key)
        fields[key] = sec[i + 1]
        i += 2
    params = []
    if ":parameters" in fields:
        plist = r.expect_list(fields[":parameters"], "a parameter list")
        for tn, tok in r.typed_list(plist, variables=True, types=dom.types):
            if any(p.name == tn.name for p in params):
                r.error(f"duplicate parameter {tn.name}", tok)
            params.append(tn)
    pre_items = r.condition(fields[":precondition"]) if ":precondition" in fields else []
    effect = r.effect(fields[":effect"]) if ":effect" in fields else Effect()
    act = ActionSchema(aname, tuple(params), tuple(lit for lit, _ in pre_items), effect)

    scope = {p.name for p in params}
    constants = {c.name for c in dom.constants}
    for lit, node in pre_items:
        _check_atom(r, dom, lit.atom, scope, constants, node)
    _check_effect(r, dom, effect, scope, constants, sec)
    return act


def _check_atom(r: _Reader, dom: Domain, atom: Atom, scope, constants, node):
    if atom.predicate == "=":
        if len(atom.args) != 2:
            r.error("'=' takes exactly two arguments", node)
    else:
        decl = dom.predicate(atom.predicate)
        if decl is None:
            r.error(f"unknown predicate {atom.predicate!r}", node)
        if decl.arity != len(atom.args):
            r.error(
                f"predicate {atom.predicate!r} expects {decl.arity} arguments, got {len(atom.args)}",
                node,
            )
    for arg in atom.args:
        if arg.startswith("?"):
            if arg not in scope:
                r.error(f"variable {arg} is not a parameter", node)
        elif arg not in constants:
            r.error(f"unknown constant {arg!r}", node)


def _check_effect(r, dom, eff: Effect, scope, constants, node):
    for lit in eff.literals:
        _check_atom(r, dom, lit.atom, scope, constants, node)
        if lit.atom.predicate == "=":
            r.error("equality cannot appear in an effect", node)
    if isinstance(eff.cost, FunctionTerm):
        if not any(f.name == TOTAL_COST for f in dom.functions):
            r.error("cost increase used but (total-cost) is not declared in :functions", node)
        decl = next((f for f in dom.functions if f.name == eff.cost.name), None)
        if decl is None:
            r.error(f"unknown function {eff.cost.name!r}", node)
        if decl.arity != len(eff.cost.args):
            r.error(f"function {eff.cost.name!r} expects {decl.arity} arguments", node)
        for arg in eff.cost.args:
            if arg.startswith("?") and arg not in scope:
                r.error(f"variable {arg} is not a parameter", node)
            if not arg.startswith("?") and arg not in constants:
                r.error(f"unknown constant {arg!r}", node)
    elif eff.cost is not None and not any(f.name == TOTAL_COST for f in dom.functions):
        r.error("cost increase used but (total-cost) is not declared in :functions", node)
    for cond in eff.conditional:
        for lit in cond.condition:
            _check_atom(r, dom, lit.atom, scope, constants, node)
        _check_effect(r, dom, cond.effect, scope, constants, node)


# ---------------------------------------------------------------------------
# problem


def parse_problem(src: SourceText | str, dom: Domain) -> Problem:
    if isinstance(src, str):
        src = SourceText(src)
    r = _Reader(src)
    top, name = _check_header(r, read_all(src), "problem")

    domain_name = None
    objects: list[TypedName] = []
    init_nodes: list = []
    goal_node = None
    typing = ":typing" in dom.requirements
    for section in top[2:]:
        sec = r.expect_list(section, "a problem section")
        if not sec:
            r.error("empty section", sec)
        key = sec[0]
        if key == ":domain":
            domain_name = str(r.expect_symbol(sec[1], "a domain name")) if len(sec) == 2 else None
            if domain_name != dom.name:
                r.error(f"unknown domain {domain_name!r} (loaded domain is {dom.name!r})", sec)
        elif key == ":objects":
            items = list(sec[1:])
            for tn, tok in r.typed_list(items, variables=False, types=dom.types):
                if typing and tn.type == "object" and not _explicitly_typed(items, tok):
                    r.error(f"untyped object {tn.name!r}", tok)
                if any(o.name == tn.name for o in objects):
                    r.error(f"duplicate object {tn.name!r}", tok)
                if any(c.name == tn.name for c in dom.constants):
                    r.error(f"object {tn.name!r} clashes with a domain constant", tok)
                objects.append(tn)
        elif key == ":init":
            init_nodes = list(sec[1:])
        elif key == ":goal":
            if len(sec) != 2:
                r.error("(:goal ...) takes exactly one condition", sec)
            goal_node = sec[1]
        elif key == ":metric":
            continue
        else:
            r.error(f"unknown problem section {key}", key)
    if domain_name is None:
        r.error("missing (:domain NAME)", top)

    types_of = {c.name: c.type for c in dom.constants}
    types_of.update({o.name: o.type for o in objects})

    init = set()
    values = {}
    for node in init_nodes:
        node = r.expect_list(node, "an initial atom")
        if node and node[0] == "=":
            if len(node) != 3 or not isinstance(node[1], SList):
                r.error("expected (= (function args) number)", node)
            fn = r.atom(node[1])
            try:
                values[(fn.predicate, fn.args)] = float(node[2])
            except ValueError:
                r.error("expected a number", node[2])
            continue
        atom = r.atom(node)
        _check_ground_atom(r, dom, atom, types_of, node, check_types=True)
        init.add(atom)

    goal = []
    if goal_node is not None:
        for lit, node in r.condition(goal_node):
            if lit.atom.predicate != "=":
                _check_ground_atom(r, dom, lit.atom, types_of, node, check_types=False)
            goal.append(lit)
    return Problem(name, domain_name, tuple(objects), frozenset(init), tuple(goal), values)


def _explicitly_typed(items, tok) -> bool:
    idx = next(i for i, x in enumerate(items) if x is tok)
    return "-" in items[idx + 1 :]


def _check_ground_atom(r, dom: Domain, atom: Atom, types_of, node, check_types: bool):
    decl = dom.predicate(atom.predicate)
    if decl is None:
        r.error(f"unknown predicate {atom.predicate!r}", node)
    if decl.arity != len(atom.args):
        r.error(
            f"predicate {atom.predicate!r} expects {decl.arity} arguments, got {len(atom.args)}",
            node,
        )
    for arg, param in zip(atom.args, decl.parameters):
        if arg.startswith("?"):
            r.error(f"variable {arg} in a ground atom", node)
        if arg not in types_of:
            r.error(f"unknown object {arg!r}", node)
        if check_types and not dom.is_subtype(types_of[arg], param.type):
            r.error(
                f"object {arg!r} of type {types_of[arg]!r} does not fit parameter "
                f"{param.name} - {param.type} of {atom.predicate!r}",
                node,
            )


# ---------------------------------------------------------------------------
# streams


def parse_streams(src: SourceText | str, dom: Domain) -> StreamSpecSet:
    """Read a ``.stream`` file; an empty (or comment-only) file gives an empty set."""
    if isinstance(src, str):
        src = SourceText(src)
    r = _Reader(src)
    forms = read_all(src)
    if not forms:
        return StreamSpecSet()
    top, _ = _check_header(r, forms, "stream")
    streams: list[StreamSpec] = []
    for section in top[2:]:
        sec = r.expect_list(section, "a (:stream ...) declaration")
        if not sec or sec[0] != ":stream":
            r.error("expected (:stream ...)", sec)
        spec = _parse_stream(r, sec, dom)
        if any(s.name == spec.name for s in streams):
            r.error(f"duplicate stream {spec.name!r}", sec[1])
        streams.append(spec)
    return StreamSpecSet(tuple(streams))


def _parse_stream(r: _Reader, sec, dom: Domain) -> StreamSpec:
    if len(sec) < 2:
        r.error("stream without a name", sec)
    sname = str(r.expect_symbol(sec[1], "a stream name"))
    fields = {}
    i = 2
    while i < len(sec):
        key = r.expect_symbol(sec[i], "a stream keyword")
        if key not in (":kind", ":inputs", ":domain", ":outputs", ":certified", ":generator", ":params"):
            r.error(f"unknown stream keyword {key}", key)
        if i + 1 >= len(sec):
            r.error(f"missing value for {key}", key)
        fields[str(key)] = sec[i + 1]
        i += 2
    kind = fields.get(":kind")
    if kind not in STREAM_KINDS:
        r.error(f"unknown stream kind {kind!r} in {sname!r}", kind or sec)
    known_types = {**dom.types, "timing": "object"}
    inputs = [tn for tn, _ in r.typed_list(r.expect_list(fields.get(":inputs", SList()), "inputs"), True, known_types)]
    outputs = [tn for tn, _ in r.typed_list(r.expect_list(fields.get(":outputs", SList()), "outputs"), True, known_types)]
    domain_facts = [lit.atom for lit, _ in r.condition(fields[":domain"])] if ":domain" in fields else []
    certified = [lit.atom for lit, _ in r.condition(fields[":certified"])] if ":certified" in fields else []
    generator = str(r.expect_symbol(fields.get(":generator", ""), "a generator name"))
    if not generator:
        r.error(f"stream {sname!r} has no :generator", sec)
    params = _stream_params(r, fields.get(":params", SList()))

    if kind == "optimistic" and not outputs:
        r.error(f"optimistic stream {sname!r} must declare at least one output", sec)
    scope = {v.name for v in inputs} | {v.name for v in outputs}
    for atom in domain_facts + certified:
        decl = dom.predicate(atom.predicate)
        if decl is None:
            r.error(f"unknown predicate {atom.predicate!r} in stream {sname!r}", sec)
        if decl.arity != len(atom.args):
            r.error(f"predicate {atom.predicate!r} expects {decl.arity} arguments", sec)
        for arg in atom.args:
            if arg.startswith("?") and arg not in scope:
                r.error(f"variable {arg} is not a stream input or output", sec)
    for v in inputs:
        if v.type != "timing" and not any(v.name in a.args for a in domain_facts):
            r.error(f"input {v.name} of {sname!r} is not constrained by a domain fact", sec)
    for v in outputs:
        if not any(v.name in a.args for a in certified):
            r.error(f"output {v.name} of {sname!r} appears in no certified fact", sec)
        if any(v.name in a.args for a in domain_facts):
            r.error(f"output {v.name} of {sname!r} appears in a domain fact", sec)
    return StreamSpec(sname, str(kind), tuple(inputs), tuple(domain_facts), tuple(outputs),
                      tuple(certified), generator, params)


def _stream_params(r: _Reader, node) -> dict:
    node = r.expect_list(node, "a parameter list")
    params = {}
    i = 0
    while i < len(node):
        key = r.expect_symbol(node[i], "a :keyword")
        if not key.startswith(":") or i + 1 >= len(node):
            r.error("expected :key value pairs in :params", key)
        params[key[1:]] = _plain(node[i + 1])
        i += 2
    return params


def _plain(node):
    if isinstance(node, SList):
        return tuple(_plain(x) for x in node)
    return str(node)


# ---------------------------------------------------------------------------
# printing


def _typed(names) -> str:
    parts = []
    for tn in names:
        parts.append(f"{tn.name} - {tn.type}")
    return " ".join(parts)


def _cost_str(cost: CostExpr) -> str:
    return str(cost) if isinstance(cost, FunctionTerm) else repr(cost)


def _condition_str(lits) -> str:
    if len(lits) == 1:
        return str(lits[0])
    return "(and " + " ".join(str(l) for l in lits) + ")"


def _effect_str(eff: Effect) -> str:
    parts = [str(l) for l in eff.literals]
    for cond in eff.conditional:
        parts.append(f"(when {_condition_str(cond.condition) if cond.condition else '(and)'} {_effect_str(cond.effect)})")
    if eff.cost is not None:
        parts.append(f"(increase (total-cost) {_cost_str(eff.cost)})")
    return "(and " + " ".join(parts) + ")" if parts != [] else "(and)"


def print_pddl(dom: Domain) -> SourceText:
    lines = [f"(define (domain {dom.name})"]
    if dom.requirements:
        lines.append("  (:requirements " + " ".join(sorted(dom.requirements)) + ")")
    subtypes = [f"{t} - {p}" for t, p in dom.types.items() if p is not None]
    lines.append("  (:types " + " ".join(subtypes) + ")")
    if dom.constants:
        lines.append(f"  (:constants {_typed(dom.constants)})")
    if dom.predicates:
        lines.append("  (:predicates")
        for p in dom.predicates:
            sep = " " if p.parameters else ""
            lines.append(f"    ({p.name}{sep}{_typed(p.parameters)})")
        lines.append("  )")
    if dom.functions:
        lines.append("  (:functions")
        for f in dom.functions:
            sep = " " if f.parameters else ""
            lines.append(f"    ({f.name}{sep}{_typed(f.parameters)}) - number")
        lines.append("  )")
    for a in dom.actions:
        lines.append(f"  (:action {a.name}")
        lines.append(f"    :parameters ({_typed(a.parameters)})")
        pre = " ".join(str(l) for l in a.precondition)
        lines.append(f"    :precondition (and {pre})" if pre else "    :precondition (and)")
        lines.append(f"    :effect {_effect_str(a.effect)}")
        lines.append("  )")
    lines.append(")")
    return SourceText("\n".join(lines) + "\n", f"<printed {dom.name}>")


def print_problem(prob: Problem) -> SourceText:
    lines = [f"(define (problem {prob.name})", f"  (:domain {prob.domain_name})"]
    lines.append(f"  (:objects {_typed(prob.objects)})")
    init = [str(a) for a in sorted(prob.init)]
    init += [f"(= {FunctionTerm(k[0], k[1])} {v:g})" for k, v in sorted(prob.init_values.items())]
    lines.append("  (:init " + " ".join(init) + ")")
    lines.append("  (:goal (and " + " ".join(str(l) for l in prob.goal) + "))")
    lines.append(")")
    return SourceText("\n".join(lines) + "\n", f"<printed {prob.name}>")


__all__ = [
    "Atom", "Literal", "TypedName", "PredicateDecl", "FunctionTerm", "Effect",
    "ConditionalEffect", "ActionSchema", "Domain", "Problem", "StreamSpec",
    "StreamSpecSet", "ParseError", "SourceText", "Symbol", "parse_domain",
    "parse_problem", "parse_streams", "print_pddl", "print_problem",
]
