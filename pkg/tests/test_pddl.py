import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_lifted_task
from tempstream.pddl import (
    Atom,
    Literal,
    parse_atom,
    parse_domain,
    parse_problem,
    parse_streams,
    print_pddl,
    print_problem,
)
from tempstream.sexpr import ParseError, SourceText

from conftest import DOMAINS, load

MINIMAL = "(define (domain d) (:requirements :strips))"


def test_washing_domain_counts(washing):
    dom, _ = washing
    assert len(dom.types) == 7
    assert "object" in dom.types
    assert [c.name for c in dom.constants] == ["table_loc", "washing_station_loc"]
    assert len(dom.predicates) == 4
    assert [a.name for a in dom.actions] == ["pick", "place", "wash"]


def test_types_without_parent_extend_object(washing):
    dom, _ = washing
    assert dom.types["washer"] == "object"
    assert dom.types["robot"] == "object"
    assert dom.is_subtype("beaker", "glassware")
    assert dom.is_subtype("beaker", "object")


def test_minimal_domain():
    dom = parse_domain(MINIMAL)
    assert dom.actions == () and dom.predicates == ()


def test_missing_final_paren_reports_line():
    text = (DOMAINS / "washing.pddl").read_text()
    broken = text[: text.rstrip().rfind(")")]
    with pytest.raises(ParseError) as err:
        parse_domain(SourceText(broken, "washing.pddl"))
    assert "unbalanced parentheses at line 1" in str(err.value)
    assert str(err.value).startswith("washing.pddl:1:")


def test_extra_close_paren_reports_its_line():
    with pytest.raises(ParseError, match="unbalanced parentheses at line 2"):
        parse_domain(MINIMAL + "\n)")


def test_lexical_error_has_location():
    with pytest.raises(ParseError) as err:
        parse_domain("(define (domain d)\n  (:requirements :strips) {)")
    assert (err.value.line, err.value.col) == (2, 27)


@pytest.mark.parametrize("text, message", [
    ("(define (domain d) (:requirements :fluents))", "unsupported requirement"),
    ("(define (domain d) (:types a - b b - a))", "cycl"),
    ("(define (domain d) (:predicates (p) (p)))", "duplicate"),
    ("(define (domain d) (:predicates (p)) (:action a :parameters () :precondition (p) :effect (p))"
     " (:action a :parameters () :precondition (p) :effect (p)))", "duplicate"),
    ("(define (domain d) (:predicates (p ?x - ghost)))", "ghost"),
])
def test_domain_errors(text, message):
    with pytest.raises(ParseError, match=message) as err:
        parse_domain(text)
    assert err.value.line >= 1


def test_undeclared_variable_in_effect_is_rejected():
    text = ("(define (domain d) (:predicates (p ?x)) "
            "(:action a :parameters (?x) :precondition (p ?x) :effect (p ?y)))")
    with pytest.raises(ParseError, match=r"\?y"):
        parse_domain(text)


def test_identifiers_are_case_insensitive():
    dom = parse_domain("(DEFINE (DOMAIN D) (:REQUIREMENTS :STRIPS) (:PREDICATES (Free ?R)))")
    assert dom.name == "d"
    assert dom.predicates[0].name == "free"


def test_washing_problem(washing):
    _, prob = washing
    assert len(prob.objects) == 3
    assert prob.init == frozenset({Atom("at", ("beaker1", "table_loc")), Atom("is_free", ("franka",))})
    assert prob.goal == (Literal(Atom("is_washed", ("beaker1",))),)


def test_problem_empty_goal(washing):
    dom, _ = washing
    prob = parse_problem("(define (problem p) (:domain washing-domain) (:objects) (:init) (:goal (and)))", dom)
    assert prob.goal == ()


@pytest.mark.parametrize("body, message", [
    ("(:domain other) (:objects) (:init) (:goal (and))", "domain"),
    ("(:domain washing-domain) (:objects beaker1 - beaker) (:init (at beaker1)) (:goal (and))", "arit|argument"),
    ("(:domain washing-domain) (:objects b - nosuchtype) (:init) (:goal (and))", "nosuchtype"),
    ("(:domain washing-domain) (:objects b - beaker) (:init (is_free b)) (:goal (and))", "type"),
    ("(:domain washing-domain) (:objects table_loc - location) (:init) (:goal (and))", "constant"),
])
def test_problem_errors(washing, body, message):
    dom, _ = washing
    with pytest.raises(ParseError, match=message):
        parse_problem(f"(define (problem p) {body})", dom)


STREAM = """(define (stream s)
  (:stream update_time_wash :kind eager
    :inputs (?a - timing ?b - timing) :outputs (?c - timing)
    :certified (is_washed ?c) :generator update_time))"""


def test_one_stream(washing):
    dom, _ = washing
    specs = parse_streams(STREAM, dom)
    assert len(specs) == 1
    assert specs.streams[0].kind == "eager"


def test_empty_stream_file(washing):
    dom, _ = washing
    assert len(parse_streams("", dom)) == 0
    assert len(parse_streams("; nothing here\n", dom)) == 0


def test_stream_errors(washing):
    dom, _ = washing
    with pytest.raises(ParseError, match="frobnicated"):
        parse_streams(STREAM.replace("(is_washed ?c)", "(frobnicated ?c)"), dom)
    with pytest.raises(ParseError, match="kind"):
        parse_streams(STREAM.replace(":kind eager", ":kind lazy"), dom)
    twice = STREAM[:-1] + STREAM[STREAM.index("(:stream"):]
    with pytest.raises(ParseError, match="duplicate"):
        parse_streams(twice, dom)
    with pytest.raises(ParseError, match="certified"):
        parse_streams(STREAM.replace(":certified (is_washed ?c)", ":certified (and)"), dom)


def test_electrochem_stream_file(electrochem):
    dom, prob, specs, cfg = electrochem
    (spec,) = specs.streams
    assert spec.kind == "optimistic" and spec.generator == "table-lookup"
    assert ("cell", "waste", "port_d") in spec.params["table"]


def test_print_roundtrip_washing(washing):
    dom, prob = washing
    again = parse_domain(print_pddl(dom))
    assert again == dom
    assert parse_problem(print_problem(prob), dom) == prob


def test_print_minimal():
    assert "(define (domain d)" in print_pddl(parse_domain(MINIMAL)).content


def test_conditional_effect_roundtrip():
    text = ("(define (domain d) (:requirements :strips :conditional-effects :negative-preconditions) "
            "(:predicates (p ?x) (q ?x)) (:action a :parameters (?x) :precondition (and) "
            ":effect (and (p ?x) (when (not (q ?x)) (q ?x)))))")
    dom = parse_domain(text)
    printed = print_pddl(dom).content
    assert "(when" in printed
    assert parse_domain(printed) == dom


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_roundtrip_generated_domains(seed):
    dom, prob = random_lifted_task(np.random.default_rng(seed))
    assert parse_domain(print_pddl(dom)) == dom
    assert parse_problem(print_problem(prob), dom) == prob


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_free_variables_are_parameters(seed):
    dom, _ = random_lifted_task(np.random.default_rng(seed))
    for a in dom.actions:
        assert a.free_variables() <= {p.name for p in a.parameters}


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="()abc ?-:;\n{", max_size=40))
def test_garbage_never_escapes_as_other_errors(text):
    # any input either parses or raises a located ParseError
    try:
        parse_domain(text)
    except ParseError as err:
        assert err.line >= 0 and err.col >= 0


def test_parse_atom():
    assert parse_atom("(At Beaker1 table_loc)") == Atom("at", ("beaker1", "table_loc"))
    with pytest.raises(ParseError):
        parse_atom("(at (x))")


def test_fixture_domains_parse():
    for name in ("washing.pddl", "electrochem.pddl"):
        parse_domain(load(name))
