import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import max_age_tree
from sqlforge import derive_rules, load_asdl, render_asdl, validate_tree
from sqlforge.errors import GrammarError
from sqlforge.grammar import (
    OPTIONAL,
    SEQUENCE,
    SINGLE,
    AsdlConstructor,
    AsdlField,
    AsdlGrammar,
    AsdlTypeDecl,
    SqlAst,
)


# --- Loading ---

def test_load_optional_field():
    grammar = load_asdl("terminal select, cond\nsql = (select select, cond? where)")
    decl = grammar.type_decl("sql")
    assert len(decl.constructors) == 1
    ctor = decl.constructors[0]
    assert ctor.name is None
    assert ctor.fields == (AsdlField("select", "select", SINGLE),
                           AsdlField("cond", "where", OPTIONAL))


def test_load_nullary_alternatives():
    grammar = load_asdl("agg_type = NoneAggOp | Max | Min", root="agg_type")
    decl = grammar.type_decl("agg_type")
    assert [c.name for c in decl.constructors] == ["NoneAggOp", "Max", "Min"]
    assert all(c.fields == () for c in decl.constructors)


def test_load_empty_string_is_rootless():
    with pytest.raises(GrammarError, match="no root type"):
        load_asdl("")


def test_load_reports_line_and_column():
    with pytest.raises(GrammarError) as err:
        load_asdl("sql = (select select,\n  cond? ?)")
    assert err.value.line == 2
    assert err.value.column == 9


def test_load_rejects_undeclared_type():
    with pytest.raises(GrammarError, match="undeclared type 'mystery'"):
        load_asdl("sql = (mystery thing)")


def test_load_rejects_duplicate_constructor():
    with pytest.raises(GrammarError, match="duplicate constructor"):
        load_asdl("sql = Max | Max")


def test_load_rejects_unnamed_alternative():
    with pytest.raises(GrammarError, match="unnamed constructor"):
        load_asdl("terminal column\nsql = (column c) | Max")


def test_load_rejects_constructor_shadowing_type():
    with pytest.raises(GrammarError, match="shadows"):
        load_asdl("sql = cond\ncond = Max")


def test_load_rejects_duplicate_type():
    with pytest.raises(GrammarError, match="declared twice"):
        load_asdl("sql = A\nsql = B")


def test_load_rejects_terminal_type_clash():
    with pytest.raises(GrammarError, match="also declared as a type"):
        load_asdl("terminal sql\nsql = A")


def test_load_custom_root():
    grammar = load_asdl("pick = A | B", root="pick")
    assert grammar.root == "pick"


def test_comments_are_ignored(simple_grammar):
    text = "-- a comment\n" + render_asdl(simple_grammar)
    assert load_asdl(text) == simple_grammar


# --- Rule derivation ---

def test_optional_field_expands_to_two_rules():
    grammar = load_asdl(
        "terminal column\n"
        "sql = (select select, cond? where)\n"
        "select = (column c)\n"
        "cond = Leaf")
    rules = derive_rules(grammar, 1)
    displays = [r.display() for r in rules.rules]
    assert "sql -> select" in displays
    assert "sql -> select, cond" in displays


def test_sequence_field_expands_per_arity():
    grammar = load_asdl("terminal agg\nselect = (agg* aggs)", root="select")
    rules = derive_rules(grammar, 2)
    assert [r.display() for r in rules.rules] == ["select -> agg",
                                                  "select -> agg, agg"]


def test_plain_constructor_yields_one_rule():
    grammar = load_asdl("terminal column\nsql = (column a, column b)")
    rules = derive_rules(grammar, 5)
    assert len(rules) == 1
    assert rules.rules[0].display() == "sql -> column, column"


def test_simple_fixture_inventory(simple_rules):
    expected = {
        ("sql", ("select",)),
        ("sql", ("select", "cond")),
        ("select", ("agg",)),
        ("select", ("agg", "agg")),
        ("agg", ("agg_type", "column")),
        ("agg_type", ("NoneAggOp",)),
        ("agg_type", ("Max",)),
        ("agg_type", ("Min",)),
        ("cond", ("And",)),
        ("cond", ("Or",)),
        ("cond", ("Not",)),
    }
    assert {(r.lhs, r.rhs) for r in simple_rules.rules} == expected


def test_named_constructor_keeps_children(simple_rules):
    and_rule = next(r for r in simple_rules.rules if r.constructor_tag == "And")
    assert and_rule.rhs == ("And",)
    assert and_rule.children == ("cond", "cond")


def test_derivation_is_deterministic(simple_grammar):
    text = render_asdl(simple_grammar)
    first = derive_rules(load_asdl(text), 2)
    second = derive_rules(load_asdl(text), 2)
    assert [(r.rule_id, r.signature) for r in first.rules] == \
           [(r.rule_id, r.signature) for r in second.rules]
    assert first.fingerprint == second.fingerprint


def test_rule_ceiling():
    grammar = load_asdl(
        "terminal column\n"
        "sql = (column? a, column? b, column? c, column d)")
    with pytest.raises(GrammarError, match="ceiling"):
        derive_rules(grammar, 1, max_rules=4)


def test_ambiguous_expansion_rejected():
    grammar = load_asdl("terminal column\nsql = (column? a, column? b)")
    with pytest.raises(GrammarError, match="ambiguous expansion"):
        derive_rules(grammar, 1)


def test_empty_production_rejected():
    grammar = load_asdl("terminal column\nsql = (column? a)")
    with pytest.raises(GrammarError, match="empty production"):
        derive_rules(grammar, 1)


def test_arity_must_be_positive(simple_grammar):
    with pytest.raises(GrammarError):
        derive_rules(simple_grammar, 0)


def test_dump_format(simple_rules):
    lines = simple_rules.dump().splitlines()
    assert lines[0] == "0\tsql\tselect"
    assert lines[1] == "1\tsql\tselect cond"
    assert len(lines) == len(simple_rules)


# --- Grammar generation for properties ---

_TERMINALS = ("column", "table", "value")


@st.composite
def small_grammars(draw):
    """Grammars whose constructors have pairwise-distinct field types and
    at least one mandatory field, so every realization is distinct."""
    n_types = draw(st.integers(1, 3))
    type_names = [f"t{i}" for i in range(n_types)]
    symbols = list(_TERMINALS) + type_names
    types = []
    for i, name in enumerate(type_names):
        n_ctors = draw(st.integers(1, 3))
        ctors = []
        named = n_ctors > 1 or draw(st.booleans())
        for j in range(n_ctors):
            n_fields = draw(st.integers(0 if named else 1, 3))
            field_types = draw(st.permutations(symbols))[:n_fields]
            fields = []
            has_single = False
            for k, ftype in enumerate(field_types):
                card = draw(st.sampled_from((SINGLE, OPTIONAL, SEQUENCE)))
                if k == len(field_types) - 1 and not named and not has_single \
                        and card != SINGLE and all(
                            f.cardinality != SINGLE for f in fields):
                    card = SINGLE
                has_single = has_single or card == SINGLE
                fields.append(AsdlField(ftype, f"f{k}", card))
            ctors.append(AsdlConstructor(f"C{i}_{j}" if named else None,
                                         tuple(fields)))
        types.append(AsdlTypeDecl(name, tuple(ctors)))
    return AsdlGrammar(tuple(types), _TERMINALS, type_names[0])


@settings(max_examples=60, deadline=None)
@given(grammar=small_grammars(), arity=st.integers(1, 3))
def test_rule_count_matches_enumeration(grammar, arity):
    rules = derive_rules(load_asdl(render_asdl(grammar), root=grammar.root),
                         arity)
    total = 0
    for decl in grammar.types:
        for ctor in decl.constructors:
            choices = []
            for fld in ctor.fields:
                if fld.cardinality == SINGLE:
                    choices.append(1)
                elif fld.cardinality == OPTIONAL:
                    choices.append(2)
                else:
                    choices.append(arity)
            expected = 1
            for c in choices:
                expected *= c
            realized = len(set(itertools.product(
                *[range(c) for c in choices])))
            assert realized == expected
            total += expected
    assert len(rules) == total


@settings(max_examples=60, deadline=None)
@given(grammar=small_grammars())
def test_render_load_round_trip(grammar):
    assert load_asdl(render_asdl(grammar), root=grammar.root) == grammar


def test_fixture_round_trip(simple_grammar, reference_grammar):
    assert load_asdl(render_asdl(simple_grammar)) == simple_grammar
    assert load_asdl(render_asdl(reference_grammar)) == reference_grammar


# --- Tree validation ---

def test_validate_tree_built_by_construction(simple_rules_age):
    assert validate_tree(simple_rules_age, max_age_tree()) == []


def test_validate_root_mismatch(simple_rules):
    violations = validate_tree(simple_rules, SqlAst("select", (
        SqlAst("agg", (SqlAst("Max"), SqlAst("column", payload="age"))),)))
    assert len(violations) == 1
    assert violations[0].path == ()
    assert violations[0].code == "root-mismatch"


def test_validate_reports_missing_arity_rule(simple_rules_age):
    agg = SqlAst("agg", (SqlAst("Max"), SqlAst("column", payload="age")))
    tree = SqlAst("sql", (SqlAst("select", (agg, agg, agg)),))
    violations = validate_tree(simple_rules_age, tree)
    assert len(violations) == 1
    assert violations[0].code == "missing-rule"
    assert "select -> agg, agg, agg" in violations[0].message
    # independent confirmation by linear scan
    assert all(r.children != ("agg", "agg", "agg")
               for r in simple_rules_age.rules)


def test_validate_reports_ungrounded_column(simple_rules):
    violations = validate_tree(simple_rules, max_age_tree())
    assert len(violations) == 1
    assert "column -> age" in violations[0].message


def test_terminal_node_rejects_children():
    with pytest.raises(ValueError):
        SqlAst("column", (SqlAst("Max"),), payload="age")
