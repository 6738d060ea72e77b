import pytest

from sqlforge import derive_rules, load_asdl, load_schema
from sqlforge.grammar import SqlAst
from sqlforge.pipeline import _collect_literals, _ground_for, load_corpus
from sqlforge.resources import (
    geography_corpus_path,
    geography_schema_path,
    reference_grammar_text,
    simple_grammar_text,
)


@pytest.fixture(scope="session")
def simple_grammar():
    return load_asdl(simple_grammar_text())


@pytest.fixture(scope="session")
def simple_rules(simple_grammar):
    return derive_rules(simple_grammar, 2)


@pytest.fixture(scope="session")
def simple_rules_age(simple_rules):
    """Simple-grammar rules grounded with the single column ``age``."""
    return simple_rules.extended([("column", ("age",))])


@pytest.fixture(scope="session")
def reference_grammar():
    return load_asdl(reference_grammar_text())


@pytest.fixture(scope="session")
def geo_schemas():
    return load_schema(geography_schema_path())


@pytest.fixture(scope="session")
def geo_db(geo_schemas):
    return geo_schemas[0]


@pytest.fixture(scope="session")
def geo_corpus(geo_schemas):
    return load_corpus(geography_corpus_path(), geo_schemas)


@pytest.fixture(scope="session")
def geo_rules(reference_grammar, geo_db, geo_corpus):
    """Reference rules grounded over the geography db and corpus literals."""
    literals = _collect_literals(ex.tree for ex in geo_corpus)
    return _ground_for(derive_rules(reference_grammar, 2), [geo_db], literals)


def max_age_tree() -> SqlAst:
    """The aggregate-selection tree for picking the maximum age."""
    return SqlAst("sql", (
        SqlAst("select", (
            SqlAst("agg", (SqlAst("Max"), SqlAst("column", payload="age"))),
        )),
    ))
