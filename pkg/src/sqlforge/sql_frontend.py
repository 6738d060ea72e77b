"""Conversion between SQL text, program trees, and rule sequences.

The reference dialect::

    SELECT <agg-list> FROM <table> [WHERE <cond>]

where an agg is a bare column or ``Max|Min|Count|Sum|Avg`` applied to a
column, and a condition is a boolean combination (AND/OR/NOT, parentheses)
of ``column <op> literal`` comparisons with ops ``= != < <= > >=``.
Literals are double-quoted strings or unsigned decimal numbers.

Canonical surface form: uppercase keywords, title-case aggregate names,
lowercase identifiers, single spaces, string literals double-quoted, and
parentheses only where precedence requires them. Parsing a canonical
string and rendering the tree reproduces the string byte for byte.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .errors import DerivationError, SqlParseError
from .grammar import (
    NUMBER,
    STRING,
    RuleSet,
    SqlAst,
    leaf_from_rule,
    walk_rules,
)
from .schema import SchemaDb

logger = logging.getLogger(__name__)

RESERVED = frozenset({"select", "from", "where", "and", "or", "not"})
AGG_TAGS = {"max": "Max", "min": "Min", "count": "Count",
            "sum": "Sum", "avg": "Avg"}
OP_TAGS = {"=": "Eq", "!=": "Ne", "<": "Lt", "<=": "Le", ">": "Gt", ">=": "Ge"}
OP_TEXT = {tag: op for op, tag in OP_TAGS.items()}

_PRECEDENCE = {"Or": 1, "And": 2, "Not": 3, "Compare": 4}

_SQL_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r'|(?P<string>"[^"]*")'
    r"|(?P<number>\d+(?:\.\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op><=|>=|!=|=|<|>)"
    r"|(?P<punct>[(),])"
    r"|(?P<bad>.)"
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[Token]:
    tokens = []
    for m in _SQL_TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "ws":
            continue
        if kind == "bad":
            raise SqlParseError(f"unexpected character {m.group()!r}", m.start())
        tokens.append(Token(kind, m.group(), m.start()))
    tokens.append(Token("eof", "", len(text)))
    return tokens


class _SqlParser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect_keyword(self, word: str) -> Token:
        tok = self.advance()
        if tok.kind != "ident" or tok.text.lower() != word:
            raise SqlParseError(f"expected {word.upper()}, found {tok.text!r}",
                                tok.pos)
        return tok

    def expect_punct(self, text: str) -> Token:
        tok = self.advance()
        if tok.text != text:
            raise SqlParseError(f"expected {text!r}, found {tok.text!r}", tok.pos)
        return tok

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text.lower() == word

    def parse_query(self) -> SqlAst:
        self.expect_keyword("select")
        aggs = self.parse_agg_list()
        self.expect_keyword("from")
        table = self.parse_name("table name")
        children = [SqlAst("select", tuple(aggs)), SqlAst("table", payload=table)]
        if self.at_keyword("where"):
            self.advance()
            children.append(self.parse_cond())
        tok = self.peek()
        if tok.kind != "eof":
            raise SqlParseError(f"unexpected trailing input {tok.text!r}", tok.pos)
        return SqlAst("sql", tuple(children))

    def parse_agg_list(self) -> list[SqlAst]:
        if self.at_keyword("from"):
            raise SqlParseError("empty select list", self.peek().pos)
        aggs = [self.parse_agg()]
        while self.peek().text == ",":
            self.advance()
            aggs.append(self.parse_agg())
        return aggs

    def parse_agg(self) -> SqlAst:
        tok = self.peek()
        if tok.kind != "ident" or tok.text.lower() in RESERVED:
            raise SqlParseError(
                f"expected a column or aggregate, found {tok.text!r}", tok.pos)
        lowered = tok.text.lower()
        if lowered in AGG_TAGS and self.tokens[self.pos + 1].text == "(":
            self.advance()
            self.expect_punct("(")
            column = self.parse_name("column name")
            self.expect_punct(")")
            agg_type = AGG_TAGS[lowered]
        else:
            column = self.parse_name("column name")
            agg_type = "NoneAggOp"
        return SqlAst("agg", (SqlAst(agg_type), SqlAst("column", payload=column)))

    def parse_name(self, what: str) -> str:
        tok = self.advance()
        if tok.kind != "ident" or tok.text.lower() in RESERVED:
            raise SqlParseError(f"expected {what}, found {tok.text!r}", tok.pos)
        return tok.text.lower()

    def parse_cond(self) -> SqlAst:
        node = self.parse_and()
        while self.at_keyword("or"):
            self.advance()
            node = SqlAst("Or", (node, self.parse_and()))
        return node

    def parse_and(self) -> SqlAst:
        node = self.parse_unary()
        while self.at_keyword("and"):
            self.advance()
            node = SqlAst("And", (node, self.parse_unary()))
        return node

    def parse_unary(self) -> SqlAst:
        if self.at_keyword("not"):
            self.advance()
            return SqlAst("Not", (self.parse_unary(),))
        if self.peek().text == "(":
            self.advance()
            node = self.parse_cond()
            self.expect_punct(")")
            return node
        return self.parse_comparison()

    def parse_comparison(self) -> SqlAst:
        column = self.parse_name("column name")
        op = self.advance()
        if op.kind != "op":
            raise SqlParseError(f"expected a comparison operator, found "
                                f"{op.text!r}", op.pos)
        lit = self.advance()
        if lit.kind == "string":
            value = SqlAst("value", payload=lit.text[1:-1], payload_kind=STRING)
        elif lit.kind == "number":
            value = SqlAst("value", payload=lit.text, payload_kind=NUMBER)
        else:
            raise SqlParseError(f"expected a literal, found {lit.text!r}", lit.pos)
        return SqlAst("Compare", (SqlAst(OP_TAGS[op.text]),
                                  SqlAst("column", payload=column), value))


def _resolve(tree: SqlAst, schema: SchemaDb, from_table, on_cross_table: str) -> SqlAst:
    if tree.kind == "table":
        return SqlAst("table", payload=from_table.name)
    if tree.kind == "column":
        name = tree.payload or ""
        col = from_table.column(name)
        if col is None:
            owners = schema.columns_named(name)
            if not owners:
                raise SqlParseError(f"unknown column {name!r} in database "
                                    f"{schema.db_id!r}")
            message = (f"column {name!r} is not in table {from_table.name!r} "
                       f"(it belongs to "
                       f"{', '.join(sorted({c.table for c in owners}))})")
            if on_cross_table == "error":
                raise SqlParseError(message)
            logger.warning("%s", message)
            col = owners[0]
        return SqlAst("column", payload=col.name)
    if tree.payload is not None:
        return tree
    return SqlAst(tree.kind,
                  tuple(_resolve(c, schema, from_table, on_cross_table)
                        for c in tree.children),
                  )


def parse_sql(text: str, schema: SchemaDb | None, *,
              on_cross_table: str = "error") -> SqlAst:
    """Parse dialect text into a program tree.

    Identifiers are resolved case-insensitively against ``schema``; columns
    outside the FROM table raise unless ``on_cross_table`` is ``"warn"``
    (real corpora contain such queries). With ``schema=None`` the tree is
    built purely syntactically, identifiers lowercased and unchecked.
    """
    if on_cross_table not in ("error", "warn"):
        raise ValueError("on_cross_table must be 'error' or 'warn'")
    tree = _SqlParser(_tokenize(text)).parse_query()
    if schema is None:
        return tree
    table_node = tree.children[1]
    from_table = schema.table(table_node.payload or "")
    if from_table is None:
        raise SqlParseError(f"unknown table {table_node.payload!r} in database "
                            f"{schema.db_id!r}")
    return _resolve(tree, schema, from_table, on_cross_table)


def _render_literal(node: SqlAst) -> str:
    if node.payload_kind == STRING:
        return f'"{node.payload}"'
    return node.payload or ""


def _render_cond(node: SqlAst) -> str:
    if node.kind == "Compare":
        op_node, col, val = node.children
        return f"{col.payload} {OP_TEXT[op_node.kind]} {_render_literal(val)}"
    if node.kind in ("And", "Or"):
        mine = _PRECEDENCE[node.kind]
        left, right = node.children
        left_text = _render_cond(left)
        if _PRECEDENCE.get(left.kind, 0) < mine:
            left_text = f"({left_text})"
        right_text = _render_cond(right)
        if _PRECEDENCE.get(right.kind, 0) <= mine:
            right_text = f"({right_text})"
        return f"{left_text} {node.kind.upper()} {right_text}"
    if node.kind == "Not":
        inner = node.children[0]
        inner_text = _render_cond(inner)
        if _PRECEDENCE.get(inner.kind, 0) < _PRECEDENCE["Not"]:
            inner_text = f"({inner_text})"
        return f"NOT {inner_text}"
    raise DerivationError(f"node {node.kind!r} is outside the reference dialect")


def _render_agg(node: SqlAst) -> str:
    if node.kind != "agg" or len(node.children) != 2:
        raise DerivationError(f"node {node.kind!r} is outside the reference dialect")
    agg_type, column = node.children
    if agg_type.kind == "NoneAggOp":
        return column.payload or ""
    if agg_type.kind not in AGG_TAGS.values():
        raise DerivationError(f"unknown aggregate {agg_type.kind!r}")
    return f"{agg_type.kind}({column.payload})"


def render_sql(tree: SqlAst) -> str:
    """Canonical surface form of a reference-dialect tree."""
    if tree.kind != "sql" or not 2 <= len(tree.children) <= 3:
        raise DerivationError("tree is not a reference-dialect query")
    select, table = tree.children[0], tree.children[1]
    if select.kind != "select" or not select.children or table.kind != "table":
        raise DerivationError("tree is not a reference-dialect query")
    text = ("SELECT " + ", ".join(_render_agg(a) for a in select.children)
            + f" FROM {table.payload}")
    if len(tree.children) == 3:
        text += " WHERE " + _render_cond(tree.children[2])
    return text


def canonical_sql(text: str, schema: SchemaDb | None = None) -> str:
    """Parse-then-render canonicalization; the dedup and coverage key."""
    return render_sql(parse_sql(text, schema, on_cross_table="warn"))


# --- Rule sequences ---

@dataclass(frozen=True)
class Derivation:
    """A preorder, leftmost sequence of rule ids under a fixed rule set."""
    rule_ids: tuple[int, ...]
    rules: RuleSet = field(repr=False)

    def __len__(self) -> int:
        return len(self.rule_ids)


def linearize(tree: SqlAst, rules: RuleSet) -> Derivation:
    """The rule sequence that derives ``tree`` from the root."""
    def fail(violation):
        raise DerivationError(violation.message)

    applications = walk_rules(rules, tree, fail)
    return Derivation(tuple(rule.rule_id for _, rule in applications), rules)


def delinearize(derivation: Derivation, rules: RuleSet) -> SqlAst:
    """Replay a leftmost derivation back into the unique tree it encodes."""
    if derivation.rules.fingerprint != rules.fingerprint:
        raise DerivationError(
            "derivation was produced under a different rule set")
    ids = derivation.rule_ids
    pos = 0

    def build(expected: str, pending: tuple[str, ...]) -> SqlAst:
        nonlocal pos
        if pos >= len(ids):
            open_syms = ", ".join((expected,) + pending)
            raise DerivationError(
                f"derivation underflow: rules exhausted with open "
                f"nonterminals: {open_syms}")
        try:
            rule = rules.by_id(ids[pos])
        except KeyError as exc:
            raise DerivationError(str(exc)) from exc
        if rule.lhs != expected:
            raise DerivationError(
                f"rule {rule.display()!r} cannot expand {expected!r} "
                f"(sequence position {pos})")
        pos += 1
        if rule.lhs in rules.categories:
            return leaf_from_rule(rule)
        children = []
        for i, sym in enumerate(rule.children):
            children.append(build(sym, rule.children[i + 1:] + pending))
        if rule.constructor_tag is not None:
            return SqlAst(rule.constructor_tag, tuple(children))
        return SqlAst(rule.lhs, tuple(children))

    tree = build(rules.root, ())
    if pos != len(ids):
        raise DerivationError(
            f"derivation overflow: {len(ids) - pos} rules remain after the "
            f"tree completed")
    return tree
