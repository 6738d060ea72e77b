"""ASDL grammar loading and its instantiation into context-free rules.

The grammar surface syntax, one declaration per statement::

    terminal column, table, value
    sql = (select select, cond? where)
    agg_type = NoneAggOp | Max | Min
    cond = And(cond left, cond right) | Not(cond c)

A type is a list of ``|``-separated constructors. A constructor is either
unnamed (a single parenthesised field list) or named, optionally with a
field list. Fields are ``type_name name`` with an optional cardinality
suffix on the type: ``?`` (optional) or ``*`` (sequence). ``terminal``
declares categories (column, table, value, ...) that stay unexpanded until
schema grounding. ``--`` starts a line comment.

Every constructor is flattened into plain production rules: one rule per
realized combination of optional-field presence and sequence-field arity.
Named constructors keep their name as the rule's right-hand side token;
their field symbols become the rule's expansion slots.
"""

from __future__ import annotations

import hashlib
import itertools
import re
from dataclasses import dataclass, field
from functools import cached_property

from .errors import GrammarError

SINGLE = "single"
OPTIONAL = "optional"
SEQUENCE = "sequence"

STRING = "string"
NUMBER = "number"

DEFAULT_ROOT = "sql"
DEFAULT_RULE_CEILING = 50_000


# --- ASDL data model ---

@dataclass(frozen=True)
class AsdlField:
    """One field of a constructor: ``cond? where`` -> (cond, where, optional)."""
    type_name: str
    name: str
    cardinality: str = SINGLE


@dataclass(frozen=True)
class AsdlConstructor:
    """A constructor alternative; ``name`` is None for unnamed product types."""
    name: str | None
    fields: tuple[AsdlField, ...] = ()


@dataclass(frozen=True)
class AsdlTypeDecl:
    name: str
    constructors: tuple[AsdlConstructor, ...]


@dataclass(frozen=True)
class AsdlGrammar:
    """A parsed grammar: declared types, terminal categories, and the root."""
    types: tuple[AsdlTypeDecl, ...]
    terminals: tuple[str, ...]
    root: str

    @cached_property
    def type_names(self) -> frozenset[str]:
        return frozenset(t.name for t in self.types)

    def type_decl(self, name: str) -> AsdlTypeDecl:
        for decl in self.types:
            if decl.name == name:
                return decl
        raise KeyError(name)


# --- Surface syntax ---

_TOKEN_RE = re.compile(
    r"(?P<comment>--[^\n]*)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<punct>[(),|?*=])"
    r"|(?P<ws>\s+)"
    r"|(?P<bad>.)"
)


@dataclass(frozen=True)
class _Token:
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, line_start = 1, 0
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        col = m.start() - line_start + 1
        if kind == "bad":
            raise GrammarError(f"unexpected character {m.group()!r}", line, col)
        if kind in ("comment", "ws"):
            newlines = m.group().count("\n")
            if newlines:
                line += newlines
                line_start = m.start() + m.group().rindex("\n") + 1
            continue
        tokens.append(_Token(m.group(), line, col))
    return tokens


class _AsdlParser:
    """Recursive descent over the token stream."""

    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def _peek(self, ahead: int = 0) -> _Token | None:
        i = self.pos + ahead
        return self.tokens[i] if i < len(self.tokens) else None

    def _advance(self) -> _Token:
        tok = self._peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else _Token("", 1, 1)
            raise GrammarError("unexpected end of grammar text",
                               last.line, last.column)
        self.pos += 1
        return tok

    def _expect(self, text: str) -> _Token:
        tok = self._advance()
        if tok.text != text:
            raise GrammarError(f"expected {text!r}, found {tok.text!r}",
                               tok.line, tok.column)
        return tok

    def _ident(self, what: str) -> _Token:
        tok = self._advance()
        if not tok.text[0].isalpha() and tok.text[0] != "_":
            raise GrammarError(f"expected {what}, found {tok.text!r}",
                               tok.line, tok.column)
        return tok

    def parse(self) -> tuple[list[AsdlTypeDecl], list[str], list[tuple[AsdlField, _Token]]]:
        types: list[AsdlTypeDecl] = []
        terminals: list[str] = []
        field_sites: list[tuple[AsdlField, _Token]] = []
        while self._peek() is not None:
            if self._peek().text == "terminal":
                self._advance()
                terminals.append(self._ident("terminal category name").text)
                while self._peek() is not None and self._peek().text == ",":
                    self._advance()
                    terminals.append(self._ident("terminal category name").text)
            else:
                types.append(self._parse_type(field_sites))
        return types, terminals, field_sites

    def _parse_type(self, field_sites) -> AsdlTypeDecl:
        name = self._ident("type name")
        self._expect("=")
        first = self._parse_constructor(field_sites)
        constructors = [first]
        while self._peek() is not None and self._peek().text == "|":
            bar = self._advance()
            if first.name is None:
                raise GrammarError(
                    "an unnamed constructor cannot have alternatives",
                    bar.line, bar.column)
            constructors.append(self._parse_constructor(field_sites))
            if constructors[-1].name is None:
                raise GrammarError(
                    "an unnamed constructor cannot appear as an alternative",
                    bar.line, bar.column)
        return AsdlTypeDecl(name.text, tuple(constructors))

    def _parse_constructor(self, field_sites) -> AsdlConstructor:
        tok = self._peek()
        if tok is not None and tok.text == "(":
            return AsdlConstructor(None, self._parse_fields(field_sites))
        name = self._ident("constructor name")
        if self._peek() is not None and self._peek().text == "(":
            return AsdlConstructor(name.text, self._parse_fields(field_sites))
        return AsdlConstructor(name.text)

    def _parse_fields(self, field_sites) -> tuple[AsdlField, ...]:
        self._expect("(")
        fields = [self._parse_field(field_sites)]
        while self._peek() is not None and self._peek().text == ",":
            self._advance()
            fields.append(self._parse_field(field_sites))
        self._expect(")")
        return tuple(fields)

    def _parse_field(self, field_sites) -> AsdlField:
        type_tok = self._ident("field type")
        cardinality = SINGLE
        nxt = self._peek()
        if nxt is not None and nxt.text in ("?", "*"):
            cardinality = OPTIONAL if nxt.text == "?" else SEQUENCE
            self._advance()
        name_tok = self._ident("field name")
        fld = AsdlField(type_tok.text, name_tok.text, cardinality)
        field_sites.append((fld, type_tok))
        return fld


def load_asdl(grammar_text: str, root: str = DEFAULT_ROOT) -> AsdlGrammar:
    """Parse grammar text and validate declarations.

    The root type defaults to ``sql`` and must be declared. Field types must
    refer to a declared type or terminal category; constructor names must be
    unique within their type and must not shadow a type or category name.
    """
    types, terminals, field_sites = _AsdlParser(_tokenize(grammar_text)).parse()

    type_names = set()
    for decl in types:
        if decl.name in type_names:
            raise GrammarError(f"type {decl.name!r} declared twice")
        type_names.add(decl.name)
    terminal_set = set()
    for term in terminals:
        if term in terminal_set:
            raise GrammarError(f"terminal category {term!r} declared twice")
        if term in type_names:
            raise GrammarError(
                f"terminal category {term!r} is also declared as a type")
        terminal_set.add(term)

    if root not in type_names:
        raise GrammarError(f"no root type declared (expected a type named {root!r})")

    declared = type_names | terminal_set
    for fld, site in field_sites:
        if fld.type_name not in declared:
            raise GrammarError(
                f"field {fld.name!r} references undeclared type {fld.type_name!r}",
                site.line, site.column)
    for decl in types:
        seen = set()
        for ctor in decl.constructors:
            if ctor.name is None:
                continue
            if ctor.name in seen:
                raise GrammarError(
                    f"duplicate constructor {ctor.name!r} in type {decl.name!r}")
            seen.add(ctor.name)
            if ctor.name in declared:
                raise GrammarError(
                    f"constructor {ctor.name!r} shadows a declared type or "
                    f"terminal category")

    return AsdlGrammar(tuple(types), tuple(terminals), root)


def render_asdl(grammar: AsdlGrammar) -> str:
    """Render a grammar back to surface syntax; load_asdl inverts it."""
    lines = []
    if grammar.terminals:
        lines.append("terminal " + ", ".join(grammar.terminals))
    for decl in grammar.types:
        alts = []
        for ctor in decl.constructors:
            fields = ", ".join(
                f"{f.type_name}{'?' if f.cardinality == OPTIONAL else '*' if f.cardinality == SEQUENCE else ''}"
                f" {f.name}"
                for f in ctor.fields)
            if ctor.name is None:
                alts.append(f"({fields})")
            elif ctor.fields:
                alts.append(f"{ctor.name}({fields})")
            else:
                alts.append(ctor.name)
        lines.append(f"{decl.name} = " + " | ".join(alts))
    return "\n".join(lines) + "\n"


# --- Production rules ---

@dataclass(frozen=True)
class ProductionRule:
    """A flat rewrite rule.

    ``rhs`` holds the symbols as written (field types for unnamed
    constructors, the constructor name for named ones, the grounded token
    for terminal rules). ``children`` holds the nonterminals to expand, in
    order; for unnamed constructors it coincides with ``rhs``.
    """
    rule_id: int
    lhs: str
    rhs: tuple[str, ...]
    children: tuple[str, ...] = ()
    constructor_tag: str | None = None

    def __post_init__(self):
        if not self.rhs:
            raise GrammarError(f"rule for {self.lhs!r} has an empty right-hand side")

    @property
    def signature(self) -> tuple:
        return (self.lhs, self.constructor_tag, self.rhs, self.children)

    def display(self) -> str:
        return f"{self.lhs} -> " + ", ".join(self.rhs)


@dataclass(frozen=True)
class RuleSet:
    """An ordered rule inventory with a designated root symbol."""
    rules: tuple[ProductionRule, ...]
    root: str
    categories: frozenset[str]
    type_names: frozenset[str]

    def __post_init__(self):
        for i, rule in enumerate(self.rules):
            if rule.rule_id != i:
                raise GrammarError(
                    f"rule_id {rule.rule_id} out of sequence at position {i}")

    @property
    def nonterminals(self) -> frozenset[str]:
        return self.type_names | self.categories

    @cached_property
    def _by_lhs(self) -> dict[str, tuple[ProductionRule, ...]]:
        index: dict[str, list[ProductionRule]] = {}
        for rule in self.rules:
            index.setdefault(rule.lhs, []).append(rule)
        return {lhs: tuple(rules) for lhs, rules in index.items()}

    @cached_property
    def signatures(self) -> frozenset[tuple]:
        return frozenset(rule.signature for rule in self.rules)

    @cached_property
    def constructor_owners(self) -> dict[str, frozenset[str]]:
        owners: dict[str, set[str]] = {}
        for rule in self.rules:
            if rule.constructor_tag is not None:
                owners.setdefault(rule.constructor_tag, set()).add(rule.lhs)
        return {tag: frozenset(lhs) for tag, lhs in owners.items()}

    @cached_property
    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(f"root={self.root}\n".encode())
        for rule in self.rules:
            line = "|".join((
                str(rule.rule_id), rule.lhs, rule.constructor_tag or "",
                ",".join(rule.rhs), ",".join(rule.children)))
            digest.update(line.encode())
            digest.update(b"\n")
        return digest.hexdigest()

    def __len__(self) -> int:
        return len(self.rules)

    def by_id(self, rule_id: int) -> ProductionRule:
        if not 0 <= rule_id < len(self.rules):
            raise KeyError(f"no rule with id {rule_id}")
        return self.rules[rule_id]

    def by_lhs(self, symbol: str) -> tuple[ProductionRule, ...]:
        return self._by_lhs.get(symbol, ())

    def extended(self, extra: list[tuple[str, tuple[str, ...]]]) -> "RuleSet":
        """Append terminal rules (lhs, rhs) with fresh sequential ids.

        Signatures already present are skipped, so extension is idempotent.
        """
        rules = list(self.rules)
        seen = set(self.signatures)
        for lhs, rhs in extra:
            candidate = ProductionRule(len(rules), lhs, rhs)
            if candidate.signature in seen:
                continue
            seen.add(candidate.signature)
            rules.append(candidate)
        return RuleSet(tuple(rules), self.root, self.categories, self.type_names)

    def dump(self) -> str:
        """One rule per line: ``rule_id<TAB>lhs<TAB>rhs-symbols-space-separated``."""
        return "".join(
            f"{r.rule_id}\t{r.lhs}\t{' '.join(r.rhs)}\n" for r in self.rules)


def _field_choices(fld: AsdlField, max_seq_arity: int) -> list[tuple[str, ...]]:
    if fld.cardinality == SINGLE:
        return [(fld.type_name,)]
    if fld.cardinality == OPTIONAL:
        return [(), (fld.type_name,)]
    return [(fld.type_name,) * arity for arity in range(1, max_seq_arity + 1)]


def derive_rules(grammar: AsdlGrammar, max_seq_arity: int,
                 max_rules: int = DEFAULT_RULE_CEILING) -> RuleSet:
    """Instantiate every constructor into flat production rules.

    Optional fields yield one rule per presence combination (absent first);
    sequence fields one rule per arity from 1 to ``max_seq_arity``. Rule
    order and ids are a pure function of the grammar text.
    """
    if max_seq_arity < 1:
        raise GrammarError("max_seq_arity must be at least 1")
    rules: list[ProductionRule] = []
    seen: set[tuple] = set()
    for decl in grammar.types:
        for ctor in decl.constructors:
            choice_lists = [_field_choices(f, max_seq_arity) for f in ctor.fields]
            for combo in itertools.product(*choice_lists):
                children = tuple(itertools.chain.from_iterable(combo))
                if ctor.name is not None:
                    rhs = (ctor.name,)
                else:
                    if not children:
                        raise GrammarError(
                            f"constructor of type {decl.name!r} realizes an "
                            f"empty production (all fields absent)")
                    rhs = children
                rule = ProductionRule(len(rules), decl.name, rhs, children,
                                      ctor.name)
                if rule.signature in seen:
                    raise GrammarError(
                        f"ambiguous expansion in type {decl.name!r}: two "
                        f"field realizations produce the rule {rule.display()!r}")
                seen.add(rule.signature)
                rules.append(rule)
                if len(rules) > max_rules:
                    raise GrammarError(
                        f"rule expansion exceeds the ceiling of {max_rules} "
                        f"rules; reduce optional/sequence fields or the arity")
    return RuleSet(tuple(rules), grammar.root,
                   frozenset(grammar.terminals), grammar.type_names)


# --- Trees ---

@dataclass(frozen=True)
class SqlAst:
    """A typed program tree node.

    ``kind`` is a constructor name (``Max``, ``And``), a type name for
    unnamed constructors (``sql``, ``select``), or a terminal category
    (``column``, ``table``, ``value``). Terminal nodes carry ``payload``
    (the column/table name or literal text) and, for values,
    ``payload_kind`` distinguishing string from number literals.
    """
    kind: str
    children: tuple["SqlAst", ...] = ()
    payload: str | None = None
    payload_kind: str | None = None

    def __post_init__(self):
        if self.payload is not None and self.children:
            raise ValueError("terminal nodes cannot have children")

    @property
    def is_terminal(self) -> bool:
        return self.payload is not None

    def to_dict(self) -> dict:
        if self.payload is not None:
            d = {"kind": self.kind, "payload": self.payload}
            if self.payload_kind is not None:
                d["payload_kind"] = self.payload_kind
            return d
        return {"kind": self.kind,
                "children": [c.to_dict() for c in self.children]}


def value_token(payload: str, payload_kind: str) -> str:
    """Canonical grounded-rule token for a literal (strings keep quotes)."""
    if payload_kind == STRING:
        return f'"{payload}"'
    return payload


def split_value_token(token: str) -> tuple[str, str]:
    """Inverse of value_token: token -> (payload, payload_kind)."""
    if token.startswith('"') and token.endswith('"') and len(token) >= 2:
        return token[1:-1], STRING
    return token, NUMBER


def terminal_token(node: SqlAst) -> str:
    """The grounded-rule token a terminal node corresponds to."""
    if node.payload is None:
        raise ValueError(f"node {node.kind!r} is not terminal")
    if node.kind == "value":
        return value_token(node.payload, node.payload_kind or STRING)
    return node.payload


def leaf_from_rule(rule: ProductionRule) -> SqlAst:
    """Build the terminal node a grounded rule produces."""
    token = rule.rhs[0]
    if rule.lhs == "value":
        payload, kind = split_value_token(token)
        return SqlAst("value", payload=payload, payload_kind=kind)
    return SqlAst(rule.lhs, payload=token)


# --- Validation ---

@dataclass(frozen=True)
class Violation:
    """One defect found in a tree, anchored by its child-index path."""
    path: tuple[int, ...]
    code: str
    message: str
    severity: str = "error"


def _symbol_candidates(rules: RuleSet, node: SqlAst) -> frozenset[str]:
    if node.kind in rules.nonterminals:
        return frozenset((node.kind,))
    return rules.constructor_owners.get(node.kind, frozenset())


def match_rule(rules: RuleSet, node: SqlAst, expected: str) -> ProductionRule | None:
    """The unique rule realizing ``node`` at a slot expecting ``expected``."""
    for rule in rules.by_lhs(expected):
        if rule.lhs in rules.categories:
            if (node.kind == expected and node.payload is not None
                    and terminal_token(node) == rule.rhs[0]):
                return rule
            continue
        if node.payload is not None:
            continue
        if rule.constructor_tag is not None:
            if node.kind != rule.constructor_tag:
                continue
        elif node.kind != rule.lhs:
            continue
        if len(node.children) != len(rule.children):
            continue
        if all(sym in _symbol_candidates(rules, child)
               for child, sym in zip(node.children, rule.children)):
            return rule
    return None


def proposed_display(rules: RuleSet, node: SqlAst, expected: str) -> str:
    """Human-readable form of the rule a node would need."""
    if node.payload is not None:
        return f"{expected} -> {terminal_token(node)}"
    if node.kind not in rules.nonterminals and node.kind not in rules.type_names:
        owners = rules.constructor_owners.get(node.kind)
        if owners or node.kind[:1].isupper():
            return f"{expected} -> {node.kind}"
    parts = []
    for child in node.children:
        cands = _symbol_candidates(rules, child)
        parts.append(sorted(cands)[0] if cands else child.kind)
    return f"{expected} -> " + ", ".join(parts)


def walk_rules(rules: RuleSet, tree: SqlAst, on_violation) -> list[tuple[SqlAst, ProductionRule]]:
    """Preorder walk pairing each node with its rule.

    Nodes that match no rule are handed to ``on_violation`` and not
    descended into.
    """
    applications: list[tuple[SqlAst, ProductionRule]] = []

    def visit(node: SqlAst, expected: str, path: tuple[int, ...]) -> None:
        rule = match_rule(rules, node, expected)
        if rule is None:
            if not path and expected not in _symbol_candidates(rules, node):
                on_violation(Violation(
                    path, "root-mismatch",
                    f"tree realizes {node.kind!r}, rule set root is {expected!r}"))
            else:
                on_violation(Violation(
                    path, "missing-rule",
                    f"no rule {proposed_display(rules, node, expected)!r} "
                    f"in the rule set"))
            return
        applications.append((node, rule))
        for i, (child, sym) in enumerate(zip(node.children, rule.children)):
            visit(child, sym, path + (i,))

    visit(tree, rules.root, ())
    return applications


def validate_tree(rules: RuleSet, tree: SqlAst) -> list[Violation]:
    """All violations keeping the tree from deriving under ``rules``."""
    violations: list[Violation] = []
    walk_rules(rules, tree, violations.append)
    return violations
