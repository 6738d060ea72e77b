"""Relational schema model, terminal-rule grounding, and semantic checks.

A schema file is JSON::

    { "databases": [ { "db_id": "geo",
                       "tables": [ { "name": "river",
                                     "columns": [ {"name": "length",
                                                   "type": "number"} ] } ],
                       "content": { "river.length": [750, 1200] } } ] }

Column types are ``text`` or ``number``; the optional ``content`` section
lists observed literals per ``table.column`` and seeds the value inventory
used for grounding and membership checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

from .errors import SchemaError
from .grammar import NUMBER, STRING, RuleSet, SqlAst, Violation, value_token

TEXT_TYPE = "text"
NUMBER_TYPE = "number"
_KIND_OF_TYPE = {TEXT_TYPE: STRING, NUMBER_TYPE: NUMBER}

SOURCE_CONTENT = "content"
SOURCE_CORPUS = "corpus"


@dataclass(frozen=True)
class Column:
    name: str
    table: str
    value_type: str

    @property
    def literal_kind(self) -> str:
        return _KIND_OF_TYPE[self.value_type]


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[Column, ...]

    def column(self, name: str) -> Column | None:
        lowered = name.lower()
        for col in self.columns:
            if col.name.lower() == lowered:
                return col
        return None


@dataclass(frozen=True)
class InventoryLiteral:
    value: str
    kind: str
    source: str = SOURCE_CONTENT


@dataclass(frozen=True)
class SchemaDb:
    """One database: tables, columns, and the literal inventory."""
    db_id: str
    tables: tuple[Table, ...]
    inventory: Mapping[tuple[str, str], tuple[InventoryLiteral, ...]]

    def table(self, name: str) -> Table | None:
        lowered = name.lower()
        for table in self.tables:
            if table.name.lower() == lowered:
                return table
        return None

    def columns_named(self, name: str) -> tuple[Column, ...]:
        lowered = name.lower()
        return tuple(col for table in self.tables for col in table.columns
                     if col.name.lower() == lowered)

    @cached_property
    def column_names(self) -> tuple[str, ...]:
        """Distinct column names in table order, first occurrence wins."""
        seen: dict[str, None] = {}
        for table in self.tables:
            for col in table.columns:
                seen.setdefault(col.name, None)
        return tuple(seen)

    def literals(self, table: str, column: str) -> tuple[InventoryLiteral, ...]:
        return self.inventory.get((table, column), ())

    def with_corpus_literals(
        self, by_column: Mapping[str, Sequence[tuple[str, str]]]
    ) -> "SchemaDb":
        """A copy whose inventory also carries corpus-sourced literals.

        ``by_column`` maps a bare column name to (value, kind) pairs; each
        pair is attached to every table owning a column of that name.
        Literals whose kind contradicts the column type are dropped, so
        the inventory invariant holds even for ill-typed corpus programs.
        """
        inventory = {key: list(vals) for key, vals in self.inventory.items()}
        for name, literals in by_column.items():
            for col in self.columns_named(name):
                slot = inventory.setdefault((col.table, col.name), [])
                present = {(lit.value, lit.kind) for lit in slot}
                for value, kind in literals:
                    if kind != col.literal_kind:
                        continue
                    if (value, kind) not in present:
                        slot.append(InventoryLiteral(value, kind, SOURCE_CORPUS))
                        present.add((value, kind))
        return replace(self, inventory={k: tuple(v) for k, v in inventory.items()})


def _literal_from_json(raw, column: Column, where: str) -> InventoryLiteral:
    if isinstance(raw, bool):
        raise SchemaError(f"{where}: boolean literals are not supported")
    if isinstance(raw, str):
        kind = STRING
        value = raw
    elif isinstance(raw, (int, float)):
        kind = NUMBER
        value = repr(raw) if isinstance(raw, float) else str(raw)
    else:
        raise SchemaError(f"{where}: unsupported literal {raw!r}")
    if kind != column.literal_kind:
        raise SchemaError(
            f"{where}: literal {raw!r} has kind {kind}, but column "
            f"{column.table}.{column.name} is typed {column.value_type}")
    return InventoryLiteral(value, kind, SOURCE_CONTENT)


def load_schema(path) -> list[SchemaDb]:
    """Parse a schema file into one SchemaDb per database entry."""
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"schema file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed schema file {path}: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("databases"), list):
        raise SchemaError(f"{path}: expected a top-level 'databases' list")

    databases = []
    for entry in doc["databases"]:
        db_id = entry.get("db_id")
        if not isinstance(db_id, str) or not db_id:
            raise SchemaError(f"{path}: database entry without a db_id")
        tables = []
        table_names = set()
        for raw_table in entry.get("tables", []):
            tname = raw_table.get("name")
            if not isinstance(tname, str) or not tname:
                raise SchemaError(f"{db_id}: table without a name")
            if tname.lower() in table_names:
                raise SchemaError(f"{db_id}: duplicate table {tname!r}")
            table_names.add(tname.lower())
            columns = []
            column_names = set()
            for raw_col in raw_table.get("columns", []):
                cname = raw_col.get("name")
                ctype = raw_col.get("type")
                if not isinstance(cname, str) or not cname:
                    raise SchemaError(f"{db_id}.{tname}: column without a name")
                if ctype not in _KIND_OF_TYPE:
                    raise SchemaError(
                        f"{db_id}.{tname}.{cname}: column type must be "
                        f"'text' or 'number', got {ctype!r}")
                if cname.lower() in column_names:
                    raise SchemaError(
                        f"{db_id}.{tname}: duplicate column {cname!r}")
                column_names.add(cname.lower())
                columns.append(Column(cname, tname, ctype))
            tables.append(Table(tname, tuple(columns)))
        db = SchemaDb(db_id, tuple(tables), {})

        inventory: dict[tuple[str, str], list[InventoryLiteral]] = {}
        for key, raw_literals in (entry.get("content") or {}).items():
            if "." not in key:
                raise SchemaError(
                    f"{db_id}: content key {key!r} is not 'table.column'")
            tname, cname = key.split(".", 1)
            table = db.table(tname)
            if table is None:
                raise SchemaError(f"{db_id}: content for unknown table {tname!r}")
            col = table.column(cname)
            if col is None:
                raise SchemaError(
                    f"{db_id}: content for unknown column {tname}.{cname}")
            if not isinstance(raw_literals, list):
                raise SchemaError(f"{db_id}: content for {key!r} must be a list")
            slot = inventory.setdefault((table.name, col.name), [])
            seen = {(lit.value, lit.kind) for lit in slot}
            for raw in raw_literals:
                lit = _literal_from_json(raw, col, f"{db_id}.{key}")
                if (lit.value, lit.kind) not in seen:
                    slot.append(lit)
                    seen.add((lit.value, lit.kind))
        databases.append(replace(
            db, inventory={k: tuple(v) for k, v in inventory.items()}))
    return databases


def ground_rules(rules: RuleSet, db: SchemaDb,
                 corpus_literals: Mapping[str, Sequence[tuple[str, str]]] | None = None,
                 ) -> RuleSet:
    """Extend ``rules`` with database-specific terminal rules.

    Adds ``table -> t`` per table, ``column -> c`` per distinct column
    name, and ``value -> v`` per distinct literal from the content
    inventory plus ``corpus_literals``. Only categories the grammar
    declares are grounded. Existing rules keep their ids; extension order
    follows the schema file, so ids are stable.
    """
    extra: list[tuple[str, tuple[str, ...]]] = []
    if "table" in rules.categories:
        for table in db.tables:
            extra.append(("table", (table.name,)))
    if "column" in rules.categories:
        for name in db.column_names:
            extra.append(("column", (name,)))
    if "value" in rules.categories:
        seen: set[str] = set()
        for table in db.tables:
            for col in table.columns:
                for lit in db.literals(table.name, col.name):
                    token = value_token(lit.value, lit.kind)
                    if token not in seen:
                        seen.add(token)
                        extra.append(("value", (token,)))
        for name, literals in (corpus_literals or {}).items():
            for value, kind in literals:
                token = value_token(value, kind)
                if token not in seen:
                    seen.add(token)
                    extra.append(("value", (token,)))
    return rules.extended(extra)


def iter_comparisons(tree: SqlAst, path: tuple[int, ...] = ()):
    """Yield (path, node) for every comparison node in preorder."""
    if tree.kind == "Compare":
        yield path, tree
    for i, child in enumerate(tree.children):
        yield from iter_comparisons(child, path + (i,))


def check_semantics(tree: SqlAst, db: SchemaDb) -> list[Violation]:
    """Schema-level validity of a syntactically valid program.

    Per comparison: the column must belong to the FROM table, the literal
    kind must match the column type, and (as a warning only) the literal
    should appear in the column's value inventory.
    """
    violations: list[Violation] = []
    from_node = next((c for c in tree.children if c.kind == "table"), None)
    if from_node is None:
        return violations
    table = db.table(from_node.payload or "")
    if table is None:
        violations.append(Violation(
            (), "unknown-table",
            f"table {from_node.payload!r} is not in database {db.db_id!r}"))
        return violations

    for path, node in iter_comparisons(tree):
        col_node, val_node = node.children[1], node.children[2]
        column = table.column(col_node.payload or "")
        if column is None:
            violations.append(Violation(
                path, "column-not-in-table",
                f"column {col_node.payload!r} is not in table {table.name!r}"))
            continue
        if val_node.payload_kind != column.literal_kind:
            violations.append(Violation(
                path, "kind-mismatch",
                f"{val_node.payload_kind} literal {val_node.payload!r} is "
                f"incompatible with {column.value_type} column "
                f"{table.name}.{column.name}"))
            continue
        known = {(lit.value, lit.kind)
                 for lit in db.literals(table.name, column.name)}
        if (val_node.payload, val_node.payload_kind) not in known:
            violations.append(Violation(
                path, "unknown-literal",
                f"literal {val_node.payload!r} is not in the inventory of "
                f"{table.name}.{column.name}", severity="warning"))
    return violations
