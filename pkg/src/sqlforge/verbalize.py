"""Utterance generation: a deterministic template verbalizer plus a
JSONL file exchange for plugging in an external translation system.

Requests file: one ``{"id": int, "sql": str, "db_id": str}`` per line.
Responses file: one ``{"id": int, "utterance": str}`` per line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import VerbalizeError
from .grammar import SqlAst
from .schema import SchemaDb
from .sql_frontend import render_sql

PROVENANCE_TEMPLATE = "template"
PROVENANCE_EXTERNAL = "external"

AGG_PHRASES = {
    "NoneAggOp": "",
    "Max": "maximum ",
    "Min": "minimum ",
    "Count": "number of ",
    "Sum": "total ",
    "Avg": "average ",
}
OP_PHRASES = {
    "Eq": "is",
    "Ne": "is not",
    "Lt": "is less than",
    "Le": "is at most",
    "Gt": "is greater than",
    "Ge": "is at least",
}


@dataclass(frozen=True)
class VerbalizationRequest:
    id: int
    sql: str
    db_id: str
    hint: str | None = None


@dataclass(frozen=True)
class UtterancePair:
    id: int
    utterance: str
    sql: str
    db_id: str
    provenance: str


@dataclass(frozen=True)
class ImportResult:
    pairs: tuple[UtterancePair, ...]
    missing_ids: tuple[int, ...]


def _cond_phrase(node: SqlAst) -> str:
    if node.kind == "Compare":
        op, column, value = node.children
        if op.kind not in OP_PHRASES:
            raise VerbalizeError(f"unknown comparison operator {op.kind!r}")
        return f"{column.payload} {OP_PHRASES[op.kind]} {value.payload}"
    if node.kind == "And":
        return f"{_cond_phrase(node.children[0])} and {_cond_phrase(node.children[1])}"
    if node.kind == "Or":
        return f"{_cond_phrase(node.children[0])} or {_cond_phrase(node.children[1])}"
    if node.kind == "Not":
        return f"it is not the case that {_cond_phrase(node.children[0])}"
    raise VerbalizeError(f"node {node.kind!r} is outside the reference dialect")


def template_verbalize(tree: SqlAst, db: SchemaDb) -> str:
    """Compositional English gloss of a reference-dialect tree.

    The phrasing is fixed and deterministic; it trades fluency for being
    an exact, dependency-free stand-in for a learned translator.
    """
    if tree.kind != "sql" or len(tree.children) < 2:
        raise VerbalizeError("tree is not a reference-dialect query")
    select, table = tree.children[0], tree.children[1]
    phrases = []
    for agg in select.children:
        agg_type, column = agg.children
        if agg_type.kind not in AGG_PHRASES:
            raise VerbalizeError(f"unknown aggregate {agg_type.kind!r}")
        phrases.append(f"the {AGG_PHRASES[agg_type.kind]}{column.payload}")
    verb = "is" if len(phrases) == 1 else "are"
    text = f"what {verb} " + " and ".join(phrases) + f" of {table.payload}"
    if len(tree.children) == 3:
        text += f" where {_cond_phrase(tree.children[2])}"
    return text + "?"


def export_requests(programs: Sequence[tuple[SqlAst, str]], path,
                    hints: Sequence[str | None] | None = None) -> int:
    """Write one verbalization request per program; returns the count."""
    lines = []
    for i, (tree, db_id) in enumerate(programs):
        row = {"id": i, "sql": render_sql(tree), "db_id": db_id}
        if hints is not None and hints[i] is not None:
            row["hint"] = hints[i]
        lines.append(json.dumps(row))
    Path(path).write_text("".join(line + "\n" for line in lines),
                          encoding="utf-8")
    return len(lines)


def import_utterances(path, requests: Sequence[VerbalizationRequest]) -> ImportResult:
    """Join a responses file onto its requests by id.

    Missing ids are reported in the result; duplicate or unknown ids and
    empty utterances are errors.
    """
    path = Path(path)
    if not path.is_file():
        raise VerbalizeError(f"responses file not found: {path}")
    by_id = {req.id: req for req in requests}
    utterances: dict[int, str] = {}
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise VerbalizeError(f"{path}:{i}: malformed JSON") from exc
        if not isinstance(row, dict) or not isinstance(row.get("id"), int):
            raise VerbalizeError(f"{path}:{i}: expected an object with an "
                                 f"integer 'id'")
        rid = row["id"]
        if rid not in by_id:
            raise VerbalizeError(f"{path}:{i}: response id {rid} matches no "
                                 f"request")
        if rid in utterances:
            raise VerbalizeError(f"{path}:{i}: duplicate response id {rid}")
        utterance = row.get("utterance")
        if not isinstance(utterance, str) or not utterance.strip():
            raise VerbalizeError(f"{path}:{i}: empty utterance for id {rid}")
        utterances[rid] = utterance
    pairs = tuple(
        UtterancePair(req.id, utterances[req.id], req.sql, req.db_id,
                      PROVENANCE_EXTERNAL)
        for req in requests if req.id in utterances)
    missing = tuple(req.id for req in requests if req.id not in utterances)
    return ImportResult(pairs, missing)
