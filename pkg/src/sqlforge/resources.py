"""Access to the data files bundled with the package."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

_ASSETS = resources.files(__package__) / "assets"

SIMPLE_GRAMMAR = "sql_simple.asdl"
REFERENCE_GRAMMAR = "sql_reference.asdl"
GEOGRAPHY_SCHEMA = "geography.schema.json"
GEOGRAPHY_CORPUS = "geography.corpus.jsonl"


def asset_path(name: str) -> Path:
    """Filesystem path of a bundled asset."""
    path = Path(str(_ASSETS / name))
    if not path.is_file():
        raise FileNotFoundError(f"no bundled asset named {name!r}")
    return path


def asset_text(name: str) -> str:
    return asset_path(name).read_text(encoding="utf-8")


def simple_grammar_text() -> str:
    """The minimal aggregate-selection grammar."""
    return asset_text(SIMPLE_GRAMMAR)


def reference_grammar_text() -> str:
    """The full reference-dialect grammar the SQL frontend targets."""
    return asset_text(REFERENCE_GRAMMAR)


def geography_schema_path() -> Path:
    """The bundled geography database schema."""
    return asset_path(GEOGRAPHY_SCHEMA)


def geography_corpus_path() -> Path:
    """The bundled 50-example geography corpus."""
    return asset_path(GEOGRAPHY_CORPUS)
