"""End-to-end synthesis: estimate models, sample programs, verbalize,
and emit a synthetic dataset with an audit manifest.

Corpus file: JSONL ``{"utterance": str, "sql": str, "db_id": str}``.
Dataset file: the same rows plus ``logprob`` and ``provenance`` fields,
written next to a ``<name>.manifest.json`` sidecar recording the config,
fingerprints, and exact sample accounting.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from . import pcfg as pcfg_mod
from .errors import CorpusError, SamplingError, SqlParseError, VerbalizeError
from .grammar import AsdlGrammar, RuleSet, SqlAst, derive_rules, load_asdl
from .pcfg import Pcfg, as_fraction, draw, estimate, score
from .resources import reference_grammar_text
from .schema import SchemaDb, check_semantics, ground_rules, iter_comparisons
from .sql_frontend import (
    Derivation,
    canonical_sql,
    linearize,
    parse_sql,
    render_sql,
)
from .verbalize import VerbalizationRequest, export_requests, import_utterances, template_verbalize

logger = logging.getLogger(__name__)

MODE_SHARED = "shared"
MODE_PER_DATABASE = "per_database"
DEDUP_CHOICES = ("none", "against_train", "within_batch", "both")
VERBALIZER_CHOICES = ("template", "external")
ARITY_SEARCH_CAP = 64


@dataclass(frozen=True)
class CorpusExample:
    """One training triple; ``sql`` is stored in canonical form."""
    utterance: str
    sql: str
    db_id: str
    tree: SqlAst


@dataclass(frozen=True)
class SynthConfig:
    ratio: int = 1
    mode: str = MODE_SHARED
    seed: int = 0
    max_depth: int = pcfg_mod.DEFAULT_MAX_DEPTH
    max_attempts: int = pcfg_mod.DEFAULT_MAX_ATTEMPTS
    dedup: str = "within_batch"
    semantic_filter: bool = False
    smoothing_k: int | float | str | Fraction = 0
    verbalizer: str = "template"
    max_seq_arity: int | None = None

    def __post_init__(self):
        if self.ratio < 1:
            raise ValueError("ratio must be at least 1")
        if self.mode not in (MODE_SHARED, MODE_PER_DATABASE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.dedup not in DEDUP_CHOICES:
            raise ValueError(f"unknown dedup policy {self.dedup!r}")
        if self.verbalizer not in VERBALIZER_CHOICES:
            raise ValueError(f"unknown verbalizer {self.verbalizer!r}")
        if self.max_seq_arity is not None and self.max_seq_arity < 1:
            raise ValueError("max_seq_arity must be at least 1")


@dataclass(frozen=True)
class SyntheticRow:
    utterance: str
    sql: str
    db_id: str
    logprob: float
    provenance: str = "synthetic"

    def to_json(self) -> str:
        return json.dumps({
            "utterance": self.utterance,
            "sql": self.sql,
            "db_id": self.db_id,
            "logprob": self.logprob,
            "provenance": self.provenance,
        })


@dataclass(frozen=True)
class SyntheticDataset:
    rows: tuple[SyntheticRow, ...]
    manifest: dict

    def to_jsonl(self) -> str:
        return "".join(row.to_json() + "\n" for row in self.rows)


def load_corpus(path, schemas: Sequence[SchemaDb]) -> list[CorpusExample]:
    """Read and validate a corpus file.

    Rows whose SQL falls outside the dialect are skipped with a logged
    reason; rows naming an unknown database are a hard error.
    """
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"corpus file not found: {path}")
    dbs = {db.db_id: db for db in schemas}
    examples: list[CorpusExample] = []
    skipped = 0
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{i}: malformed JSON") from exc
        if not isinstance(row, dict) or not all(
                isinstance(row.get(k), str) for k in ("utterance", "sql", "db_id")):
            raise CorpusError(
                f"{path}:{i}: expected utterance, sql, and db_id strings")
        db = dbs.get(row["db_id"])
        if db is None:
            raise CorpusError(f"{path}:{i}: unknown db_id {row['db_id']!r}")
        try:
            tree = parse_sql(row["sql"], db, on_cross_table="warn")
        except SqlParseError as exc:
            logger.warning("%s:%d: skipping row: %s", path, i, exc)
            skipped += 1
            continue
        examples.append(CorpusExample(row["utterance"], render_sql(tree),
                                      row["db_id"], tree))
    if skipped:
        logger.warning("%s: skipped %d unparseable rows, kept %d",
                       path, skipped, len(examples))
    return examples


def _collect_literals(trees: Iterable[SqlAst]) -> dict[str, list[tuple[str, str]]]:
    """Corpus literals per column name, in first-appearance order."""
    out: dict[str, list[tuple[str, str]]] = {}
    seen: set[tuple[str, str, str]] = set()
    for tree in trees:
        for _, node in iter_comparisons(tree):
            column = node.children[1].payload or ""
            value = node.children[2]
            key = (column, value.payload or "", value.payload_kind or "")
            if key not in seen:
                seen.add(key)
                out.setdefault(column, []).append(
                    (value.payload or "", value.payload_kind or ""))
    return out


def _ground_for(base_rules: RuleSet, dbs: Sequence[SchemaDb],
                literals) -> RuleSet:
    grounded = base_rules
    for db in dbs:
        grounded = ground_rules(grounded, db, literals)
    return grounded


def detect_max_seq_arity(grammar: AsdlGrammar, corpus: Sequence[CorpusExample],
                         schemas: Sequence[SchemaDb]) -> int:
    """Smallest sequence arity under which every corpus tree linearizes."""
    dbs = {db.db_id: db for db in schemas}
    used = [dbs[db_id] for db_id in dict.fromkeys(ex.db_id for ex in corpus)]
    literals = _collect_literals(ex.tree for ex in corpus)
    best_arity, best_count, previous_size = 1, -1, -1
    for arity in range(1, ARITY_SEARCH_CAP + 1):
        rules = _ground_for(derive_rules(grammar, arity), used, literals)
        count = 0
        for ex in corpus:
            try:
                linearize(ex.tree, rules)
                count += 1
            except Exception:
                continue
        if count == len(corpus):
            return arity
        if count > best_count:
            best_arity, best_count = arity, count
        if len(rules) == previous_size:
            break
        previous_size = len(rules)
    return best_arity


def _derive_seed(seed: int, key: str) -> int:
    digest = hashlib.sha256(f"{seed}|{key}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class _Partition:
    key: str | None
    dbs: list[SchemaDb]
    examples: list[CorpusExample]
    grounded: RuleSet | None = None
    model: Pcfg | None = None
    augmented: dict | None = None
    seed: int = 0
    requested: int = 0
    failures: int = 0
    filtered: int = 0
    deduped: int = 0
    emitted: int = 0
    skipped: int = 0


@dataclass
class _Candidate:
    tree: SqlAst
    db_id: str
    partition: _Partition
    sql: str = ""
    utterance: str = ""


def _attribute_db(tree: SqlAst, dbs: Sequence[SchemaDb]) -> str:
    table_node = next((c for c in tree.children if c.kind == "table"), None)
    if table_node is not None:
        for db in dbs:
            if db.table(table_node.payload or "") is not None:
                return db.db_id
    return dbs[0].db_id


def synthesize(corpus: Sequence[CorpusExample], schemas: Sequence[SchemaDb],
               config: SynthConfig, *, grammar: AsdlGrammar | None = None,
               requests_path=None, responses_path=None) -> SyntheticDataset:
    """Run the full synthesis workflow deterministically.

    Estimates one model (shared mode) or one per database, draws
    ``ratio * |partition|`` programs from each with a seed derived from
    ``config.seed`` and the partition's databases, applies the configured
    semantic filter and deduplication, verbalizes, and returns the rows
    together with a manifest whose counts satisfy
    ``requested - failures - filtered - deduped = emitted`` exactly.
    """
    if not corpus:
        raise CorpusError("corpus is empty")
    dbs = {db.db_id: db for db in schemas}
    for ex in corpus:
        if ex.db_id not in dbs:
            raise CorpusError(f"corpus example references unknown db_id "
                              f"{ex.db_id!r}")

    base_grammar = grammar if grammar is not None else load_asdl(reference_grammar_text())
    arity = config.max_seq_arity
    if arity is None:
        arity = detect_max_seq_arity(base_grammar, corpus, schemas)
    base_rules = derive_rules(base_grammar, arity)

    if config.mode == MODE_PER_DATABASE:
        order = dict.fromkeys(ex.db_id for ex in corpus)
        partitions = [
            _Partition(db_id, [dbs[db_id]],
                       [ex for ex in corpus if ex.db_id == db_id])
            for db_id in order
        ]
    else:
        order = dict.fromkeys(ex.db_id for ex in corpus)
        partitions = [_Partition(None, [dbs[db_id] for db_id in order],
                                 list(corpus))]

    candidates: list[_Candidate] = []
    for part in partitions:
        literals = _collect_literals(ex.tree for ex in part.examples)
        part.grounded = _ground_for(base_rules, part.dbs, literals)
        part.augmented = {db.db_id: db.with_corpus_literals(literals)
                          for db in part.dbs}
        derivations: list[Derivation] = []
        usable = 0
        for ex in part.examples:
            try:
                derivations.append(linearize(ex.tree, part.grounded))
                usable += 1
            except Exception as exc:
                part.skipped += 1
                logger.warning("skipping %r under max_seq_arity=%d: %s",
                               ex.sql, arity, exc)
        part.model = estimate(part.grounded, derivations, config.smoothing_k,
                              db_id=part.key)
        part.seed = _derive_seed(config.seed,
                                 ",".join(sorted(db.db_id for db in part.dbs)))
        part.requested = config.ratio * usable
        rng = random.Random(part.seed)
        for _ in range(part.requested):
            try:
                tree = draw(part.model, rng, config.max_depth,
                            config.max_attempts)
            except SamplingError:
                part.failures += 1
                continue
            candidates.append(
                _Candidate(tree, _attribute_db(tree, part.dbs), part))

    if config.semantic_filter:
        kept = []
        for cand in candidates:
            violations = check_semantics(
                cand.tree, cand.partition.augmented[cand.db_id])
            if any(v.severity == "error" for v in violations):
                cand.partition.filtered += 1
            else:
                kept.append(cand)
        candidates = kept

    train_keys = {(ex.db_id, ex.sql) for ex in corpus}
    seen: set[tuple[str, str]] = set()
    final: list[_Candidate] = []
    for cand in candidates:
        cand.sql = render_sql(cand.tree)
        key = (cand.db_id, cand.sql)
        if config.dedup in ("against_train", "both") and key in train_keys:
            cand.partition.deduped += 1
            continue
        if config.dedup in ("within_batch", "both") and key in seen:
            cand.partition.deduped += 1
            continue
        seen.add(key)
        final.append(cand)

    if config.verbalizer == "template":
        for cand in final:
            cand.utterance = template_verbalize(cand.tree, dbs[cand.db_id])
    else:
        if requests_path is None:
            raise VerbalizeError(
                "external verbalizer requires a requests path")
        written = export_requests([(c.tree, c.db_id) for c in final],
                                  requests_path)
        if responses_path is None or not Path(responses_path).is_file():
            raise VerbalizeError(
                f"verbalizer exchange incomplete: wrote {written} requests "
                f"to {requests_path}; translate them and rerun with the "
                f"responses file")
        requests = [VerbalizationRequest(i, c.sql, c.db_id)
                    for i, c in enumerate(final)]
        result = import_utterances(responses_path, requests)
        if result.missing_ids:
            raise VerbalizeError(
                f"verbalizer exchange incomplete: no responses for ids "
                f"{list(result.missing_ids)}")
        for cand, pair in zip(final, result.pairs):
            cand.utterance = pair.utterance

    rows = []
    for cand in final:
        cand.partition.emitted += 1
        logprob = score(cand.partition.model,
                        linearize(cand.tree, cand.partition.grounded))
        rows.append(SyntheticRow(cand.utterance, cand.sql, cand.db_id,
                                 logprob))

    manifest = {
        "config": {
            "ratio": config.ratio,
            "mode": config.mode,
            "seed": config.seed,
            "max_depth": config.max_depth,
            "max_attempts": config.max_attempts,
            "dedup": config.dedup,
            "semantic_filter": config.semantic_filter,
            "smoothing_k": str(as_fraction(config.smoothing_k)),
            "verbalizer": config.verbalizer,
            "max_seq_arity": arity,
        },
        "grammar_fingerprint": base_rules.fingerprint,
        "corpus_size": len(corpus),
        "partitions": [
            {
                "db_id": part.key,
                "databases": [db.db_id for db in part.dbs],
                "examples": len(part.examples),
                "skipped_examples": part.skipped,
                "seed": part.seed,
                "rules_fingerprint": part.grounded.fingerprint,
                "model_fingerprint": part.model.fingerprint,
                "requested": part.requested,
                "failures": part.failures,
                "filtered": part.filtered,
                "deduped": part.deduped,
                "emitted": part.emitted,
            }
            for part in partitions
        ],
        "totals": {
            "requested": sum(p.requested for p in partitions),
            "failures": sum(p.failures for p in partitions),
            "filtered": sum(p.filtered for p in partitions),
            "deduped": sum(p.deduped for p in partitions),
            "emitted": sum(p.emitted for p in partitions),
        },
    }
    return SyntheticDataset(tuple(rows), manifest)


def manifest_path(dataset_path) -> Path:
    return Path(str(dataset_path) + ".manifest.json")


def write_dataset(dataset: SyntheticDataset, path) -> tuple[Path, Path]:
    """Write the JSONL rows and the manifest sidecar; byte-deterministic."""
    path = Path(path)
    path.write_text(dataset.to_jsonl(), encoding="utf-8")
    sidecar = manifest_path(path)
    sidecar.write_text(
        json.dumps(dataset.manifest, sort_keys=True, indent=2) + "\n",
        encoding="utf-8")
    return path, sidecar


def coverage(synthetic_sqls: Iterable[str], reference_sqls: Iterable[str]) -> float:
    """Fraction of distinct reference programs appearing in the synthetic
    set, both compared in canonical form."""
    synthetic = list(synthetic_sqls)
    reference = list(reference_sqls)
    if not synthetic or not reference:
        raise ValueError("coverage requires non-empty synthetic and "
                         "reference sets")
    synthetic_set = {canonical_sql(s) for s in synthetic}
    reference_set = {canonical_sql(r) for r in reference}
    return len(reference_set & synthetic_set) / len(reference_set)


def model_stats(model: Pcfg) -> dict:
    """Per-lhs rule counts and entropies plus model-level totals."""
    by_lhs: dict[str, dict] = {}
    zero_rules = 0
    for rule in model.rules.rules:
        if model.probabilities[rule.rule_id] == 0:
            zero_rules += 1
    for lhs in sorted({rule.lhs for rule in model.rules.rules}):
        siblings = model.rules.by_lhs(lhs)
        entropy = 0.0
        observed = 0
        for rule in siblings:
            observed += model.counts.get(rule.rule_id)
            p = float(model.probabilities[rule.rule_id])
            if p > 0:
                entropy -= p * math.log(p)
        by_lhs[lhs] = {"rules": len(siblings), "observed_count": observed,
                       "entropy": entropy}
    return {
        "db_id": model.db_id,
        "smoothing_k": str(model.smoothing_k),
        "total_rules": len(model.rules),
        "zero_probability_rules": zero_rules,
        "lhs": by_lhs,
    }


def format_model_stats(stats: dict) -> str:
    """Plain-text rendering of a model_stats report."""
    lines = [
        f"database:        {stats['db_id'] or '(shared)'}",
        f"smoothing k:     {stats['smoothing_k']}",
        f"total rules:     {stats['total_rules']}",
        f"zero-prob rules: {stats['zero_probability_rules']}",
        "",
        f"{'lhs':<12} {'rules':>6} {'count':>7} {'entropy':>9}",
    ]
    for lhs, row in stats["lhs"].items():
        lines.append(f"{lhs:<12} {row['rules']:>6} {row['observed_count']:>7} "
                     f"{row['entropy']:>9.4f}")
    return "\n".join(lines) + "\n"
