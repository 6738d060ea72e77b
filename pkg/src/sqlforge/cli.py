"""Command-line surface: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data/validation error. Errors are
reported as a single-line JSON object on stderr; output is JSON or JSONL
unless ``--pretty`` selects a human-readable form.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import CorpusError, SqlforgeError
from .grammar import AsdlGrammar, derive_rules, load_asdl
from .pcfg import load as load_model
from .pcfg import read_model_header, sample_many, save, score
from .pcfg import estimate as estimate_model
from .pipeline import (
    SynthConfig,
    _attribute_db,
    _collect_literals,
    _ground_for,
    coverage,
    detect_max_seq_arity,
    format_model_stats,
    load_corpus,
    model_stats,
    synthesize,
    write_dataset,
)
from .resources import reference_grammar_text
from .schema import load_schema
from .sql_frontend import linearize, parse_sql, render_sql
from .verbalize import (
    VerbalizationRequest,
    export_requests,
    import_utterances,
    template_verbalize,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

FALLBACK_SEQ_ARITY = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _print(obj, pretty: bool = False) -> None:
    print(json.dumps(obj, indent=2 if pretty else None, sort_keys=pretty))


def _load_grammar(args) -> AsdlGrammar:
    if getattr(args, "grammar", None):
        text = Path(args.grammar).read_text(encoding="utf-8")
    else:
        text = reference_grammar_text()
    return load_asdl(text)


def _grounded_rules(grammar, schemas, corpus, db_id, arity):
    """Rebuild the grounded rule set the way estimation builds it.

    Passing the same grammar, schemas, corpus, and arity used at
    estimation time reproduces the same fingerprint.
    """
    if db_id is not None and all(db.db_id != db_id for db in schemas):
        raise CorpusError(f"no database {db_id!r} in the schema file")
    if corpus:
        part = [ex for ex in corpus if db_id is None or ex.db_id == db_id]
        if not part:
            raise CorpusError(f"corpus has no examples for db_id {db_id!r}")
        literals = _collect_literals(ex.tree for ex in part)
        if arity is None:
            arity = detect_max_seq_arity(grammar, part, schemas)
        order = dict.fromkeys(ex.db_id for ex in part)
        used = [db for key in order for db in schemas if db.db_id == key]
    else:
        part, literals = [], {}
        if arity is None:
            arity = FALLBACK_SEQ_ARITY
        used = [db for db in schemas if db_id is None or db.db_id == db_id]
    base = derive_rules(grammar, arity)
    return _ground_for(base, used, literals), part, used


def _read_programs(path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"input file not found: {path}")
    rows = []
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{i}: malformed JSON") from exc
        if not isinstance(row, dict) or not isinstance(row.get("sql"), str):
            raise CorpusError(f"{path}:{i}: expected an object with 'sql'")
        rows.append(row)
    return rows


# --- Subcommands ---

def _cmd_derive(args) -> int:
    grammar = _load_grammar(args)
    rules = derive_rules(grammar, args.max_seq_arity)
    if args.schemas:
        schemas = load_schema(args.schemas)
        if args.db is not None:
            schemas = [db for db in schemas if db.db_id == args.db]
            if not schemas:
                raise CorpusError(f"no database {args.db!r} in the schema file")
        rules = _ground_for(rules, schemas, {})
    text = rules.dump()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_parse(args) -> int:
    schemas = load_schema(args.schemas)
    db = next((d for d in schemas if d.db_id == args.db), None)
    if db is None:
        raise CorpusError(f"no database {args.db!r} in the schema file")
    mode = "warn" if args.lenient_columns else "error"
    tree = parse_sql(args.sql, db, on_cross_table=mode)
    _print(tree.to_dict(), args.pretty)
    return EXIT_OK


def _cmd_estimate(args) -> int:
    grammar = _load_grammar(args)
    schemas = load_schema(args.schemas)
    corpus = load_corpus(args.corpus, schemas)
    rules, part, _ = _grounded_rules(grammar, schemas, corpus, args.db_id,
                                     args.max_seq_arity)
    derivations = []
    skipped = 0
    for ex in part:
        try:
            derivations.append(linearize(ex.tree, rules))
        except SqlforgeError:
            skipped += 1
    model = estimate_model(rules, derivations, args.smoothing_k,
                           db_id=args.db_id)
    save(model, args.out)
    _print({"out": str(args.out), "rules": len(rules),
            "examples": len(derivations), "skipped": skipped,
            "fingerprint": rules.fingerprint})
    return EXIT_OK


def _load_model_with_rules(args):
    grammar = _load_grammar(args)
    schemas = load_schema(args.schemas)
    corpus = load_corpus(args.corpus, schemas) if args.corpus else None
    header = read_model_header(args.model)
    rules, _, used = _grounded_rules(grammar, schemas, corpus,
                                     header.get("db_id") or None,
                                     args.max_seq_arity)
    return load_model(args.model, rules), rules, used, schemas


def _cmd_sample(args) -> int:
    model, rules, used, _ = _load_model_with_rules(args)
    trees = sample_many(model, args.n, args.seed, args.max_depth,
                        args.max_attempts)
    for tree in trees:
        row = {
            "sql": render_sql(tree),
            "db_id": model.db_id or _attribute_db(tree, used),
            "logprob": score(model, linearize(tree, rules)),
        }
        print(json.dumps(row))
    return EXIT_OK


def _cmd_score(args) -> int:
    model, rules, used, schemas = _load_model_with_rules(args)
    by_id = {db.db_id: db for db in schemas}
    for row in _read_programs(args.input):
        db = by_id.get(row.get("db_id")) or (used[0] if used else None)
        out = {"sql": row["sql"]}
        try:
            tree = parse_sql(row["sql"], db, on_cross_table="warn")
            logprob = score(model, linearize(tree, rules))
            out["logprob"] = None if logprob == float("-inf") else logprob
        except SqlforgeError as exc:
            out["logprob"] = None
            out["error"] = str(exc)
        print(json.dumps(out))
    return EXIT_OK


def _cmd_verbalize(args) -> int:
    if args.responses:
        if not args.requests:
            raise _UsageError("--responses requires --requests")
        requests = []
        for i, row in enumerate(_read_programs(args.requests)):
            if not isinstance(row.get("id"), int):
                raise CorpusError(f"{args.requests}: row {i} has no integer id")
            requests.append(
                VerbalizationRequest(row["id"], row["sql"], row.get("db_id", "")))
        result = import_utterances(args.responses, requests)
        for pair in result.pairs:
            print(json.dumps({"id": pair.id, "utterance": pair.utterance,
                              "sql": pair.sql, "db_id": pair.db_id,
                              "provenance": pair.provenance}))
        if result.missing_ids:
            print(json.dumps({"missing_ids": list(result.missing_ids)}),
                  file=sys.stderr)
        return EXIT_OK

    if not args.input or not args.schemas:
        raise _UsageError("verbalize needs --input and --schemas (or "
                          "--requests with --responses)")
    schemas = load_schema(args.schemas)
    by_id = {db.db_id: db for db in schemas}
    programs = []
    for i, row in enumerate(_read_programs(args.input)):
        db = by_id.get(row.get("db_id"))
        if db is None:
            raise CorpusError(f"row {i}: unknown db_id {row.get('db_id')!r}")
        tree = parse_sql(row["sql"], db, on_cross_table="warn")
        programs.append((tree, db.db_id))
    if args.requests:
        written = export_requests(programs, args.requests)
        _print({"written": written, "requests": str(args.requests)})
        return EXIT_OK
    for i, (tree, db_id) in enumerate(programs):
        print(json.dumps({"id": i,
                          "utterance": template_verbalize(tree, by_id[db_id]),
                          "sql": render_sql(tree), "db_id": db_id,
                          "provenance": "template"}))
    return EXIT_OK


def _cmd_synthesize(args) -> int:
    grammar = _load_grammar(args)
    schemas = load_schema(args.schemas)
    corpus = load_corpus(args.corpus, schemas)
    config = SynthConfig(
        ratio=args.ratio,
        mode="per_database" if args.mode == "per-db" else "shared",
        seed=args.seed,
        max_depth=args.max_depth,
        max_attempts=args.max_attempts,
        dedup=args.dedup,
        semantic_filter=args.filter_semantics,
        smoothing_k=args.smoothing_k,
        verbalizer=args.verbalizer,
        max_seq_arity=args.max_seq_arity,
    )
    dataset = synthesize(corpus, schemas, config, grammar=grammar,
                         requests_path=args.requests,
                         responses_path=args.responses)
    rows_path, sidecar = write_dataset(dataset, args.out)
    _print({"out": str(rows_path), "manifest": str(sidecar),
            "emitted": dataset.manifest["totals"]["emitted"]})
    return EXIT_OK


def _cmd_coverage(args) -> int:
    synthetic = [row["sql"] for row in _read_programs(args.synthetic)]
    reference = [row["sql"] for row in _read_programs(args.reference)]
    _print({"coverage": coverage(synthetic, reference)})
    return EXIT_OK


def _cmd_stats(args) -> int:
    model, _, _, _ = _load_model_with_rules(args)
    stats = model_stats(model)
    if args.pretty:
        sys.stdout.write(format_model_stats(stats))
    else:
        _print(stats)
    return EXIT_OK


# --- Parser wiring ---

def _build_parser() -> _Parser:
    parser = _Parser(prog="sqlforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("derive", _cmd_derive, "instantiate a grammar into rules")
    p.add_argument("--grammar")
    p.add_argument("--max-seq-arity", type=int, default=FALLBACK_SEQ_ARITY)
    p.add_argument("--schemas")
    p.add_argument("--db")
    p.add_argument("--out")

    p = add("parse", _cmd_parse, "parse one SQL string into an AST")
    p.add_argument("--sql", required=True)
    p.add_argument("--schemas", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--lenient-columns", action="store_true")
    p.add_argument("--pretty", action="store_true")

    p = add("estimate", _cmd_estimate, "estimate a model from a corpus")
    p.add_argument("--grammar")
    p.add_argument("--schemas", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--smoothing-k", default="0")
    p.add_argument("--max-seq-arity", type=int)
    p.add_argument("--db-id")

    for name, func, help_text in (
            ("sample", _cmd_sample, "sample programs from a saved model"),
            ("score", _cmd_score, "log-probability of programs under a model"),
            ("stats", _cmd_stats, "per-lhs report for a saved model")):
        p = add(name, func, help_text)
        p.add_argument("--grammar")
        p.add_argument("--schemas", required=True)
        p.add_argument("--corpus")
        p.add_argument("--model", required=True)
        p.add_argument("--max-seq-arity", type=int)
        if name == "sample":
            p.add_argument("--n", type=int, required=True)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--max-depth", type=int, default=20)
            p.add_argument("--max-attempts", type=int, default=50)
        elif name == "score":
            p.add_argument("--input", required=True)
        else:
            p.add_argument("--pretty", action="store_true")

    p = add("verbalize", _cmd_verbalize,
            "attach utterances, or run the external request/response exchange")
    p.add_argument("--input")
    p.add_argument("--schemas")
    p.add_argument("--requests")
    p.add_argument("--responses")

    p = add("synthesize", _cmd_synthesize, "run the full synthesis workflow")
    p.add_argument("--grammar")
    p.add_argument("--schemas", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ratio", type=int, default=1)
    p.add_argument("--mode", choices=("shared", "per-db"), default="shared")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-depth", type=int, default=20)
    p.add_argument("--max-attempts", type=int, default=50)
    p.add_argument("--dedup",
                   choices=("none", "against_train", "within_batch", "both"),
                   default="within_batch")
    p.add_argument("--filter-semantics", action="store_true")
    p.add_argument("--smoothing-k", default="0")
    p.add_argument("--verbalizer", choices=("template", "external"),
                   default="template")
    p.add_argument("--requests")
    p.add_argument("--responses")
    p.add_argument("--max-seq-arity", type=int)

    p = add("coverage", _cmd_coverage,
            "fraction of reference programs covered by a synthetic set")
    p.add_argument("--synthetic", required=True)
    p.add_argument("--reference", required=True)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (SqlforgeError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
