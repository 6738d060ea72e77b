"""Grammar-driven data synthesis for text-to-SQL semantic parsing.

The package learns a probabilistic context-free grammar over SQL program
trees by counting production rules in a training corpus, samples new
schema-grounded programs from it, attaches utterances through a pluggable
verbalization stage, and emits synthetic pre-training datasets together
with coverage diagnostics.
"""

from .errors import (
    CorpusError,
    DerivationError,
    EstimationError,
    GrammarError,
    ModelError,
    SamplingError,
    SchemaError,
    SqlforgeError,
    SqlParseError,
    UnproductiveGrammarError,
    VerbalizeError,
)
from .grammar import (
    AsdlConstructor,
    AsdlField,
    AsdlGrammar,
    AsdlTypeDecl,
    ProductionRule,
    RuleSet,
    SqlAst,
    Violation,
    derive_rules,
    load_asdl,
    render_asdl,
    validate_tree,
)
from .sql_frontend import (
    Derivation,
    canonical_sql,
    delinearize,
    linearize,
    parse_sql,
    render_sql,
)
from .pcfg import Pcfg, RuleCounts, estimate, load, sample, sample_many, save, score, uniform
from .schema import SchemaDb, check_semantics, ground_rules, load_schema
from .verbalize import (
    ImportResult,
    UtterancePair,
    VerbalizationRequest,
    export_requests,
    import_utterances,
    template_verbalize,
)
from .pipeline import (
    CorpusExample,
    SynthConfig,
    SyntheticDataset,
    coverage,
    load_corpus,
    model_stats,
    synthesize,
)

__version__ = "0.1.0"
