"""Rule-probability estimation by counting, tree scoring, and sampling.

A model assigns each production rule a probability, normalized over the
rules sharing a left-hand side. Estimation is relative-frequency counting
over a corpus of derivations, optionally with add-k smoothing::

    q(rule) = (count(rule) + k) / (count(lhs) + k * |rules of lhs|)

Probabilities are kept as exact rationals; floats are derived views used
only for log scores and sampling.
"""

from __future__ import annotations

import hashlib
import math
import random
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

from .errors import (
    EstimationError,
    ModelError,
    SamplingError,
    UnproductiveGrammarError,
)
from .grammar import RuleSet, SqlAst, leaf_from_rule
from .sql_frontend import Derivation

DEFAULT_MAX_DEPTH = 20
DEFAULT_MAX_ATTEMPTS = 50


def as_fraction(value) -> Fraction:
    """Exact rational from int, Fraction, decimal string, or float.

    Floats go through their decimal string form, so ``0.1`` means 1/10.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError("expected a number")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    if isinstance(value, str):
        return Fraction(value)
    raise ValueError(f"cannot interpret {value!r} as a rational")


@dataclass(frozen=True)
class RuleCounts:
    """Occurrence counts per rule_id; absent ids count zero."""
    counts: Mapping[int, int]

    def __post_init__(self):
        clean = {}
        for rule_id, count in self.counts.items():
            if count < 0:
                raise ValueError(f"negative count for rule {rule_id}")
            if count:
                clean[int(rule_id)] = int(count)
        object.__setattr__(self, "counts", clean)

    def get(self, rule_id: int) -> int:
        return self.counts.get(rule_id, 0)

    def lhs_totals(self, rules: RuleSet) -> dict[str, int]:
        totals: dict[str, int] = {}
        for rule_id, count in self.counts.items():
            lhs = rules.by_id(rule_id).lhs
            totals[lhs] = totals.get(lhs, 0) + count
        return totals

    def __len__(self) -> int:
        return len(self.counts)


EMPTY_COUNTS = RuleCounts({})


@dataclass(frozen=True)
class Pcfg:
    """Rule probabilities over a rule set, with their source counts."""
    rules: RuleSet
    probabilities: Mapping[int, Fraction]
    counts: RuleCounts = EMPTY_COUNTS
    smoothing_k: Fraction = Fraction(0)
    db_id: str | None = None

    def __post_init__(self):
        for rule in self.rules.rules:
            prob = self.probabilities.get(rule.rule_id)
            if prob is None:
                raise ModelError(f"no probability for rule {rule.rule_id}")
            if not 0 <= prob <= 1:
                raise ModelError(
                    f"probability {prob} of rule {rule.rule_id} out of range")
        if len(self.probabilities) != len(self.rules):
            raise ModelError("probabilities reference unknown rule ids")
        by_lhs: dict[str, Fraction] = {}
        for rule in self.rules.rules:
            by_lhs[rule.lhs] = (by_lhs.get(rule.lhs, Fraction(0))
                                + self.probabilities[rule.rule_id])
        for lhs, total in by_lhs.items():
            if total not in (Fraction(0), Fraction(1)):
                raise ModelError(
                    f"probabilities of lhs {lhs!r} sum to {total}, not 1")

    def probability(self, rule_id: int) -> Fraction:
        try:
            return self.probabilities[rule_id]
        except KeyError:
            raise ModelError(f"rule {rule_id} is not in the model") from None

    def float_probability(self, rule_id: int) -> float:
        return float(self.probability(rule_id))

    @cached_property
    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.rules.fingerprint.encode())
        digest.update(f"|k={self.smoothing_k}|db={self.db_id or ''}|".encode())
        for rule_id in sorted(self.probabilities):
            digest.update(
                f"{rule_id}:{self.counts.get(rule_id)}:"
                f"{self.probabilities[rule_id]};".encode())
        return digest.hexdigest()

    @cached_property
    def _samplers(self) -> dict[str, tuple[list[float], list]]:
        """Per-lhs cumulative float weights over nonzero rules."""
        samplers = {}
        for rule in self.rules.rules:
            samplers.setdefault(rule.lhs, ([], []))
        for rule in self.rules.rules:
            prob = self.probabilities[rule.rule_id]
            if prob > 0:
                cum, choices = samplers[rule.lhs]
                cum.append((cum[-1] if cum else 0.0) + float(prob))
                choices.append(rule)
        return samplers

    @cached_property
    def _unproductive(self) -> str | None:
        """First symbol reachable from the root with no nonzero rule."""
        seen = set()
        frontier = [self.rules.root]
        while frontier:
            symbol = frontier.pop(0)
            if symbol in seen:
                continue
            seen.add(symbol)
            live = [rule for rule in self.rules.by_lhs(symbol)
                    if self.probabilities[rule.rule_id] > 0]
            if not live:
                return symbol
            for rule in live:
                for child in rule.children:
                    if child not in seen:
                        frontier.append(child)
        return None


def estimate(rules: RuleSet, corpus: Iterable[Derivation],
             smoothing_k=0, db_id: str | None = None) -> Pcfg:
    """Relative-frequency estimation over a corpus of derivations."""
    k = as_fraction(smoothing_k)
    if k < 0:
        raise ValueError("smoothing_k must be non-negative")
    raw = Counter()
    for derivation in corpus:
        if derivation.rules.fingerprint != rules.fingerprint:
            raise EstimationError(
                "derivation was produced under a different rule set")
        for rule_id in derivation.rule_ids:
            if not 0 <= rule_id < len(rules):
                raise EstimationError(f"derivation references unknown rule "
                                      f"{rule_id}")
            raw[rule_id] += 1
    counts = RuleCounts(dict(raw))

    probabilities: dict[int, Fraction] = {}
    for lhs in {rule.lhs for rule in rules.rules}:
        siblings = rules.by_lhs(lhs)
        total = sum(counts.get(r.rule_id) for r in siblings)
        denom = Fraction(total) + k * len(siblings)
        for rule in siblings:
            if denom == 0:
                probabilities[rule.rule_id] = Fraction(0)
            else:
                probabilities[rule.rule_id] = (counts.get(rule.rule_id) + k) / denom
    return Pcfg(rules, probabilities, counts, k, db_id)


def uniform(rules: RuleSet) -> Pcfg:
    """Equal probability for the rules of each left-hand side."""
    probabilities = {
        rule.rule_id: Fraction(1, len(rules.by_lhs(rule.lhs)))
        for rule in rules.rules
    }
    return Pcfg(rules, probabilities, EMPTY_COUNTS, Fraction(0))


def score(model: Pcfg, derivation: Derivation) -> float:
    """Log-probability of a derivation: the sum of its rules' log probs."""
    if derivation.rules.fingerprint != model.rules.fingerprint:
        raise ModelError("derivation was produced under a different rule set")
    total = 0.0
    for rule_id in derivation.rule_ids:
        prob = model.probability(rule_id)
        if prob == 0:
            return float("-inf")
        total += math.log(prob)
    return total


class _DepthExceeded(Exception):
    pass


def _expand(model: Pcfg, rng: random.Random, symbol: str, depth: int,
            max_depth: int) -> SqlAst:
    if depth > max_depth:
        raise _DepthExceeded
    cum, choices = model._samplers[symbol]
    index = min(bisect_right(cum, rng.random() * cum[-1]), len(choices) - 1)
    rule = choices[index]
    if rule.lhs in model.rules.categories:
        return leaf_from_rule(rule)
    children = tuple(_expand(model, rng, child, depth + 1, max_depth)
                     for child in rule.children)
    if rule.constructor_tag is not None:
        return SqlAst(rule.constructor_tag, children)
    return SqlAst(rule.lhs, children)


def draw(model: Pcfg, rng: random.Random,
         max_depth: int = DEFAULT_MAX_DEPTH,
         max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> SqlAst:
    """One tree by ancestral sampling from a caller-owned RNG.

    Attempts exceeding ``max_depth`` are rejected and redrawn, which keeps
    the conditional distribution over accepted trees; after
    ``max_attempts`` rejections the draw fails.
    """
    if model._unproductive is not None:
        raise UnproductiveGrammarError(model._unproductive)
    for _ in range(max_attempts):
        try:
            return _expand(model, rng, model.rules.root, 1, max_depth)
        except _DepthExceeded:
            continue
    raise SamplingError(
        f"no tree within depth {max_depth} after {max_attempts} attempts")


def sample(model: Pcfg, seed: int,
           max_depth: int = DEFAULT_MAX_DEPTH,
           max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> SqlAst:
    """One tree from a fresh RNG; identical inputs give an identical tree."""
    return draw(model, random.Random(seed), max_depth, max_attempts)


def sample_many(model: Pcfg, n: int, seed: int,
                max_depth: int = DEFAULT_MAX_DEPTH,
                max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> list[SqlAst]:
    """``n`` trees from one seeded stream."""
    rng = random.Random(seed)
    return [draw(model, rng, max_depth, max_attempts) for _ in range(n)]


# --- Persistence ---

def save(model: Pcfg, path) -> None:
    """Write a model file: three header lines, then one line per rule."""
    lines = [
        f"fingerprint\t{model.rules.fingerprint}",
        f"smoothing_k\t{model.smoothing_k}",
        f"db_id\t{model.db_id or ''}",
    ]
    for rule in model.rules.rules:
        lines.append(f"{rule.rule_id}\t{model.counts.get(rule.rule_id)}"
                     f"\t{model.probabilities[rule.rule_id]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_model_header(path) -> dict[str, str]:
    """The three header fields of a model file, without loading the body."""
    path = Path(path)
    if not path.is_file():
        raise ModelError(f"model file not found: {path}")
    header: dict[str, str] = {}
    with path.open(encoding="utf-8") as handle:
        for i in range(3):
            line = handle.readline().rstrip("\n")
            key, sep, value = line.partition("\t")
            if not sep or key not in ("fingerprint", "smoothing_k", "db_id"):
                raise ModelError(f"{path}:{i + 1}: malformed header line")
            header[key] = value
    if set(header) != {"fingerprint", "smoothing_k", "db_id"}:
        raise ModelError(f"{path}: incomplete header")
    return header


def load(path, rules: RuleSet) -> Pcfg:
    """Read a model file back against the rule set it was estimated under."""
    header = read_model_header(path)
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    body_start = 3
    if header["fingerprint"] != rules.fingerprint:
        raise ModelError(
            "model was saved under a different grammar fingerprint "
            f"({header['fingerprint'][:12]}... vs {rules.fingerprint[:12]}...)")
    try:
        smoothing_k = Fraction(header["smoothing_k"])
    except (ValueError, ZeroDivisionError) as exc:
        raise ModelError(f"{path}: bad smoothing constant") from exc

    counts: dict[int, int] = {}
    probabilities: dict[int, Fraction] = {}
    for i, line in enumerate(lines[body_start:], start=body_start + 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ModelError(f"{path}:{i}: expected rule_id, count, probability")
        try:
            rule_id, count, prob = int(parts[0]), int(parts[1]), Fraction(parts[2])
        except (ValueError, ZeroDivisionError) as exc:
            raise ModelError(f"{path}:{i}: malformed rule line") from exc
        if rule_id in probabilities:
            raise ModelError(f"{path}:{i}: duplicate rule id {rule_id}")
        if not 0 <= rule_id < len(rules):
            raise ModelError(f"{path}:{i}: unknown rule id {rule_id}")
        counts[rule_id] = count
        probabilities[rule_id] = prob
    if len(probabilities) != len(rules):
        raise ModelError(f"{path}: file covers {len(probabilities)} of "
                         f"{len(rules)} rules")
    return Pcfg(rules, probabilities, RuleCounts(counts), smoothing_k,
                header["db_id"] or None)
