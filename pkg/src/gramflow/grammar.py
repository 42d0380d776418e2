"""Grammars, their text format, weight validation and classification.

A grammar is the quadruple (nonterminals, terminals, productions, axiom).
Symbols are plain strings and words are tuples of symbols; the empty
word is ``()`` and is written ``eps`` in grammar files.

The text format is line oriented::

    nonterminals: S
    terminals: a
    axiom: S
    mode: strict
    rule S -> a S   @ p=0.5
    rule S -> a     @ p=0.5 u=0.7071,0.0 rate=1.0
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Literal, Optional, Sequence

Word = tuple[str, ...]
EMPTY: Word = ()
EPS_TOKEN = "eps"
WEIGHT_TOL = 1e-9

Mode = Literal["strict", "relaxed"]


class GrammarError(ValueError):
    """Raised for malformed grammar documents or invalid grammars."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ClassificationError(GrammarError):
    pass


@dataclass(frozen=True)
class Production:
    lhs: Word
    rhs: Word
    probability: Optional[float] = None
    amplitude: Optional[complex] = None
    rate: Optional[float] = None

    def __str__(self) -> str:
        return f"{format_word(self.lhs, ' ')} -> {format_word(self.rhs, ' ')}"


@dataclass(frozen=True)
class Grammar:
    nonterminals: tuple[str, ...]
    terminals: tuple[str, ...]
    productions: tuple[Production, ...]
    axiom: str
    mode: Mode = "strict"
    # Declaration order of the two alphabet lines; drives lexicographic order.
    terminals_first: bool = True

    def __post_init__(self):
        object.__setattr__(self, "nonterminals", tuple(self.nonterminals))
        object.__setattr__(self, "terminals", tuple(self.terminals))
        object.__setattr__(self, "productions", tuple(self.productions))
        _check_grammar(self)

    @property
    def alphabet(self) -> tuple[str, ...]:
        if self.terminals_first:
            return self.terminals + self.nonterminals
        return self.nonterminals + self.terminals

    def is_terminal(self, symbol: str) -> bool:
        return symbol in self._terminal_set

    def is_nonterminal(self, symbol: str) -> bool:
        return symbol in self._nonterminal_set

    def is_terminal_word(self, word: Sequence[str]) -> bool:
        return all(s in self._terminal_set for s in word)

    @property
    def _terminal_set(self) -> frozenset:
        return _cached(self, "_tset", lambda: frozenset(self.terminals))

    @property
    def _nonterminal_set(self) -> frozenset:
        return _cached(self, "_ntset", lambda: frozenset(self.nonterminals))

    def with_productions(self, productions: Iterable[Production]) -> "Grammar":
        return Grammar(
            self.nonterminals,
            self.terminals,
            tuple(productions),
            self.axiom,
            self.mode,
            self.terminals_first,
        )


def _cached(obj, name, factory):
    try:
        return obj.__dict__[name]
    except KeyError:
        value = factory()
        object.__setattr__(obj, name, value)
        return value


def _check_grammar(g: Grammar) -> None:
    if not g.nonterminals:
        raise GrammarError("the nonterminal alphabet must not be empty")
    if g.mode not in ("strict", "relaxed"):
        raise GrammarError(f"unknown mode {g.mode!r}")
    nt, t = set(g.nonterminals), set(g.terminals)
    for name, alph in (("nonterminal", g.nonterminals), ("terminal", g.terminals)):
        if len(set(alph)) != len(alph):
            raise GrammarError(f"duplicate {name} symbol")
        for s in alph:
            if not s or any(c.isspace() for c in s) or s == EPS_TOKEN:
                raise GrammarError(f"invalid symbol name {s!r}")
    overlap = nt & t
    if overlap:
        raise GrammarError(f"alphabet overlap: {sorted(overlap)}")
    if g.axiom not in nt:
        raise GrammarError(f"axiom {g.axiom!r} is not a declared nonterminal")
    seen = set()
    for p in g.productions:
        if not p.lhs:
            raise GrammarError(f"empty lhs in production {p}")
        for s in p.lhs + p.rhs:
            if s not in nt and s not in t:
                raise GrammarError(f"undeclared symbol {s!r} in production {p}")
        if g.mode == "strict" and all(s in t for s in p.lhs):
            raise GrammarError(f"lhs in A_t* (all terminal) in production {p}")
        key = (p.lhs, p.rhs)
        if key in seen:
            raise GrammarError(f"duplicate production {p}")
        seen.add(key)
        if p.probability is not None and not math.isfinite(p.probability):
            raise GrammarError(f"non-finite probability in production {p}")
        if p.rate is not None and not math.isfinite(p.rate):
            raise GrammarError(f"non-finite rate in production {p}")


# ---------------------------------------------------------------------------
# text format


def format_word(word: Sequence[str], sep: str = " ") -> str:
    return sep.join(word) if word else EPS_TOKEN


def parse_word(text: str) -> Word:
    """Split a whitespace-separated symbol list; ``eps`` alone is the empty word."""
    tokens = text.split()
    if tokens == [EPS_TOKEN]:
        return EMPTY
    if EPS_TOKEN in tokens:
        raise GrammarError("'eps' cannot be mixed with other symbols")
    return tuple(tokens)


def _parse_weights(clause: str, lineno: int) -> dict:
    names = {"p": "probability", "u": "amplitude", "rate": "rate"}
    out = {}
    for item in clause.split():
        key, sep, value = item.partition("=")
        if not sep:
            raise GrammarError(f"malformed weight {item!r}", lineno)
        if key not in names:
            raise GrammarError(f"unknown weight {key!r}", lineno)
        if names[key] in out:
            raise GrammarError(f"weight {key!r} given twice", lineno)
        try:
            if key == "u":
                re_s, comma, im_s = value.partition(",")
                if not comma:
                    raise ValueError(value)
                out["amplitude"] = complex(float(re_s), float(im_s))
            else:
                out[names[key]] = float(value)
        except ValueError:
            raise GrammarError(f"bad number in {item!r}", lineno) from None
    return out


def parse_grammar(text: str) -> Grammar:
    """Parse a grammar document; errors carry the offending line number."""
    decls: dict[str, tuple[int, list[str]]] = {}
    rules: list[tuple[int, Production]] = []
    order: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("rule ") or line == "rule":
            body = line[4:]
            body, _, clause = body.partition("@")
            lhs_s, arrow, rhs_s = body.partition("->")
            if not arrow:
                raise GrammarError("rule needs '->'", lineno)
            try:
                lhs, rhs = parse_word(lhs_s), parse_word(rhs_s)
            except GrammarError as exc:
                raise GrammarError(str(exc), lineno) from None
            if not rhs_s.split():
                raise GrammarError("empty rhs; write 'eps' for the empty word", lineno)
            rules.append((lineno, Production(lhs, rhs, **_parse_weights(clause, lineno))))
            continue
        key, colon, value = line.partition(":")
        key = key.strip()
        if not colon or key not in ("nonterminals", "terminals", "axiom", "mode"):
            raise GrammarError(f"syntax error: {raw.strip()!r}", lineno)
        if key in decls:
            raise GrammarError(f"{key!r} declared twice", lineno)
        decls[key] = (lineno, value.split())
        order.append(key)

    for key in ("nonterminals", "axiom"):
        if key not in decls:
            raise GrammarError(f"missing '{key}:' declaration")
    axiom_line, axiom = decls["axiom"]
    if len(axiom) != 1:
        raise GrammarError("axiom must be a single symbol", axiom_line)
    mode_line, mode = decls.get("mode", (None, ["strict"]))
    if len(mode) != 1 or mode[0] not in ("strict", "relaxed"):
        raise GrammarError("mode must be 'strict' or 'relaxed'", mode_line)
    nonterminals = decls["nonterminals"][1]
    terminals = decls.get("terminals", (None, []))[1]
    terminals_first = "terminals" in order and order.index("terminals") < order.index(
        "nonterminals"
    )

    # Validate incrementally so that errors point at the responsible line.
    overlap = set(nonterminals) & set(terminals)
    if overlap:
        raise GrammarError(f"alphabet overlap: {sorted(overlap)}", decls["terminals"][0])
    if axiom[0] not in nonterminals:
        raise GrammarError(f"axiom {axiom[0]!r} is not a declared nonterminal", axiom_line)
    productions: list[Production] = []
    for lineno, prod in rules:
        try:
            Grammar(nonterminals, terminals, productions + [prod], axiom[0], mode[0])
        except GrammarError as exc:
            raise GrammarError(str(exc), lineno) from None
        productions.append(prod)
    try:
        return Grammar(nonterminals, terminals, productions, axiom[0], mode[0], terminals_first)
    except GrammarError as exc:
        raise GrammarError(str(exc), decls["nonterminals"][0]) from None


def serialize_grammar(g: Grammar) -> str:
    lines = []
    alph = [("terminals", g.terminals), ("nonterminals", g.nonterminals)]
    if not g.terminals_first:
        alph.reverse()
    for key, symbols in alph:
        lines.append(f"{key}: {' '.join(symbols)}".rstrip())
    lines.append(f"axiom: {g.axiom}")
    lines.append(f"mode: {g.mode}")
    for p in g.productions:
        weights = []
        if p.probability is not None:
            weights.append(f"p={p.probability!r}")
        if p.amplitude is not None:
            weights.append(f"u={p.amplitude.real!r},{p.amplitude.imag!r}")
        if p.rate is not None:
            weights.append(f"rate={p.rate!r}")
        line = f"rule {p}"
        if weights:
            line += "  @ " + " ".join(weights)
        lines.append(line)
    return "\n".join(lines) + "\n"


def load_grammar(path) -> Grammar:
    with open(path, encoding="utf-8") as fh:
        return parse_grammar(fh.read())


def load_fixture(name: str) -> Grammar:
    """Load one of the grammars shipped in ``gramflow/data`` (e.g. ``"rna"``)."""
    from importlib import resources

    text = resources.files("gramflow.data").joinpath(f"{name}.gram").read_text("utf-8")
    return parse_grammar(text)


# ---------------------------------------------------------------------------
# Dom / Ran and classification


def domain_of(productions: Iterable[Production]) -> list[Word]:
    """Distinct left-hand sides, in first-appearance order."""
    return list(OrderedDict.fromkeys(p.lhs for p in productions))


def range_of(productions: Iterable[Production], lhs: Sequence[str]) -> list[Word]:
    lhs = tuple(lhs)
    return [p.rhs for p in productions if p.lhs == lhs]


def branches(g: Grammar) -> "OrderedDict[Word, list[int]]":
    """Map each lhs to the indices of its productions."""
    out: OrderedDict[Word, list[int]] = OrderedDict()
    for i, p in enumerate(g.productions):
        out.setdefault(p.lhs, []).append(i)
    return out


def descendance_degree(g: Grammar) -> int:
    return max((len(v) for v in branches(g).values()), default=0)


def _is_type3(g: Grammar, p: Production, left_linear: bool) -> bool:
    if len(p.lhs) != 1 or not g.is_nonterminal(p.lhs[0]):
        return False
    rhs = p.rhs
    if g.is_terminal_word(rhs):
        return True
    if g.is_nonterminal(rhs[-1]) and g.is_terminal_word(rhs[:-1]):
        return True
    return left_linear and g.is_nonterminal(rhs[0]) and g.is_terminal_word(rhs[1:])


def _is_type2(g: Grammar, p: Production) -> bool:
    return len(p.lhs) == 1 and g.is_nonterminal(p.lhs[0])


def _is_type1(g: Grammar, p: Production) -> bool:
    lhs, rhs = p.lhs, p.rhs
    for k, sym in enumerate(lhs):
        if not g.is_nonterminal(sym):
            continue
        left, right = lhs[:k], lhs[k + 1 :]
        if not left and not right:
            continue
        middle_len = len(rhs) - len(left) - len(right)
        if middle_len < 1:
            continue
        if rhs[: len(left)] == left and rhs[len(rhs) - len(right) :] == right:
            return True
    return False


def production_type(g: Grammar, p: Production, left_linear: bool = False) -> int:
    if _is_type3(g, p, left_linear):
        return 3
    if _is_type2(g, p):
        return 2
    if _is_type1(g, p):
        return 1
    return 0


def chomsky_degree(g: Grammar, left_linear: bool = False) -> int:
    """Largest k such that every production matches the type-k pattern.

    The patterns are tested independently: a context-free rule without
    surrounding context does not match the context-sensitive pattern, so
    a grammar mixing such rules with context-sensitive ones is type 0.
    """
    if g.mode != "strict":
        raise ClassificationError("classification refused for relaxed-mode grammars")
    checks = {
        3: lambda p: _is_type3(g, p, left_linear),
        2: lambda p: _is_type2(g, p),
        1: lambda p: _is_type1(g, p),
    }
    for k in (3, 2, 1):
        if all(checks[k](p) for p in g.productions):
            return k
    return 0


def is_context_free(g: Grammar) -> bool:
    return all(_is_type2(g, p) for p in g.productions)


@dataclass(frozen=True)
class WeightReport:
    mode: str
    valid: bool
    # lhs -> 1 - sum of weights (or of squared moduli); 0 for rate mode
    residuals: dict = field(default_factory=dict)
    violations: tuple = ()


def validate_weights(g: Grammar, mode: Literal["stochastic", "quantum", "rates"]) -> WeightReport:
    """Check per-lhs normalization of probabilities or amplitudes, or rate positivity.

    Never renormalizes; each offending lhs (or production, for rates) is
    reported with its residual in ``violations``.
    """
    residuals: dict = {}
    violations: list = []
    if mode == "rates":
        for i, p in enumerate(g.productions):
            if p.rate is None:
                violations.append((i, "missing rate"))
            elif not p.rate > 0:
                violations.append((i, f"non-positive rate {p.rate!r}"))
        return WeightReport(mode, not violations, residuals, tuple(violations))
    if mode not in ("stochastic", "quantum"):
        raise ValueError(f"unknown weight mode {mode!r}")

    for lhs, idx in branches(g).items():
        prods = [g.productions[i] for i in idx]
        if mode == "stochastic":
            weights = [p.probability for p in prods]
            if any(w is None for w in weights):
                residuals[lhs] = math.nan
                violations.append((lhs, "missing probability"))
                continue
            if any(w < 0 or w > 1 for w in weights):
                violations.append((lhs, "probability outside [0, 1]"))
            total = math.fsum(weights)
        else:
            amps = [p.amplitude for p in prods]
            if any(a is None for a in amps):
                residuals[lhs] = math.nan
                violations.append((lhs, "missing amplitude"))
                continue
            total = math.fsum(abs(a) ** 2 for a in amps)
        residual = 1.0 - total
        residuals[lhs] = residual
        if abs(residual) > WEIGHT_TOL:
            violations.append((lhs, residual))
    return WeightReport(mode, not violations, residuals, tuple(violations))


@dataclass(frozen=True)
class ClassificationReport:
    descendance_degree: int
    chomsky_degree: int
    stochastic_valid: bool
    quantum_valid: bool
    per_lhs_branch_counts: dict

    def as_dict(self) -> dict:
        return {
            "chomsky_degree": self.chomsky_degree,
            "descendance_degree": self.descendance_degree,
            "stochastic_valid": self.stochastic_valid,
            "quantum_valid": self.quantum_valid,
            "per_lhs_branch_counts": {
                format_word(k): v for k, v in self.per_lhs_branch_counts.items()
            },
        }


def classify(g: Grammar, left_linear: bool = False) -> ClassificationReport:
    counts = {lhs: len(idx) for lhs, idx in branches(g).items()}
    return ClassificationReport(
        descendance_degree=descendance_degree(g),
        chomsky_degree=chomsky_degree(g, left_linear),
        stochastic_valid=validate_weights(g, "stochastic").valid,
        quantum_valid=validate_weights(g, "quantum").valid,
        per_lhs_branch_counts=counts,
    )


__all__ = [
    "Word",
    "EMPTY",
    "Production",
    "Grammar",
    "GrammarError",
    "ClassificationError",
    "WeightReport",
    "ClassificationReport",
    "parse_grammar",
    "parse_word",
    "format_word",
    "serialize_grammar",
    "load_grammar",
    "load_fixture",
    "domain_of",
    "range_of",
    "branches",
    "descendance_degree",
    "chomsky_degree",
    "production_type",
    "is_context_free",
    "validate_weights",
    "classify",
]
