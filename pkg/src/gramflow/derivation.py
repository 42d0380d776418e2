"""Sequential (generational) dynamics of a grammar.

Direct derivability uses single-occurrence replacement: one occurrence of
a production's lhs is replaced by its rhs, the surrounding context is
kept.  Computational paths, bounded language enumeration and the
extraction of paired emissions (RNA secondary structure) are built on
top of that single rewriting step.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterator, Literal, Optional, Sequence

import numpy as np

from .grammar import (
    Grammar,
    Production,
    Word,
    _cached,
    descendance_degree,
    is_context_free,
    validate_weights,
)

Policy = Literal["leftmost", "uniform-redex"]
POLICIES = ("leftmost", "uniform-redex")


class DerivationError(ValueError):
    pass


@dataclass(frozen=True)
class Redex:
    position: int
    index: int
    production: Production = field(compare=False)

    @property
    def lhs(self) -> Word:
        return self.production.lhs


@dataclass(frozen=True)
class DerivationStep:
    before: Word
    redex: Redex
    after: Word
    # probability of the random choices made at this step (position x branch)
    probability: float = 1.0


@dataclass(frozen=True)
class ComputationalPath:
    start: Word
    steps: tuple[DerivationStep, ...]
    halted: bool
    log_probability: float
    grammar: Grammar = field(compare=False, repr=False)

    @property
    def final_word(self) -> Word:
        return self.steps[-1].after if self.steps else self.start


@dataclass(frozen=True)
class SecondaryStructure:
    word: Word
    pairs: tuple[tuple[int, int], ...]
    dot_bracket: str


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) % 2**64)


# ---------------------------------------------------------------------------
# single steps


def _lhs_table(g: Grammar) -> dict[str, list[tuple[Word, list[int]]]]:
    """lhs grouped by their first symbol, shortest lhs first."""

    def build():
        by_lhs: dict[Word, list[int]] = {}
        for i, p in enumerate(g.productions):
            by_lhs.setdefault(p.lhs, []).append(i)
        table: dict[str, list[tuple[Word, list[int]]]] = {}
        for lhs in sorted(by_lhs, key=len):
            table.setdefault(lhs[0], []).append((lhs, by_lhs[lhs]))
        return table

    return _cached(g, "_lhs_table", build)


def find_redexes(word: Sequence[str], g: Grammar) -> list[Redex]:
    """All (position, production) occurrences, ordered by position then rule index."""
    word = tuple(word)
    table = _lhs_table(g)
    prods = g.productions
    out: list[Redex] = []
    n = len(word)
    for pos, sym in enumerate(word):
        entries = table.get(sym)
        if entries is None:
            continue
        found: list[int] = []
        for lhs, idx in entries:
            k = len(lhs)
            if k == 1 or (pos + k <= n and word[pos : pos + k] == lhs):
                found.extend(idx)
        if len(entries) > 1:
            found.sort()
        for i in found:
            out.append(Redex(pos, i, prods[i]))
    return out


def apply_redex(word: Sequence[str], redex: Redex) -> Word:
    word = tuple(word)
    lhs, pos = redex.production.lhs, redex.position
    if word[pos : pos + len(lhs)] != lhs:
        raise DerivationError(f"stale redex: {lhs!r} does not occur at position {pos}")
    return word[:pos] + redex.production.rhs + word[pos + len(lhs) :]


def directly_derivable(alpha: Sequence[str], beta: Sequence[str], g: Grammar) -> bool:
    beta = tuple(beta)
    return any(apply_redex(alpha, r) == beta for r in find_redexes(alpha, g))


def replay(g: Grammar, redexes: Sequence[Redex], start: Optional[Word] = None) -> Word:
    word = (g.axiom,) if start is None else tuple(start)
    for r in redexes:
        word = apply_redex(word, r)
    return word


# ---------------------------------------------------------------------------
# stochastic computational paths


def _branch_probabilities(g: Grammar) -> list[float]:
    """Probability of each production given its lhs was selected."""

    def build():
        report = validate_weights(g, "stochastic")
        unweighted = all(p.probability is None for p in g.productions)
        if not report.valid and not (unweighted and descendance_degree(g) <= 1):
            if unweighted:
                raise DerivationError("nondeterministic grammar carries no probabilities")
            raise DerivationError(f"invalid branch probabilities: {report.violations}")
        return [1.0 if p.probability is None else p.probability for p in g.productions]

    return _cached(g, "_branch_probs", build)


def _candidate_groups(redexes: list[Redex]) -> list[list[Redex]]:
    """Group redexes sharing (position, lhs); each group is one branching choice."""
    groups: dict[tuple[int, Word], list[Redex]] = {}
    for r in redexes:
        groups.setdefault((r.position, r.production.lhs), []).append(r)
    return list(groups.values())


def _pick_index(u: float, weights: Sequence[float]) -> int:
    acc = 0.0
    for k, w in enumerate(weights):
        acc += w
        if u < acc:
            return k
    # u landed in the rounding gap above the cumulative sum
    return max(k for k, w in enumerate(weights) if w > 0)


def sample_path(
    g: Grammar,
    max_steps: int,
    policy: Policy = "uniform-redex",
    rng_seed: int = 0,
) -> ComputationalPath:
    """Sample one computational path from the axiom.

    At each step a redex site is chosen by ``policy`` (``leftmost`` or
    uniformly among the occupied sites) and then a branch of its lhs with
    the production probabilities.  Stops when no redex remains or after
    ``max_steps`` steps.
    """
    if max_steps <= 0:
        raise DerivationError("max_steps must be positive")
    if policy not in POLICIES:
        raise DerivationError(f"unknown policy {policy!r}")
    probs = _branch_probabilities(g)
    rng = rng_from_seed(rng_seed)
    word: Word = (g.axiom,)
    start = word
    steps: list[DerivationStep] = []
    log_p = 0.0
    halted = False
    while True:
        groups = _candidate_groups(find_redexes(word, g))
        if not groups:
            halted = True
            break
        if len(steps) >= max_steps:
            break
        if policy == "leftmost" or len(groups) == 1:
            group, site_p = groups[0], 1.0
        else:
            group = groups[int(rng.integers(len(groups)))]
            site_p = 1.0 / len(groups)
        weights = [probs[r.index] for r in group]
        if len(group) == 1:
            k = 0
        else:
            k = _pick_index(rng.random(), weights)
        redex = group[k]
        step_p = site_p * weights[k]
        after = apply_redex(word, redex)
        steps.append(DerivationStep(word, redex, after, step_p))
        log_p += math.log(step_p)
        word = after
    return ComputationalPath(start, tuple(steps), halted, log_p, g)


def sample_paths(
    g: Grammar, trials: int, max_steps: int, policy: Policy = "uniform-redex", seed: int = 0
) -> Iterator[ComputationalPath]:
    for k in range(trials):
        yield sample_path(g, max_steps, policy, seed + k)


# ---------------------------------------------------------------------------
# bounded language enumeration


def min_yield_lengths(g: Grammar) -> dict[str, float]:
    """Shortest terminal yield of each nonterminal (inf when unproductive)."""
    best = {s: math.inf for s in g.nonterminals}
    changed = True
    while changed:
        changed = False
        for p in g.productions:
            head = p.lhs[0]
            cost = sum(best[s] if g.is_nonterminal(s) else 1 for s in p.rhs)
            if cost < best[head]:
                best[head] = cost
                changed = True
    return best


def _min_completion(form: Word, g: Grammar, yields: dict[str, float]) -> float:
    return sum(yields[s] if g.is_nonterminal(s) else 1 for s in form)


def _word_order_key(g: Grammar):
    rank = {s: k for k, s in enumerate(g.alphabet)}
    return lambda w: (len(w), tuple(rank[s] for s in w))


def enumerate_language(
    g: Grammar,
    max_word_len: int,
    terminal_only: bool = True,
    policy: Policy = "leftmost",
    with_probabilities: bool = True,
    max_rounds: int = 100_000,
    max_forms: int = 1_000_000,
) -> dict[Word, Optional[float]]:
    """Words derivable from the axiom whose length fits ``max_word_len``.

    For context-free grammars each terminal word is mapped to its
    probability: the sum, over derivations following ``policy``, of the
    products of the choice probabilities.  Sentential forms (returned
    when ``terminal_only`` is false) and words of grammars enumerated
    without probabilities map to ``None``.

    Sentential forms are pruned as soon as their minimal completed length
    exceeds the bound.  For grammars that are not context free that bound
    is the current form length, which is exact only for non-contracting
    rules.
    """
    if g.mode != "strict":
        raise DerivationError("language enumeration needs a strict-mode grammar")
    if policy not in POLICIES:
        raise DerivationError(f"unknown policy {policy!r}")
    cf = is_context_free(g)
    if with_probabilities and not cf:
        raise DerivationError("word probabilities are only defined for context-free grammars")

    if cf:
        yields = min_yield_lengths(g)

        def too_long(form: Word) -> bool:
            return _min_completion(form, g, yields) > max_word_len

        # Unproductive symbols never vanish, so they still occupy one slot
        # in every sentential form they leave behind.
        form_yields = {s: (1 if math.isinf(v) else v) for s, v in yields.items()}

        def form_too_long(form: Word) -> bool:
            return _min_completion(form, g, form_yields) > max_word_len

    else:

        def too_long(form: Word) -> bool:
            return len(form) > max_word_len

        form_too_long = too_long

    result: dict[Word, Optional[float]] = {}
    axiom: Word = (g.axiom,)

    if with_probabilities:
        probs = _branch_probabilities(g)
        frontier: dict[Word, float] = {} if too_long(axiom) else {axiom: 1.0}
        mass: dict[Word, float] = defaultdict(float)
        rounds = 0
        while frontier:
            rounds += 1
            if rounds > max_rounds:
                raise DerivationError(
                    f"enumeration did not terminate within {max_rounds} rounds "
                    "(looping or erasing productions)"
                )
            nxt: dict[Word, float] = defaultdict(float)
            for form, m in frontier.items():
                groups = _candidate_groups(find_redexes(form, g))
                if not groups:
                    if g.is_terminal_word(form):
                        mass[form] += m
                    continue
                if policy == "leftmost":
                    chosen, site_p = groups[:1], 1.0
                else:
                    chosen, site_p = groups, 1.0 / len(groups)
                for group in chosen:
                    for r in group:
                        child = apply_redex(form, r)
                        if not too_long(child):
                            nxt[child] += m * site_p * probs[r.index]
            if len(nxt) > max_forms:
                raise DerivationError(f"more than {max_forms} live sentential forms")
            frontier = nxt
        result.update(mass)

    if not terminal_only or not with_probabilities:
        seen = {axiom} if not form_too_long(axiom) else set()
        queue = list(seen)
        while queue:
            form = queue.pop()
            for r in find_redexes(form, g):
                child = apply_redex(form, r)
                if child in seen or form_too_long(child):
                    continue
                seen.add(child)
                if len(seen) > max_forms:
                    raise DerivationError(f"more than {max_forms} sentential forms")
                queue.append(child)
        for form in seen:
            terminal = g.is_terminal_word(form)
            if terminal_only and not terminal:
                continue
            if len(form) > max_word_len:
                continue
            result.setdefault(form, None)

    key = _word_order_key(g)
    return {w: result[w] for w in sorted(result, key=key)}


# ---------------------------------------------------------------------------
# paired emissions


def _is_pairing(g: Grammar, p: Production) -> bool:
    rhs = p.rhs
    return len(rhs) >= 3 and g.is_terminal(rhs[0]) and g.is_terminal(rhs[-1])


def extract_pairing(path: ComputationalPath) -> SecondaryStructure:
    """Pair the two flanking terminals of every ``X -> t1 ... t2`` application."""
    g = path.grammar
    if not path.halted:
        raise DerivationError("pairing needs a halted path")
    if not g.is_terminal_word(path.final_word):
        raise DerivationError("pairing needs a terminal final word")
    tokens: list[int] = []
    next_id = 0
    for _ in path.start:
        tokens.append(next_id)
        next_id += 1
    paired_ids: list[tuple[int, int]] = []
    for step in path.steps:
        prod, pos = step.redex.production, step.redex.position
        if len(prod.lhs) != 1:
            raise DerivationError("pairing needs a context-free derivation")
        new = list(range(next_id, next_id + len(prod.rhs)))
        next_id += len(prod.rhs)
        tokens[pos : pos + 1] = new
        if _is_pairing(g, prod):
            paired_ids.append((new[0], new[-1]))
    where = {uid: k for k, uid in enumerate(tokens)}
    pairs = sorted((where[a], where[b]) for a, b in paired_ids)
    return SecondaryStructure(path.final_word, tuple(pairs), dot_bracket(len(tokens), pairs))


def dot_bracket(length: int, pairs: Sequence[tuple[int, int]]) -> str:
    chars = ["."] * length
    for i, j in pairs:
        if not 0 <= i < j < length:
            raise ValueError(f"bad pair {(i, j)} for length {length}")
        if chars[i] != "." or chars[j] != ".":
            raise ValueError(f"position reused by pair {(i, j)}")
        chars[i], chars[j] = "(", ")"
    return "".join(chars)


def pairs_are_nested(pairs: Sequence[tuple[int, int]]) -> bool:
    stack: list[int] = []
    opening = {i: j for i, j in pairs}
    closing = {j for _, j in pairs}
    end = max((j for _, j in pairs), default=-1)
    for k in range(end + 1):
        if k in opening:
            stack.append(opening[k])
        elif k in closing:
            if not stack or stack.pop() != k:
                return False
    return not stack


__all__ = [
    "Redex",
    "DerivationStep",
    "ComputationalPath",
    "SecondaryStructure",
    "DerivationError",
    "find_redexes",
    "apply_redex",
    "directly_derivable",
    "replay",
    "sample_path",
    "sample_paths",
    "enumerate_language",
    "min_yield_lengths",
    "extract_pairing",
    "dot_bracket",
    "pairs_are_nested",
    "rng_from_seed",
]
