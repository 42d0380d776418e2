"""Sequence configuration space: distances on the word tree and bounded bases."""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from typing import Sequence

from .grammar import Word

DEFAULT_DIM_CAP = 16384
DIM_CAP_ENV = "GRAMFLOW_DIM_CAP"


class BasisCapError(ValueError):
    pass


def dim_cap() -> int:
    value = os.environ.get(DIM_CAP_ENV)
    if value is None:
        return DEFAULT_DIM_CAP
    try:
        cap = int(value)
    except ValueError:
        raise BasisCapError(f"{DIM_CAP_ENV} must be an integer, got {value!r}") from None
    if cap < 1:
        raise BasisCapError(f"{DIM_CAP_ENV} must be positive")
    return cap


def common_prefix_length(a: Sequence[str], b: Sequence[str]) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def tree_distance(a: Sequence[str], b: Sequence[str]) -> int:
    """Generations to climb from the deeper word back to the common prefix.

    ``max(|a|, |b|) - |lcp(a, b)|``; AG/GA and AA/GA are both at distance 2.
    """
    return max(len(a), len(b)) - common_prefix_length(a, b)


def hamming_distance(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) != len(b):
        raise ValueError(f"Hamming distance needs equal lengths, got {len(a)} and {len(b)}")
    return sum(x != y for x, y in zip(a, b))


def basis_dimension(alphabet_size: int, max_len: int) -> int:
    return sum(alphabet_size**n for n in range(max_len + 1))


@dataclass(frozen=True)
class BasisEnumeration:
    """Words of length <= max_len, ordered by length then by alphabet order."""

    alphabet: tuple[str, ...]
    max_len: int
    words: tuple[Word, ...]
    index: dict = field(repr=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.words)

    def word_at(self, i: int) -> Word:
        return self.words[i]

    def index_of(self, word: Sequence[str]) -> int:
        try:
            return self.index[tuple(word)]
        except KeyError:
            raise KeyError(f"word {tuple(word)!r} not in basis (N={self.max_len})") from None

    def level(self, n: int) -> range:
        start = basis_dimension(len(self.alphabet), n - 1) if n > 0 else 0
        return range(start, start + len(self.alphabet) ** n)


def enumerate_basis(alphabet: Sequence[str], max_len: int, cap: int | None = None) -> BasisEnumeration:
    alphabet = tuple(alphabet)
    if not alphabet:
        raise ValueError("alphabet must not be empty")
    if len(set(alphabet)) != len(alphabet):
        raise ValueError("alphabet has repeated symbols")
    if max_len < 0:
        raise ValueError("max_len must be >= 0")
    cap = dim_cap() if cap is None else cap
    dim = basis_dimension(len(alphabet), max_len)
    if dim > cap:
        raise BasisCapError(
            f"basis dimension {dim} for |A|={len(alphabet)}, N={max_len} exceeds cap {cap}; "
            f"use a smaller N or raise {DIM_CAP_ENV}"
        )
    # itertools.product yields tuples in lexicographic order of the input sequence
    words = tuple(
        w for n in range(max_len + 1) for w in itertools.product(alphabet, repeat=n)
    )
    return BasisEnumeration(alphabet, max_len, words, {w: i for i, w in enumerate(words)})
