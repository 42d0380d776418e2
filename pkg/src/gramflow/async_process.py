"""Continuous-time asynchronous rewriting of a finite window.

Every occurrence of every lhs inside the window carries an exponential
clock ticking at its production's rate.  The sampler is the direct
Gillespie method: the waiting time is Exponential(R) with R the total
rate, and the occurrence that fires is chosen with probability rate/R.

Residues remember the original site they came from so that observers
can locate the nearest untouched original sites on either side of the
origin after arbitrary insertions and deletions.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import accumulate
from statistics import NormalDist
from typing import Optional, Sequence, Union

import numpy as np

from .derivation import Redex, _lhs_table, rng_from_seed
from .grammar import Grammar, Word, validate_weights

IID_UNIFORM = "iid-uniform"
XiSpec = Union[Sequence[str], str]


class AsyncError(ValueError):
    pass


@dataclass(frozen=True)
class Residue:
    symbol: str
    origin: Optional[int]
    modified: bool = False

    def __post_init__(self):
        if not self.modified and self.origin is None:
            raise AsyncError("an unmodified residue must carry its original site")


@dataclass(frozen=True)
class WindowState:
    residues: tuple[Residue, ...]
    time: float
    N: int
    event_count: int = 0

    @property
    def word(self) -> Word:
        return tuple(r.symbol for r in self.residues)


@dataclass(frozen=True)
class EventRecord:
    time: float
    position: int
    production: int
    removed: int
    inserted: int


# ---------------------------------------------------------------------------
# window construction


def init_window(xi: Sequence[str], g: Grammar) -> WindowState:
    xi = tuple(xi)
    if len(xi) % 2 == 0:
        raise AsyncError(f"initial configuration must have odd length 2N+1, got {len(xi)}")
    _require_rates(g)
    for s in xi:
        if not (g.is_terminal(s) or g.is_nonterminal(s)):
            raise AsyncError(f"symbol {s!r} is not in the grammar alphabet")
    n = len(xi) // 2
    residues = tuple(Residue(s, k - n, False) for k, s in enumerate(xi))
    return WindowState(residues, 0.0, n, 0)


def _require_rates(g: Grammar) -> None:
    report = validate_weights(g, "rates")
    if not report.valid:
        raise AsyncError(f"asynchronous grammar needs positive rates: {report.violations}")


def window_word(xi: Sequence[str], N: int) -> Word:
    """The sites -N..N of the periodic sequence whose central period is ``xi``.

    A word of length exactly 2N+1 is returned unchanged.
    """
    xi = tuple(xi)
    if not xi:
        raise AsyncError("initial configuration must not be empty")
    if len(xi) == 2 * N + 1:
        return xi
    c = len(xi) // 2
    return tuple(xi[(c + k) % len(xi)] for k in range(-N, N + 1))


# ---------------------------------------------------------------------------
# the mutable engine shared by all public entry points


def _context(lhs: Word, rhs: Word) -> tuple[int, int]:
    """Lengths of the common prefix and suffix left untouched by a rewrite."""
    m = min(len(lhs), len(rhs))
    pre = 0
    while pre < m and lhs[pre] == rhs[pre]:
        pre += 1
    suf = 0
    while suf < m - pre and lhs[-1 - suf] == rhs[-1 - suf]:
        suf += 1
    return pre, suf


class _Engine:
    def __init__(self, g: Grammar, symbols, origins, modified, time=0.0, events=0, incremental=False):
        self.g = g
        self.table = _lhs_table(g)
        self.rates = [p.rate for p in g.productions]
        self.shapes = [(p.lhs, p.rhs, _context(p.lhs, p.rhs)) for p in g.productions]
        self.max_lhs = max((len(p.lhs) for p in g.productions), default=1)
        self.symbols = list(symbols)
        self.origins = list(origins)
        self.modified = list(modified)
        self.time = time
        self.events = events
        self.incremental = incremental
        self.pos: list[int] = []
        self.idx: list[int] = []
        self.rt: list[float] = []
        self._rescan()

    @classmethod
    def from_state(cls, state: WindowState, g: Grammar, incremental=False) -> "_Engine":
        return cls(
            g,
            [r.symbol for r in state.residues],
            [r.origin for r in state.residues],
            [r.modified for r in state.residues],
            state.time,
            state.event_count,
            incremental,
        )

    def _scan(self, start: int, stop: int):
        sym, table, rates = self.symbols, self.table, self.rates
        n = len(sym)
        pos, idx, rt = [], [], []
        for p in range(max(start, 0), min(stop, n)):
            entries = table.get(sym[p])
            if entries is None:
                continue
            found: list[int] = []
            for lhs, ids in entries:
                k = len(lhs)
                if k == 1 or (p + k <= n and tuple(sym[p : p + k]) == lhs):
                    found.extend(ids)
            if len(entries) > 1:
                found.sort()
            for i in found:
                pos.append(p)
                idx.append(i)
                rt.append(rates[i])
        return pos, idx, rt

    def _rescan(self) -> None:
        self.pos, self.idx, self.rt = self._scan(0, len(self.symbols))

    def redexes(self) -> list[tuple[int, int, float]]:
        return list(zip(self.pos, self.idx, self.rt))

    def step(self, rng: np.random.Generator, t_max: float = math.inf) -> Optional[EventRecord]:
        """Fire one event; None when halted or when the next event lies past t_max."""
        if not self.rt:
            return None
        cum = list(accumulate(self.rt))
        total = cum[-1]
        dt = rng.standard_exponential() / total
        if self.time + dt > t_max:
            return None
        u = rng.random()
        k = min(bisect_right(cum, u * total), len(cum) - 1)
        at, rule = self.pos[k], self.idx[k]
        lhs, rhs, (pre, suf) = self.shapes[rule]
        a, b = at + pre, at + len(lhs) - suf
        new = rhs[pre : len(rhs) - suf]
        self.symbols[a:b] = new
        self.origins[a:b] = [None] * len(new)
        self.modified[a:b] = [True] * len(new)
        self.time += dt
        self.events += 1
        if self.incremental:
            self._patch(at, len(lhs), len(rhs))
        else:
            self._rescan()
        return EventRecord(self.time, at, rule, b - a, len(new))

    def _patch(self, at: int, old_len: int, new_len: int) -> None:
        # Occurrences starting in [at - max_lhs + 1, at + old_len) may have changed;
        # later ones only shift.  Keeps the exact (position, rule) order of a rescan.
        lo = at - self.max_lhs + 1
        a = bisect_left(self.pos, lo)
        b = bisect_left(self.pos, at + old_len)
        shift = new_len - old_len
        npos, nidx, nrt = self._scan(lo, at + new_len)
        tail = self.pos[b:]
        self.pos = self.pos[:a] + npos + [p + shift for p in tail]
        self.idx = self.idx[:a] + nidx + self.idx[b:]
        self.rt = self.rt[:a] + nrt + self.rt[b:]

    def state(self, n: int) -> WindowState:
        residues = tuple(
            Residue(s, o, m) for s, o, m in zip(self.symbols, self.origins, self.modified)
        )
        return WindowState(residues, self.time, n, self.events)



# ---------------------------------------------------------------------------
# public single-trajectory API


def scan_rates(state: WindowState, g: Grammar) -> list[tuple[Redex, float]]:
    """Every lhs occurrence fully inside the window, with its clock rate."""
    eng = _Engine.from_state(state, g)
    prods = g.productions
    return [(Redex(p, i, prods[i]), r) for p, i, r in eng.redexes()]


def total_rate(state: WindowState, g: Grammar) -> float:
    return math.fsum(r for _, r in scan_rates(state, g))


def gillespie_step(
    state: WindowState, g: Grammar, rng: np.random.Generator
) -> Optional[tuple[WindowState, EventRecord]]:
    """Advance ``state`` by one event, or return None when no clock is running."""
    eng = _Engine.from_state(state, g)
    event = eng.step(rng)
    if event is None:
        return None
    return eng.state(state.N), event


def _start_engine(xi, g, incremental):
    init = init_window(xi, g)
    return init, _Engine.from_state(init, g, incremental)


def simulate(
    xi: Sequence[str],
    g: Grammar,
    t_max: float,
    rng_seed: int = 0,
    incremental: bool = False,
) -> tuple[WindowState, list[EventRecord]]:
    """Run from ``xi`` until the next event would fall after ``t_max`` or no clock remains.

    The returned state is the configuration at time ``t_max`` (or at the
    last event when ``t_max`` is infinite).
    """
    if not t_max >= 0:
        raise AsyncError("t_max must be >= 0")
    init, eng = _start_engine(xi, g, incremental)
    rng = rng_from_seed(rng_seed)
    events = []
    while True:
        ev = eng.step(rng, t_max)
        if ev is None:
            break
        events.append(ev)
    if math.isfinite(t_max):
        eng.time = t_max
    return eng.state(init.N), events


def simulate_states(
    xi: Sequence[str], g: Grammar, t_max: float, rng_seed: int = 0, incremental: bool = False
) -> tuple[list[WindowState], list[EventRecord]]:
    """Like :func:`simulate`, also returning the window right after every event.

    ``states[0]`` is the initial window and ``states[k]`` follows ``events[k-1]``.
    """
    if not t_max >= 0:
        raise AsyncError("t_max must be >= 0")
    init, eng = _start_engine(xi, g, incremental)
    rng = rng_from_seed(rng_seed)
    states, events = [init], []
    while True:
        ev = eng.step(rng, t_max)
        if ev is None:
            break
        events.append(ev)
        states.append(eng.state(init.N))
    return states, events


def observer_pair(state: WindowState) -> Optional[tuple[int, int]]:
    """Nearest unmodified original sites (i < 0 <= j), or None on overflow."""
    i = j = None
    for r in state.residues:
        if r.modified or r.origin is None:
            continue
        if r.origin < 0:
            i = r.origin
        else:
            j = r.origin
            break
    if i is None or j is None:
        return None
    return i, j


def admissible_jump(before: Sequence[str], after: Sequence[str], g: Grammar) -> bool:
    """True when ``after`` is ``before`` with one lhs occurrence replaced by its rhs."""
    before, after = tuple(before), tuple(after)
    for p in g.productions:
        k, m = len(p.lhs), len(p.rhs)
        if len(after) - len(before) != m - k:
            continue
        for s in range(len(before) - k + 1):
            if (
                before[s : s + k] == p.lhs
                and after[s : s + m] == p.rhs
                and before[:s] == after[:s]
                and before[s + k :] == after[s + m :]
            ):
                return True
    return False


# ---------------------------------------------------------------------------
# observer statistics


_Z95 = NormalDist().inv_cdf(0.975)


def wilson_interval(successes: int, n: int, z: float = _Z95) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # the bounds are exactly 0 and 1 at the extremes; skip the rounding residue
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return (lo, hi)


@dataclass(frozen=True)
class ObserverLaw:
    t: float
    counts: dict = field(default_factory=dict)
    overflow_count: int = 0
    trials: int = 0

    @property
    def resolved(self) -> int:
        return self.trials - self.overflow_count

    @property
    def overflow_rate(self) -> float:
        return self.overflow_count / self.trials if self.trials else 0.0

    def mu_hat(self) -> dict:
        n = self.resolved
        return {cell: c / n for cell, c in self.counts.items()} if n else {}

    def mu_hat_exact(self) -> dict:
        n = self.resolved
        return {cell: Fraction(c, n) for cell, c in self.counts.items()} if n else {}

    def intervals(self) -> dict:
        n = self.resolved
        return {cell: wilson_interval(c, n) for cell, c in self.counts.items()}

    def merged(self, other: "ObserverLaw") -> "ObserverLaw":
        counts = dict(self.counts)
        for cell, c in other.counts.items():
            counts[cell] = counts.get(cell, 0) + c
        return ObserverLaw(
            self.t,
            dict(sorted(counts.items())),
            self.overflow_count + other.overflow_count,
            self.trials + other.trials,
        )


def _initial_word(xi_spec: XiSpec, N: int, g: Grammar, rng: np.random.Generator) -> Word:
    if isinstance(xi_spec, str) and xi_spec == IID_UNIFORM:
        letters = g.terminals or g.alphabet
        return tuple(letters[k] for k in rng.integers(len(letters), size=2 * N + 1))
    return window_word(xi_spec, N)


def run_trial(
    xi_spec: XiSpec, N: int, g: Grammar, t_max: float, rng_seed: int, incremental: bool = True
) -> tuple[Word, WindowState, list[EventRecord]]:
    """One trial as used by :func:`estimate_mu`: initial word, state at ``t_max``, events."""
    rng = rng_from_seed(rng_seed)
    xi = _initial_word(xi_spec, N, g, rng)
    init, eng = _start_engine(xi, g, incremental)
    events = []
    while True:
        ev = eng.step(rng, t_max)
        if ev is None:
            break
        events.append(ev)
    if math.isfinite(t_max):
        eng.time = t_max
    return xi, eng.state(init.N), events


def _run_trials(xi_spec, N, g, t, seeds, incremental) -> ObserverLaw:
    counts: dict = {}
    overflow = 0
    for seed in seeds:
        _, final, _ = run_trial(xi_spec, N, g, t, seed, incremental)
        cell = observer_pair(final)
        if cell is None:
            overflow += 1
        else:
            counts[cell] = counts.get(cell, 0) + 1
    return ObserverLaw(t, dict(sorted(counts.items())), overflow, len(seeds))


def estimate_mu(
    xi_spec: XiSpec,
    N: int,
    g: Grammar,
    t: float,
    trials: int,
    rng_seed: int = 0,
    workers: int = 1,
    incremental: bool = True,
) -> ObserverLaw:
    """Monte Carlo estimate of the observer-pair law at time ``t``.

    Trial ``k`` uses seed ``rng_seed + k``; with ``iid-uniform`` the
    initial window is drawn from that same generator before the dynamics.
    Results do not depend on ``workers``.
    """
    if trials < 1:
        raise AsyncError("trials must be >= 1")
    if N < 0:
        raise AsyncError("N must be >= 0")
    if not t >= 0:
        raise AsyncError("t must be >= 0")
    _require_rates(g)
    seeds = [rng_seed + k for k in range(trials)]
    if workers <= 1 or trials < 2 * workers:
        return _run_trials(xi_spec, N, g, t, seeds, incremental)
    chunk = math.ceil(trials / workers)
    parts = [seeds[k : k + chunk] for k in range(0, trials, chunk)]
    law = ObserverLaw(t)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_trials, xi_spec, N, g, t, part, incremental) for part in parts]
        for fut in futures:
            law = law.merged(fut.result())
    return law


def total_variation(p: dict, q: dict) -> float:
    cells = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(c, 0.0) - q.get(c, 0.0)) for c in cells)


def convergence_in_N(
    g: Grammar,
    xi_spec: XiSpec,
    t: float,
    trials: int,
    N_list: Sequence[int],
    rng_seed: int = 0,
    workers: int = 1,
) -> list[dict]:
    """Total-variation distance between the estimated laws at successive N.

    Every N reuses the same seed schedule.
    """
    if trials < 1:
        raise AsyncError("trials must be >= 1")
    N_list = list(N_list)
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise AsyncError("N_list must be strictly ascending")
    laws = [estimate_mu(xi_spec, n, g, t, trials, rng_seed, workers) for n in N_list]
    rows = []
    for (n0, l0), (n1, l1) in zip(zip(N_list, laws), zip(N_list[1:], laws[1:])):
        rows.append(
            {
                "N": n0,
                "N_next": n1,
                "tv": total_variation(l0.mu_hat(), l1.mu_hat()),
                "overflow_rate": l0.overflow_rate,
                "overflow_rate_next": l1.overflow_rate,
            }
        )
    return rows


__all__ = [
    "Residue",
    "WindowState",
    "EventRecord",
    "ObserverLaw",
    "AsyncError",
    "IID_UNIFORM",
    "init_window",
    "window_word",
    "scan_rates",
    "total_rate",
    "gillespie_step",
    "simulate",
    "simulate_states",
    "observer_pair",
    "admissible_jump",
    "estimate_mu",
    "run_trial",
    "convergence_in_N",
    "total_variation",
    "wilson_interval",
]
