"""Batch command line front end.

Every output stream starts with a manifest line recording the resolved
configuration, the seed, the tool version and a digest of the grammar
file, so two runs with equal manifests can be compared byte for byte.
JSON outputs are one object per line; CSV outputs put the manifest on a
leading ``#`` comment line.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .async_process import (
    IID_UNIFORM,
    AsyncError,
    convergence_in_N,
    estimate_mu,
    observer_pair,
    run_trial,
    wilson_interval,
)
from .config_space import BasisCapError, enumerate_basis, hamming_distance, tree_distance
from .derivation import DerivationError, enumerate_language, extract_pairing, sample_paths
from .grammar import EPS_TOKEN, Grammar, GrammarError, classify, is_context_free, parse_grammar
from .quantum import (
    HamiltonianSpec,
    LocalObservable,
    QuantumError,
    basis_vector,
    build_hamiltonian,
    convergence_scan,
    evolve,
    expectation,
    gibbs_state,
    grammar_basis,
)

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# stable formatting


def fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dumps(obj) -> str:
    """Compact JSON with 17-significant-digit reals and insertion-ordered keys."""
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return fmt_float(x) if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return _dump_str(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{_dump_str(str(k))}:{dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dump_str(s: str) -> str:
    return json.dumps(s, ensure_ascii=False)


def csv_cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return fmt_float(float(x))
    return str(x)


def word_text(word: Sequence[str], g: Optional[Grammar] = None) -> str:
    if not word:
        return EPS_TOKEN
    symbols = g.alphabet if g is not None else word
    sep = "" if all(len(s) == 1 for s in symbols) else " "
    return sep.join(word)


def parse_cli_word(text: str) -> tuple[str, ...]:
    """``eps`` is the empty word; spaces separate symbols, otherwise one symbol per character."""
    text = text.strip()
    if text == EPS_TOKEN or text == "":
        return ()
    if any(c.isspace() for c in text):
        return tuple(text.split())
    return tuple(text)


def complex_arg(text: str) -> complex:
    re_s, _, im_s = text.partition(",")
    try:
        return complex(float(re_s), float(im_s) if im_s else 0.0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected re,im but got {text!r}") from None


def int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


# ---------------------------------------------------------------------------
# argument parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gramflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gramflow {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", metavar="PATH", help="write results to PATH instead of stdout")
        return p

    p = add("classify", "descendance and Chomsky degree of a grammar")
    p.add_argument("--grammar", required=True)
    p.add_argument("--left-linear", action="store_true", help="also accept left-linear rules as regular")

    p = add("dist", "tree and Hamming distance between two words")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)

    p = add("basis", "enumerate the words of length <= N")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--alphabet", help="comma separated symbols, in order")
    src.add_argument("--grammar")
    p.add_argument("--N", type=int, required=True)

    p = add("sample", "sample computational paths")
    p.add_argument("--grammar", required=True)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=10_000)
    p.add_argument("--policy", choices=["uniform-redex", "leftmost"], default="uniform-redex")

    p = add("enumerate", "bounded language enumeration with word probabilities")
    p.add_argument("--grammar", required=True)
    p.add_argument("--max-len", type=int, required=True)
    p.add_argument("--policy", choices=["leftmost", "uniform-redex"], default="leftmost")
    p.add_argument("--all-forms", action="store_true", help="include sentential forms")
    p.add_argument("--no-probabilities", action="store_true")

    p = add("async-sim", "asynchronous windowed rewriting and observer statistics")
    p.add_argument("--grammar", required=True)
    xi = p.add_mutually_exclusive_group(required=True)
    xi.add_argument("--xi", help="initial window (odd length), periodic if shorter than 2N+1")
    xi.add_argument("--xi-random", action="store_true", help="i.i.d. uniform initial window")
    p.add_argument("--N", type=int)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--emit", choices=["mu", "events", "tv"], default="mu")
    p.add_argument("--N-list", type=int_list)
    p.add_argument("--workers", type=int, default=1)

    p = add("quantum", "truncated Hamiltonian, Gibbs states, evolution and N scans")
    p.add_argument("--grammar", required=True)
    p.add_argument("--lambda-default", type=complex_arg, default=complex(1.0, 0.0))
    p.add_argument("--c", type=float, default=0.0)
    p.add_argument("--correction", choices=["length", "identity"], default="length")
    n = p.add_mutually_exclusive_group(required=True)
    n.add_argument("--N", type=int)
    n.add_argument("--N-list", type=int_list)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--initial", help="basis word for the initial ray of --emit evolve (default: axiom)")
    p.add_argument("--observable", help="word:<w> or diag-file:<path>")
    p.add_argument("--emit", choices=["spectrum", "gibbs", "evolve", "scan"], default="spectrum")
    return parser


# ---------------------------------------------------------------------------
# subcommands


class Run:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.lines: list[str] = []
        self.digest: Optional[str] = None
        self.grammar: Optional[Grammar] = None

    def load_grammar(self, path: str) -> Grammar:
        try:
            with open(path, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            raise GrammarError(f"cannot read grammar file {path!r}: {exc.strerror}") from None
        self.digest = "sha256:" + hashlib.sha256(raw).hexdigest()
        try:
            self.grammar = parse_grammar(raw.decode("utf-8"))
        except UnicodeDecodeError:
            raise GrammarError(f"grammar file {path!r} is not UTF-8") from None
        except GrammarError as exc:
            raise GrammarError(f"{path}: {exc}") from None
        return self.grammar

    def manifest(self) -> dict:
        config = {k: v for k, v in sorted(vars(self.args).items()) if k not in ("command", "out")}
        for k, v in config.items():
            if isinstance(v, complex):
                config[k] = [v.real, v.imag]
        return {
            "subcommand": self.args.command,
            "config": config,
            "seed": getattr(self.args, "seed", 0),
            "version": __version__,
            "grammar_digest": self.digest,
        }

    def json_line(self, obj) -> None:
        self.lines.append(dumps(obj))

    def csv_row(self, cells) -> None:
        self.lines.append(",".join(csv_cell(c) for c in cells))


def cmd_classify(run: Run) -> None:
    g = run.load_grammar(run.args.grammar)
    report = classify(g, left_linear=run.args.left_linear)
    run.json_line({"manifest": run.manifest()})
    run.json_line(report.as_dict())


def cmd_dist(run: Run) -> None:
    a, b = parse_cli_word(run.args.a), parse_cli_word(run.args.b)
    hamming = hamming_distance(a, b) if len(a) == len(b) else None
    run.json_line({"manifest": run.manifest()})
    run.json_line({"tree": tree_distance(a, b), "hamming": hamming})


def cmd_basis(run: Run) -> None:
    if run.args.grammar:
        g = run.load_grammar(run.args.grammar)
        alphabet = g.alphabet
    else:
        g = None
        alphabet = tuple(s.strip() for s in run.args.alphabet.split(",") if s.strip())
    basis = enumerate_basis(alphabet, run.args.N)
    run.json_line({"manifest": run.manifest()})
    run.json_line(
        {
            "alphabet": list(basis.alphabet),
            "N": basis.max_len,
            "dim": basis.dim,
            "words": [word_text(w, g) if g else (" ".join(w) if w else EPS_TOKEN) for w in basis.words],
        }
    )


def cmd_sample(run: Run) -> None:
    a = run.args
    g = run.load_grammar(a.grammar)
    if a.trials < 1:
        raise UsageError("--trials must be >= 1")
    cf = is_context_free(g)
    run.json_line({"manifest": run.manifest()})
    for k, path in enumerate(sample_paths(g, a.trials, a.max_steps, a.policy, a.seed)):
        final = path.final_word
        row = {
            "seed": a.seed + k,
            "steps": len(path.steps),
            "halted": path.halted,
            "final_word": word_text(final, g),
            "length": len(final),
            "log_prob": path.log_probability,
        }
        if path.halted and cf and g.is_terminal_word(final):
            row["dot_bracket"] = extract_pairing(path).dot_bracket
        run.json_line(row)


def cmd_enumerate(run: Run) -> None:
    a = run.args
    g = run.load_grammar(a.grammar)
    lang = enumerate_language(
        g,
        a.max_len,
        terminal_only=not a.all_forms,
        policy=a.policy,
        with_probabilities=not a.no_probabilities,
    )
    run.lines.append("# " + dumps({"manifest": run.manifest()}))
    run.csv_row(["word", "probability", "length"])
    for word, p in lang.items():
        run.csv_row([word_text(word, g), p, len(word)])


def _xi_spec(a, g):
    if a.xi_random:
        if a.N is None and not (a.emit == "tv" and a.N_list):
            raise UsageError("--xi-random needs --N")
        return IID_UNIFORM, a.N
    xi = parse_cli_word(a.xi)
    if not xi:
        raise AsyncError("initial configuration must not be empty")
    if a.N is None:
        if len(xi) % 2 == 0:
            raise AsyncError(f"initial configuration must have odd length 2N+1, got {len(xi)}")
        return xi, len(xi) // 2
    return xi, a.N


def cmd_async(run: Run) -> None:
    a = run.args
    g = run.load_grammar(a.grammar)
    if a.trials < 1:
        raise AsyncError("trials must be >= 1")
    spec, N = _xi_spec(a, g)
    if a.emit == "tv":
        if not a.N_list:
            raise UsageError("--emit tv needs --N-list")
        rows = convergence_in_N(g, spec, a.t, a.trials, a.N_list, a.seed, a.workers)
        run.lines.append("# " + dumps({"manifest": run.manifest()}))
        run.csv_row(["N", "N_next", "tv", "overflow_rate", "overflow_rate_next"])
        for r in rows:
            run.csv_row([r["N"], r["N_next"], r["tv"], r["overflow_rate"], r["overflow_rate_next"]])
        return
    if a.emit == "events":
        run.json_line({"manifest": run.manifest()})
        for k in range(a.trials):
            xi, final, events = run_trial(spec, N, g, a.t, a.seed + k)
            for ev in events:
                run.json_line(
                    {
                        "trial": k,
                        "time": ev.time,
                        "position": ev.position,
                        "production": str(g.productions[ev.production]),
                        "removed": ev.removed,
                        "inserted": ev.inserted,
                    }
                )
            pair = observer_pair(final)
            run.json_line(
                {
                    "trial": k,
                    "seed": a.seed + k,
                    "initial_word": word_text(xi, g),
                    "final_word": word_text(final.word, g),
                    "events": len(events),
                    "observer_pair": list(pair) if pair else None,
                }
            )
        return
    law = estimate_mu(spec, N, g, a.t, a.trials, a.seed, a.workers)
    run.lines.append("# " + dumps({"manifest": run.manifest()}))
    run.csv_row(["i", "j", "count", "mu_hat", "ci_low", "ci_high"])
    mu, ci = law.mu_hat(), law.intervals()
    for (i, j), count in law.counts.items():
        lo, hi = ci[(i, j)]
        run.csv_row([i, j, count, mu[(i, j)], lo, hi])
    lo, hi = wilson_interval(law.overflow_count, law.trials)
    run.csv_row(["overflow", "", law.overflow_count, law.overflow_rate, lo, hi])


def _observable(a, g, N_min: int) -> Optional[LocalObservable]:
    if not a.observable:
        return None
    kind, _, value = a.observable.partition(":")
    base = grammar_basis(g, N_min)
    if kind == "word":
        word = parse_cli_word(value) if " " in value or value == EPS_TOKEN else _split_symbols(value, g)
        try:
            return LocalObservable.word(base, word)
        except KeyError as exc:
            raise QuantumError(str(exc.args[0])) from None
    if kind == "diag-file":
        values = {}
        try:
            with open(value, encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        except OSError as exc:
            raise QuantumError(f"cannot read observable file {value!r}: {exc.strerror}") from None
        for lineno, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].split()
            if not line:
                continue
            if len(line) < 2:
                raise QuantumError(f"{value}: line {lineno}: expected '<word> <value>'")
            word = () if line[:-1] == [EPS_TOKEN] else tuple(line[:-1])
            try:
                values[word] = float(line[-1])
            except ValueError:
                raise QuantumError(f"{value}: line {lineno}: bad number {line[-1]!r}") from None
        try:
            return LocalObservable.diagonal(base, values)
        except KeyError as exc:
            raise QuantumError(str(exc.args[0])) from None
    raise UsageError(f"--observable must be word:<w> or diag-file:<path>, got {a.observable!r}")


def _split_symbols(text: str, g: Grammar) -> tuple[str, ...]:
    """Greedy longest-match split of a word written without separators."""
    symbols = sorted(g.alphabet, key=len, reverse=True)
    out, k = [], 0
    while k < len(text):
        for s in symbols:
            if text.startswith(s, k):
                out.append(s)
                k += len(s)
                break
        else:
            raise QuantumError(f"cannot split {text!r} into grammar symbols")
    return tuple(out)


def _complex_pairs(a: np.ndarray):
    if a.ndim == 1:
        return [[float(z.real), float(z.imag)] for z in a]
    return [_complex_pairs(row) for row in a]


def cmd_quantum(run: Run) -> None:
    a = run.args
    g = run.load_grammar(a.grammar)
    spec_N = a.N if a.N is not None else a.N_list[0]
    spec = HamiltonianSpec(g, spec_N, lambda_default=a.lambda_default, c=a.c, correction=a.correction)
    if a.emit == "scan":
        if not a.N_list:
            raise UsageError("--emit scan needs --N-list")
        X = _observable(a, g, min(a.N_list))
        if X is None:
            raise UsageError("--emit scan needs --observable")
        rows = convergence_scan(spec, a.tau, X, a.N_list)
        run.lines.append("# " + dumps({"manifest": run.manifest()}))
        run.csv_row(["N", "dim", "value", "delta"])
        for r in rows:
            run.csv_row([r["N"], r["dim"], r["value"], r["delta"]])
        return
    if a.N is None:
        raise UsageError(f"--emit {a.emit} needs --N")
    H = build_hamiltonian(spec)
    basis = H.basis
    words = [word_text(w, g) for w in basis.words]
    X = _observable(a, g, a.N)
    Xop = X.embed(basis) if X is not None else None
    run.json_line({"manifest": run.manifest()})
    if a.emit == "spectrum":
        run.json_line({"N": a.N, "dim": basis.dim, "eigenvalues": [float(x) for x in H.spectrum]})
    elif a.emit == "gibbs":
        rho = gibbs_state(H, a.tau)
        row = {"N": a.N, "dim": basis.dim, "tau": a.tau, "basis": words, "rho": _complex_pairs(rho.matrix)}
        if Xop is not None:
            row["expectation"] = expectation(rho, Xop)
        run.json_line(row)
    else:
        start = _split_symbols(a.initial, g) if a.initial else (g.axiom,)
        if a.initial == EPS_TOKEN:
            start = ()
        try:
            psi0 = basis_vector(basis, start)
        except KeyError as exc:
            raise QuantumError(str(exc.args[0])) from None
        psi = evolve(psi0, H, a.t)
        row = {
            "N": a.N,
            "dim": basis.dim,
            "t": a.t,
            "basis": words,
            "psi": _complex_pairs(psi),
            "norm": float(np.linalg.norm(psi)),
        }
        if Xop is not None:
            row["expectation"] = float(np.real(np.vdot(psi, Xop.matrix @ psi)))
        run.json_line(row)


COMMANDS = {
    "classify": cmd_classify,
    "dist": cmd_dist,
    "basis": cmd_basis,
    "sample": cmd_sample,
    "enumerate": cmd_enumerate,
    "async-sim": cmd_async,
    "quantum": cmd_quantum,
}


def run(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    job = Run(args)
    try:
        COMMANDS[args.command](job)
    except UsageError as exc:
        print(f"gramflow {args.command}: usage error: {exc}", file=stderr)
        return EXIT_USAGE
    except (GrammarError, DerivationError, AsyncError, QuantumError, BasisCapError, ValueError) as exc:
        print(f"gramflow {args.command}: error: {exc}", file=stderr)
        return EXIT_INVALID
    text = "\n".join(job.lines) + "\n"
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"gramflow {args.command}: error: cannot write {args.out!r}: {exc.strerror}", file=stderr)
            return EXIT_INVALID
    else:
        stdout.write(text)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
