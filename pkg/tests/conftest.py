import textwrap

import pytest

from gramflow.grammar import load_fixture, parse_grammar


def grammar(text: str):
    return parse_grammar(textwrap.dedent(text))


@pytest.fixture(scope="session")
def rna():
    return load_fixture("rna")


@pytest.fixture(scope="session")
def geometric():
    return grammar(
        """
        terminals: a
        nonterminals: S
        axiom: S
        rule S -> a S @ p=0.3
        rule S -> a   @ p=0.7
        """
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
