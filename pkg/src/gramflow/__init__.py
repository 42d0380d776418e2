"""Grammar-driven sequential, asynchronous and quantum processes on words."""

__version__ = "0.1.0"

from .grammar import (  # noqa: F401
    Grammar,
    GrammarError,
    Production,
    chomsky_degree,
    classify,
    descendance_degree,
    domain_of,
    load_fixture,
    load_grammar,
    parse_grammar,
    range_of,
    serialize_grammar,
    validate_weights,
)
from .config_space import enumerate_basis, hamming_distance, tree_distance  # noqa: F401
