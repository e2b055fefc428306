"""Query translator: one AST, three dialects (SPARQL, SQL, VISUAL-JSON).

SQL is emit-only; translate() refuses it as an input dialect.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ast import (
    ALL,
    OPS,
    Predicate,
    QueryAST,
    QuerySyntaxError,
    UnsupportedDialect,
    UnsupportedFeature,
    canonicalize,
    validate,
)
from .sparql import DEFAULT_VOCAB, SparqlVocab, emit_sparql, parse_sparql
from .sql import emit_sql
from .visual import emit_visual, parse_visual

SPARQL = "SPARQL"
SQL = "SQL"
VISUAL_JSON = "VISUAL-JSON"
DIALECTS = (SPARQL, SQL, VISUAL_JSON)


@dataclass(frozen=True, slots=True)
class QueryText:
    """Query text tagged with its dialect."""

    dialect: str
    text: str

    def __post_init__(self) -> None:
        if self.dialect not in DIALECTS:
            raise UnsupportedDialect(f"unknown dialect {self.dialect!r}")
        if not self.text:
            raise ValueError("query text must be non-empty")


def parse_query(q: QueryText, vocab: SparqlVocab = DEFAULT_VOCAB) -> QueryAST:
    """Parse any input dialect to the AST; SQL is emit-only."""
    if q.dialect == SPARQL:
        return parse_sparql(q.text, vocab)
    if q.dialect == VISUAL_JSON:
        return parse_visual(q.text)
    raise UnsupportedDialect(f"{q.dialect} cannot be parsed (emit-only)")


def emit_query(ast: QueryAST, dialect: str, vocab: SparqlVocab = DEFAULT_VOCAB) -> QueryText:
    """Emit the AST in the requested dialect (canonical text)."""
    if dialect == SPARQL:
        return QueryText(SPARQL, emit_sparql(ast, vocab))
    if dialect == SQL:
        return QueryText(SQL, emit_sql(ast))
    if dialect == VISUAL_JSON:
        return QueryText(VISUAL_JSON, emit_visual(ast))
    raise UnsupportedDialect(f"unknown dialect {dialect!r}")


def translate(q: QueryText, target: str, vocab: SparqlVocab = DEFAULT_VOCAB) -> QueryText:
    """Parse in the input dialect, emit in the target; AST-preserving."""
    return emit_query(parse_query(q, vocab), target, vocab)


__all__ = [
    "ALL",
    "OPS",
    "DIALECTS",
    "SPARQL",
    "SQL",
    "VISUAL_JSON",
    "Predicate",
    "QueryAST",
    "QuerySyntaxError",
    "QueryText",
    "SparqlVocab",
    "UnsupportedDialect",
    "UnsupportedFeature",
    "canonicalize",
    "emit_query",
    "emit_sparql",
    "emit_sql",
    "emit_visual",
    "parse_query",
    "parse_sparql",
    "parse_visual",
    "translate",
    "validate",
]
