"""SPARQL subset: SELECT over one subject with bbox/attribute FILTERs.

Supported shape::

    SELECT (* | ?var...) WHERE {
        ?s :lat ?lat ; :lon ?lon ; :type ?type .
        FILTER(?lat >= -10 && ?lat <= 10 && ?lon >= 20 && ?lon <= 40 && ?type = "cargo")
    } LIMIT 5

Region bounds may appear bare (one box) or as a parenthesized disjunction
of boxes. Anything recognizably outside the subset raises
UnsupportedFeature; malformed text raises QuerySyntaxError with the byte
offset. Parsing never silently drops a construct.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from surface_sync.geo import GeoBounds, GeoPoint
from surface_sync.timeutil import format_rfc3339, parse_rfc3339

from .ast import (
    ALL,
    Predicate,
    QueryAST,
    QuerySyntaxError,
    UnsupportedFeature,
    canonicalize,
)

# Recognized SPARQL keywords outside the subset; reported by name instead of
# producing a confusing syntax error.
_UNSUPPORTED_KEYWORDS = {
    "OPTIONAL", "UNION", "PREFIX", "BASE", "DESCRIBE", "CONSTRUCT", "ASK",
    "INSERT", "DELETE", "SERVICE", "GRAPH", "BIND", "VALUES", "MINUS",
    "HAVING", "OFFSET", "DISTINCT", "REDUCED", "FROM", "EXISTS",
}
_UNSUPPORTED_PAIRS = {"GROUP": "GROUP BY", "ORDER": "ORDER BY"}


@dataclass(frozen=True, slots=True)
class SparqlVocab:
    """Property local names binding variables to record fields."""

    lat: str = "lat"
    lon: str = "lon"
    ts: str = "ts"


DEFAULT_VOCAB = SparqlVocab()

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<num>-?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<var>\?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<pname>:[A-Za-z_][A-Za-z0-9_]*)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>&&|\|\||>=|<=|!=|=|<|>)
  | (?P<punct>[{}().;,*])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True, slots=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise QuerySyntaxError(f"unexpected character {text[i]!r}", i)
        kind = m.lastgroup or ""
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), i))
        i = m.end()
    toks.append(_Tok("eof", "", len(text)))
    return toks


class _Parser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.i = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def bump(self) -> _Tok:
        t = self.cur
        self.i += 1
        return t

    def expect(self, kind: str, text: str | None = None) -> _Tok:
        t = self.cur
        if t.kind != kind or (text is not None and t.text != text):
            raise QuerySyntaxError(
                f"unexpected {t.text!r}", t.pos, expected=text or kind
            )
        return self.bump()

    def expect_word(self, word: str) -> _Tok:
        t = self.cur
        if t.kind != "word" or t.text.upper() != word:
            raise QuerySyntaxError(f"unexpected {t.text!r}", t.pos, expected=word)
        return self.bump()

    def at_word(self, word: str) -> bool:
        return self.cur.kind == "word" and self.cur.text.upper() == word


def _check_unsupported(toks: list[_Tok]) -> None:
    for idx, t in enumerate(toks):
        if t.kind != "word":
            continue
        word = t.text.upper()
        if word in _UNSUPPORTED_PAIRS:
            nxt = toks[idx + 1] if idx + 1 < len(toks) else None
            if nxt and nxt.kind == "word" and nxt.text.upper() == "BY":
                raise UnsupportedFeature(_UNSUPPORTED_PAIRS[word])
        if word in _UNSUPPORTED_KEYWORDS:
            raise UnsupportedFeature(word)


def _unquote(tok: _Tok) -> str:
    try:
        return json.loads(tok.text)
    except json.JSONDecodeError:
        raise QuerySyntaxError("bad string literal", tok.pos) from None


def _number(tok: _Tok) -> int | float:
    text = tok.text
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    return float(text)


# -- filter expression trees -------------------------------------------------

_CMP = ("cmp",)  # node layouts: ("and"|"or", parts) / ("cmp", var, op, value, pos)


def _parse_or(p: _Parser):
    parts = [_parse_and(p)]
    while p.cur.kind == "op" and p.cur.text == "||":
        p.bump()
        parts.append(_parse_and(p))
    return parts[0] if len(parts) == 1 else ("or", parts)


def _parse_and(p: _Parser):
    parts = [_parse_primary(p)]
    while p.cur.kind == "op" and p.cur.text == "&&":
        p.bump()
        parts.append(_parse_primary(p))
    return parts[0] if len(parts) == 1 else ("and", parts)


def _parse_primary(p: _Parser):
    t = p.cur
    if t.kind == "punct" and t.text == "(":
        p.bump()
        node = _parse_or(p)
        p.expect("punct", ")")
        return node
    if t.kind == "word" and t.text.upper() == "CONTAINS":
        p.bump()
        p.expect("punct", "(")
        var = p.expect("var")
        p.expect("punct", ",")
        lit = p.expect("string")
        p.expect("punct", ")")
        return ("cmp", var.text[1:], "CONTAINS", _unquote(lit), var.pos)
    if t.kind == "var":
        var = p.bump()
        op_tok = p.cur
        if op_tok.kind != "op" or op_tok.text not in ("=", "!=", "<", "<=", ">", ">="):
            raise QuerySyntaxError(
                f"unexpected {op_tok.text!r}", op_tok.pos, expected="comparison operator"
            )
        p.bump()
        lit = p.cur
        if lit.kind == "num":
            value: int | float | str = _number(p.bump())
        elif lit.kind == "string":
            value = _unquote(p.bump())
        else:
            raise QuerySyntaxError(
                f"unexpected {lit.text!r}", lit.pos, expected="literal"
            )
        return ("cmp", var.text[1:], op_tok.text, value, var.pos)
    raise QuerySyntaxError(f"unexpected {t.text!r}", t.pos, expected="filter term")


def _flatten_and(node) -> list:
    if isinstance(node, tuple) and node[0] == "and":
        out: list = []
        for part in node[1]:
            out.extend(_flatten_and(part))
        return out
    return [node]


# -- group pattern -----------------------------------------------------------


def _parse_group(p: _Parser) -> tuple[dict[str, str], list]:
    """Parse triples + FILTERs; returns (var -> property local name, filters)."""
    bindings: dict[str, str] = {}
    subject: str | None = None
    filters: list = []
    while not (p.cur.kind == "punct" and p.cur.text == "}"):
        if p.cur.kind == "eof":
            raise QuerySyntaxError("unterminated group pattern", p.cur.pos, expected="}")
        if p.at_word("FILTER"):
            p.bump()
            p.expect("punct", "(")
            filters.append(_parse_or(p))
            p.expect("punct", ")")
            if p.cur.kind == "punct" and p.cur.text == ".":
                p.bump()
            continue
        subj = p.expect("var")
        if subject is None:
            subject = subj.text
        elif subj.text != subject:
            raise UnsupportedFeature("multiple subjects")
        while True:
            prop = p.expect("pname")
            obj = p.expect("var")
            name = prop.text[1:]
            var = obj.text[1:]
            if name in bindings.values() and bindings.get(var) != name:
                existing = next(v for v, n in bindings.items() if n == name)
                if existing != var:
                    raise QuerySyntaxError(
                        f"property :{name} bound to two variables", prop.pos
                    )
            if var in bindings and bindings[var] != name:
                raise QuerySyntaxError(f"variable ?{var} bound twice", obj.pos)
            bindings[var] = name
            if p.cur.kind == "punct" and p.cur.text == ";":
                p.bump()
                continue
            break
        if p.cur.kind == "punct" and p.cur.text == ".":
            p.bump()
    return bindings, filters


# -- classification ----------------------------------------------------------


def _bounds_from_box(terms: list, latv: set[str], lonv: set[str]) -> GeoBounds:
    lo: dict[str, float] = {}
    hi: dict[str, float] = {}
    for term in terms:
        if not (isinstance(term, tuple) and term[0] == "cmp"):
            raise UnsupportedFeature("disjunction outside region selection")
        _, var, op, value, pos = term
        axis = "lat" if var in latv else "lon" if var in lonv else None
        if axis is None:
            raise UnsupportedFeature("non-spatial term inside region disjunction")
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise QuerySyntaxError("numeric literal expected", pos)
        if op == ">=":
            side = lo
        elif op == "<=":
            side = hi
        else:
            raise UnsupportedFeature(f"{op} on {axis} (region bounds use >= and <=)")
        if axis in side:
            raise QuerySyntaxError(f"duplicate {axis} bound", pos)
        side[axis] = float(value)
    missing = [f"{which} {ax}" for which, d in (("lower", lo), ("upper", hi)) for ax in ("lat", "lon") if ax not in d]
    if missing:
        raise QuerySyntaxError(f"incomplete region bounds: missing {', '.join(missing)}", 0)
    try:
        return GeoBounds(GeoPoint(hi["lat"], lo["lon"]), GeoPoint(lo["lat"], hi["lon"]))
    except ValueError as e:
        raise QuerySyntaxError(f"bad region bounds: {e}", 0) from None


def _classify(
    filters: list, bindings: dict[str, str], vocab: SparqlVocab
) -> tuple[list[GeoBounds], list[Predicate], tuple | None]:
    latv = {v for v, n in bindings.items() if n == vocab.lat}
    lonv = {v for v, n in bindings.items() if n == vocab.lon}
    tsv = {v for v, n in bindings.items() if n == vocab.ts}
    terms: list = []
    for f in filters:
        terms.extend(_flatten_and(f))

    regions: list[GeoBounds] = []
    preds: list[Predicate] = []
    bare_box: list = []
    region_groups = 0
    ts_lo = ts_hi = None
    for term in terms:
        if isinstance(term, tuple) and term[0] == "or":
            region_groups += 1
            for branch in term[1]:
                regions.append(_bounds_from_box(_flatten_and(branch), latv, lonv))
            continue
        if not (isinstance(term, tuple) and term[0] == "cmp"):  # pragma: no cover
            raise UnsupportedFeature("unsupported filter construct")
        _, var, op, value, pos = term
        if var not in bindings:
            raise QuerySyntaxError(f"unbound variable ?{var}", pos)
        if var in latv or var in lonv:
            bare_box.append(term)
        elif var in tsv:
            if op not in (">=", "<="):
                raise UnsupportedFeature(f"{op} on the timestamp (use >= / <=)")
            if not isinstance(value, str):
                raise QuerySyntaxError("timestamp literal expected", pos)
            try:
                stamp = parse_rfc3339(value)
            except ValueError as e:
                raise QuerySyntaxError(str(e), pos) from None
            if op == ">=":
                if ts_lo is not None:
                    raise QuerySyntaxError("duplicate lower time bound", pos)
                ts_lo = stamp
            else:
                if ts_hi is not None:
                    raise QuerySyntaxError("duplicate upper time bound", pos)
                ts_hi = stamp
        else:
            preds.append(Predicate(bindings[var], op, value))
    if bare_box:
        region_groups += 1
        regions.insert(0, _bounds_from_box(bare_box, latv, lonv))
    if region_groups > 1:
        raise UnsupportedFeature("multiple region groups")
    window = (ts_lo, ts_hi) if (ts_lo is not None or ts_hi is not None) else None
    return regions, preds, window


def parse_sparql(text: str, vocab: SparqlVocab = DEFAULT_VOCAB) -> QueryAST:
    """Parse the SPARQL subset into a canonical QueryAST."""
    if not isinstance(text, str) or not text.strip():
        raise QuerySyntaxError("empty query", 0, expected="SELECT")
    toks = _tokenize(text)
    _check_unsupported(toks)
    p = _Parser(toks)
    p.expect_word("SELECT")
    projection: tuple[str, ...]
    if p.cur.kind == "punct" and p.cur.text == "*":
        p.bump()
        projection = ALL
    else:
        names: list[str] = []
        while p.cur.kind == "var":
            names.append(p.bump().text[1:])
        if not names:
            raise QuerySyntaxError(
                f"unexpected {p.cur.text!r}", p.cur.pos, expected="* or ?var"
            )
        projection = tuple(names)
    p.expect_word("WHERE")
    p.expect("punct", "{")
    bindings, filters = _parse_group(p)
    p.expect("punct", "}")
    limit = None
    if p.at_word("LIMIT"):
        p.bump()
        tok = p.expect("num")
        value = _number(tok)
        if not isinstance(value, int):
            raise QuerySyntaxError("integer limit expected", tok.pos)
        limit = value
    if p.cur.kind != "eof":
        raise QuerySyntaxError(f"trailing {p.cur.text!r}", p.cur.pos, expected="end of query")

    regions, preds, window = _classify(filters, bindings, vocab)
    if projection != ALL:
        for name in projection:
            if name not in bindings:
                raise QuerySyntaxError(f"projected variable ?{name} is not bound", 0)
        projection = tuple(bindings[name] for name in projection)
    if not regions and not preds:
        raise QuerySyntaxError(
            "query selects nothing: no region bounds and no predicates "
            "(no lat/lon bindings used)",
            len(text),
        )
    return canonicalize(
        QueryAST(
            regions=tuple(regions),
            predicates=tuple(preds),
            projection=projection,
            limit=limit,
            time_window=window,
        )
    )


# -- emission ----------------------------------------------------------------


def _lit(value: int | float | str) -> str:
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    return repr(value)


def _fnum(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(value)


def _box_text(r: GeoBounds, vocab: SparqlVocab) -> str:
    return (
        f"?{vocab.lat} >= {_fnum(r.south_east.lat)} && ?{vocab.lat} <= {_fnum(r.north_west.lat)}"
        f" && ?{vocab.lon} >= {_fnum(r.north_west.lon)} && ?{vocab.lon} <= {_fnum(r.south_east.lon)}"
    )


def emit_sparql(ast: QueryAST, vocab: SparqlVocab = DEFAULT_VOCAB) -> str:
    """Deterministic canonical text; parse_sparql(emit_sparql(a)) == canonicalize(a)."""
    a = canonicalize(ast)
    bound: list[str] = []
    if a.regions:
        bound += [vocab.lat, vocab.lon]
    if a.time_window is not None:
        bound.append(vocab.ts)
    others = {p.attr for p in a.predicates}
    if a.projection != ALL:
        others.update(a.projection)
    others -= set(bound)
    bound += sorted(others)

    if a.projection == ALL:
        proj = "*"
    else:
        proj = " ".join(f"?{name}" for name in a.projection)

    parts: list[str] = []
    if len(a.regions) == 1:
        parts.append(_box_text(a.regions[0], vocab))
    elif a.regions:
        parts.append("(" + " || ".join(f"({_box_text(r, vocab)})" for r in a.regions) + ")")
    if a.time_window is not None:
        start, end = a.time_window
        if start is not None:
            parts.append(f'?{vocab.ts} >= "{format_rfc3339(start)}"')
        if end is not None:
            parts.append(f'?{vocab.ts} <= "{format_rfc3339(end)}"')
    for p in a.predicates:
        if p.op == "CONTAINS":
            parts.append(f"CONTAINS(?{p.attr}, {_lit(p.value)})")
        else:
            parts.append(f"?{p.attr} {p.op} {_lit(p.value)}")

    subject = "s"
    n = 0
    while subject in bound:  # an attribute may be literally named "s"
        subject = f"s{n}"
        n += 1
    triples = " ; ".join(f":{name} ?{name}" for name in bound)
    body = f"?{subject} {triples} ." if triples else ""
    if parts:
        body = (body + " " if body else "") + f"FILTER({' && '.join(parts)})"
    text = f"SELECT {proj} WHERE {{ {body} }}"
    if a.limit is not None:
        text += f" LIMIT {a.limit}"
    return text
