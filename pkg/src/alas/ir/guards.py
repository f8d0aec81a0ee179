"""Boolean guard expressions on branch edges.

Grammar: comparisons between a field and a literal joined with and/or/not
(``&&``, ``||``, ``!`` also accepted). A bare field name means
``field == true``. Guards print back in one canonical spelling.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Union


class GuardError(ValueError):
    pass


@dataclass(frozen=True)
class Cmp:
    field: str
    op: str
    value: Union[bool, int, float, str]


@dataclass(frozen=True)
class Not:
    item: "Expr"


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


Expr = Union[Cmp, Not, And, Or]

OPS = ("==", "!=", "<", "<=", ">", ">=")
_ALIASES = {"=": "==", "≠": "!=", "≤": "<=", "≥": ">="}
_FLIP = {"==": "==", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}

_TOKEN = re.compile(r"""
    \s*(?:
      (?P<num>-?\d+\.\d+|-?\d+)
    | (?P<str>"(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*')
    | (?P<op><=|>=|==|!=|&&|\|\||[<>=!≤≥≠])
    | (?P<paren>[()])
    | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
    )""", re.VERBOSE)


def _tokens(text: str) -> list[tuple[str, object]]:
    out = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise GuardError(f"unexpected character at {pos} in {text!r}")
        pos = m.end()
        kind = m.lastgroup
        raw = m.group(kind)
        if kind == "num":
            out.append(("lit", float(raw) if "." in raw else int(raw)))
        elif kind == "str":
            out.append(("lit", json.loads(raw) if raw[0] == '"' else re.sub(r"\\(.)", r"\1", raw[1:-1])))
        elif kind == "ident":
            low = raw.lower()
            if low in ("true", "false"):
                out.append(("lit", low == "true"))
            elif low in ("and", "or", "not"):
                out.append(("kw", low))
            else:
                out.append(("ident", raw))
        elif kind == "op":
            if raw == "&&":
                out.append(("kw", "and"))
            elif raw == "||":
                out.append(("kw", "or"))
            elif raw == "!":
                out.append(("kw", "not"))
            else:
                out.append(("op", _ALIASES.get(raw, raw)))
        else:
            out.append(("paren", raw))
    return out


class _Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, kind, value=None):
        tok = self.take()
        if tok[0] != kind or (value is not None and tok[1] != value):
            raise GuardError(f"expected {value or kind}, found {tok[1]!r}")
        return tok

    def expr(self):
        items = [self.conj()]
        while self.peek() == ("kw", "or"):
            self.take()
            items.append(self.conj())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def conj(self):
        items = [self.neg()]
        while self.peek() == ("kw", "and"):
            self.take()
            items.append(self.neg())
        return items[0] if len(items) == 1 else And(tuple(items))

    def neg(self):
        if self.peek() == ("kw", "not"):
            self.take()
            return Not(self.neg())
        return self.atom()

    def atom(self):
        kind, value = self.peek()
        if kind == "paren" and value == "(":
            self.take()
            inner = self.expr()
            self.expect("paren", ")")
            return inner
        if kind not in ("ident", "lit"):
            raise GuardError(f"expected a comparison, found {value!r}")
        self.take()
        if self.peek()[0] != "op":
            if kind == "ident":
                return Cmp(value, "==", True)
            raise GuardError(f"literal {value!r} is not a condition")
        _, op = self.take()
        rkind, rvalue = self.take()
        if rkind not in ("ident", "lit"):
            raise GuardError(f"expected an operand after {op}")
        if kind == "ident" and rkind == "lit":
            return Cmp(value, op, rvalue)
        if kind == "lit" and rkind == "ident":
            return Cmp(rvalue, _FLIP[op], value)
        raise GuardError("a comparison needs exactly one field and one literal")


def parse_guard(text: str) -> Expr:
    toks = _tokens(text)
    if not toks:
        raise GuardError("empty guard")
    p = _Parser(toks)
    tree = p.expr()
    if p.i != len(toks):
        raise GuardError(f"trailing input after position {p.i}")
    return normalize(tree)


def normalize(tree: Expr) -> Expr:
    """Fold negated equality into ``!=``/``==``; everything else is kept."""
    if isinstance(tree, Not):
        inner = normalize(tree.item)
        if isinstance(inner, Cmp) and inner.op in ("==", "!="):
            return Cmp(inner.field, "!=" if inner.op == "==" else "==", inner.value)
        return Not(inner)
    if isinstance(tree, And):
        return And(tuple(normalize(x) for x in tree.items))
    if isinstance(tree, Or):
        return Or(tuple(normalize(x) for x in tree.items))
    return tree


def _literal(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return json.dumps(v)
    return repr(v)


def to_text(tree: Expr) -> str:
    if isinstance(tree, Cmp):
        return f"{tree.field} {tree.op} {_literal(tree.value)}"
    if isinstance(tree, Not):
        inner = to_text(tree.item)
        return f"not ({inner})"
    sep = " and " if isinstance(tree, And) else " or "
    parts = [f"({to_text(x)})" if isinstance(x, (And, Or)) else to_text(x) for x in tree.items]
    return sep.join(parts)


def canonical(text: str) -> str:
    return to_text(parse_guard(text))


def fields_of(tree: Expr) -> list[str]:
    if isinstance(tree, Cmp):
        return [tree.field]
    if isinstance(tree, Not):
        return fields_of(tree.item)
    return [f for x in tree.items for f in fields_of(x)]


_NUMERIC = {"number", "integer", "int", "float", "double"}
_STRING = {"string", "str"}
_BOOLEAN = {"boolean", "bool"}


def type_class(semantic: str) -> str | None:
    base = semantic.rstrip("?").strip().lower()
    if base in _NUMERIC:
        return "number"
    if base in _STRING:
        return "string"
    if base in _BOOLEAN:
        return "boolean"
    return None


def _value_class(v) -> str:
    if isinstance(v, bool):
        return "boolean"
    if isinstance(v, (int, float)):
        return "number"
    return "string"


def type_errors(tree: Expr, fields: dict[str, str]) -> list[str]:
    """Problems making ``tree`` ill-typed against the visible fields."""
    problems = []
    for cmp in _comparisons(tree):
        if cmp.field not in fields:
            problems.append(f"unknown field {cmp.field!r}")
            continue
        cls = type_class(fields[cmp.field])
        if cls is None:
            problems.append(f"field {cmp.field!r} has non-scalar type {fields[cmp.field]!r}")
        elif cls != _value_class(cmp.value):
            problems.append(f"{cmp.field!r} is {cls} but compared with {_literal(cmp.value)}")
        elif cls == "boolean" and cmp.op not in ("==", "!="):
            problems.append(f"ordering comparison on boolean {cmp.field!r}")
    return problems


def _comparisons(tree: Expr) -> list[Cmp]:
    if isinstance(tree, Cmp):
        return [tree]
    if isinstance(tree, Not):
        return _comparisons(tree.item)
    return [c for x in tree.items for c in _comparisons(x)]


# ASL choice rules

_ASL_OPS = {"==": "Equals", "<": "LessThan", "<=": "LessThanEquals", ">": "GreaterThan", ">=": "GreaterThanEquals"}
_ASL_FAMILY = {"number": "Numeric", "string": "String", "boolean": "Boolean"}


def to_asl(tree: Expr) -> dict:
    if isinstance(tree, Cmp):
        family = _ASL_FAMILY[_value_class(tree.value)]
        if tree.op == "!=":
            return {"Not": to_asl(Cmp(tree.field, "==", tree.value))}
        if family == "Boolean" and tree.op != "==":
            raise GuardError("booleans support only equality")
        return {"Variable": "$." + tree.field, family + _ASL_OPS[tree.op]: tree.value}
    if isinstance(tree, Not):
        return {"Not": to_asl(tree.item)}
    key = "And" if isinstance(tree, And) else "Or"
    return {key: [to_asl(x) for x in tree.items]}


_ASL_REVERSE = {fam + name: op for fam in _ASL_FAMILY.values() for op, name in _ASL_OPS.items()}


def from_asl(rule: dict) -> Expr:
    if "Not" in rule:
        return normalize(Not(from_asl(rule["Not"])))
    if "And" in rule:
        return And(tuple(from_asl(r) for r in rule["And"]))
    if "Or" in rule:
        return Or(tuple(from_asl(r) for r in rule["Or"]))
    var = rule.get("Variable", "")
    if not var.startswith("$."):
        raise GuardError(f"unsupported choice variable {var!r}")
    for key, value in rule.items():
        if key in _ASL_REVERSE:
            return Cmp(var[2:], _ASL_REVERSE[key], value)
    raise GuardError(f"unsupported choice rule {sorted(rule)}")


# Argo when-clauses

def to_argo(tree: Expr, source: str) -> str:
    def ref(f):
        return "{{tasks.%s.outputs.parameters.%s}}" % (source, f)

    def emit(t):
        if isinstance(t, Cmp):
            if isinstance(t.value, str):
                return f"'{ref(t.field)}' {t.op} {_argo_str(t.value)}"
            return f"{ref(t.field)} {t.op} {_literal(t.value)}"
        if isinstance(t, Not):
            return f"!({emit(t.item)})"
        sep = " && " if isinstance(t, And) else " || "
        return sep.join(f"({emit(x)})" if isinstance(x, (And, Or)) else emit(x) for x in t.items)

    return emit(tree)


def _argo_str(s: str) -> str:
    return "'" + s.replace("\\", "\\\\").replace("'", "\\'") + "'"


_ARGO_REF = re.compile(r"""(['"]?)\{\{tasks\.[^.}]+\.outputs\.parameters\.([A-Za-z_][A-Za-z0-9_.]*)\}\}\1""")


def from_argo(text: str) -> Expr:
    return parse_guard(_ARGO_REF.sub(lambda m: m.group(2), text))
