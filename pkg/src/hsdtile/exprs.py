"""Parser and renderer for the integer-affine expression grammar.

Grammar (used in PRDG and schedule files): integer literals, identifiers,
``+``, ``-``, ``*`` and parentheses, where every product must have at least
one constant factor.  Constraints are two expressions joined by one of
``>= <= = == > <``; strict forms are normalized through the integer gap
(``a > b`` becomes ``a - b - 1 >= 0``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .affine import AffineMap, Constraint, ConstraintKind
from .errors import ExprError

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z_0-9]*)|([-+*()]))")

_REL = re.compile(r"(>=|<=|==|=|>|<)")


@dataclass
class _Linear:
    """const + sum coef[name] * name, over declared names only."""

    const: int
    coef: dict

    def scale(self, k: int) -> "_Linear":
        return _Linear(self.const * k, {n: c * k for n, c in self.coef.items()})

    def add(self, other: "_Linear", sign: int = 1) -> "_Linear":
        coef = dict(self.coef)
        for n, c in other.coef.items():
            coef[n] = coef.get(n, 0) + sign * c
        return _Linear(self.const + sign * other.const, coef)

    def is_const(self) -> bool:
        return not any(self.coef.values())


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise ExprError("unexpected character", text=text, pos=pos)
        if m.group(1) is not None:
            tokens.append(("int", int(m.group(1)), pos))
        elif m.group(2) is not None:
            tokens.append(("name", m.group(2), pos))
        else:
            tokens.append(("op", m.group(3), pos))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str, names: Sequence[str]):
        self.text = text
        self.names = set(names)
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.text))

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def parse(self) -> _Linear:
        value = self.expr()
        kind, _, pos = self.peek()
        if kind is not None:
            raise ExprError("trailing input", text=self.text, pos=pos)
        return value

    def expr(self) -> _Linear:
        kind, op, _ = self.peek()
        negate = False
        if kind == "op" and op in "+-":
            self.take()
            negate = op == "-"
        value = self.term()
        if negate:
            value = value.scale(-1)
        while True:
            kind, op, _ = self.peek()
            if kind == "op" and op in "+-":
                self.take()
                rhs = self.term()
                value = value.add(rhs, 1 if op == "+" else -1)
            else:
                return value

    def term(self) -> _Linear:
        value = self.factor()
        while True:
            kind, op, pos = self.peek()
            if kind == "op" and op == "*":
                self.take()
                rhs = self.factor()
                if value.is_const():
                    value = rhs.scale(value.const)
                elif rhs.is_const():
                    value = value.scale(rhs.const)
                else:
                    raise ExprError(
                        "product needs a constant factor to stay affine",
                        text=self.text, pos=pos,
                    )
            else:
                return value

    def factor(self) -> _Linear:
        kind, value, pos = self.take()
        if kind == "int":
            return _Linear(value, {})
        if kind == "name":
            if value not in self.names:
                raise ExprError(f"unknown identifier {value!r}", text=self.text, pos=pos)
            return _Linear(0, {value: 1})
        if kind == "op" and value == "(":
            inner = self.expr()
            kind, close, pos2 = self.take()
            if close != ")":
                raise ExprError("expected ')'", text=self.text, pos=pos2)
            return inner
        if kind == "op" and value == "-":
            return self.factor().scale(-1)
        raise ExprError("expected integer, identifier or '('", text=self.text, pos=pos)


def parse_expr(text: str, dims: Sequence[str], params: Sequence[str]):
    """Parse one affine expression; returns (dim coefs, param coefs, const)."""
    lin = _Parser(text, list(dims) + list(params)).parse()
    coef = tuple(lin.coef.get(d, 0) for d in dims)
    par = tuple(lin.coef.get(p, 0) for p in params)
    return coef, par, lin.const


def parse_constraint(text: str, dims: Sequence[str], params: Sequence[str]) -> Constraint:
    """Parse ``lhs REL rhs`` into a normalized >=/== row."""
    m = _REL.search(text)
    if not m:
        raise ExprError("constraint needs a relation operator", text=text, pos=0)
    lhs = parse_expr(text[: m.start()], dims, params)
    rhs = parse_expr(text[m.end():], dims, params)
    rel = m.group(1)
    # diff = lhs - rhs
    coef = tuple(a - b for a, b in zip(lhs[0], rhs[0]))
    par = tuple(a - b for a, b in zip(lhs[1], rhs[1]))
    const = lhs[2] - rhs[2]
    if rel in ("=", "=="):
        return Constraint(coef, par, const, ConstraintKind.EQ)
    if rel == ">=":
        return Constraint(coef, par, const, ConstraintKind.GE)
    if rel == "<=":
        return Constraint(tuple(-c for c in coef), tuple(-c for c in par), -const,
                          ConstraintKind.GE)
    if rel == ">":
        return Constraint(coef, par, const - 1, ConstraintKind.GE)
    # rel == "<"
    return Constraint(tuple(-c for c in coef), tuple(-c for c in par), -const - 1,
                      ConstraintKind.GE)


def parse_map(exprs: Sequence[str], dims: Sequence[str], params: Sequence[str]) -> AffineMap:
    """Parse a list of expressions (one per output dim) into an AffineMap."""
    rows = [parse_expr(e, dims, params) for e in exprs]
    return AffineMap.from_rows(rows, in_dim=len(dims), n_params=len(params))


def _render_linear(coef: Sequence[int], names: Sequence[str], const: int) -> str:
    parts = []
    for c, n in zip(coef, names):
        if c == 0:
            continue
        if c == 1:
            parts.append(("+", n))
        elif c == -1:
            parts.append(("-", n))
        elif c > 0:
            parts.append(("+", f"{c}*{n}"))
        else:
            parts.append(("-", f"{-c}*{n}"))
    if const != 0 or not parts:
        sign = "+" if const >= 0 else "-"
        parts.append((sign, str(abs(const))))
    first_sign, first = parts[0]
    out = first if first_sign == "+" else f"-{first}"
    for sign, chunk in parts[1:]:
        out += f" {sign} {chunk}"
    return out


def render_expr(coef: Sequence[int], par: Sequence[int], const: int,
                dims: Sequence[str], params: Sequence[str]) -> str:
    return _render_linear(tuple(coef) + tuple(par), tuple(dims) + tuple(params), const)


def render_constraint(row: Constraint, dims: Sequence[str], params: Sequence[str]) -> str:
    rel = "=" if row.kind is ConstraintKind.EQ else ">="
    lhs = render_expr(row.coef, row.param, row.const, dims, params)
    return f"{lhs} {rel} 0"


def render_map(m: AffineMap, dims: Sequence[str], params: Sequence[str]) -> list[str]:
    return [
        render_expr(m.linear[i], m.param[i], m.const[i], dims, params)
        for i in range(m.out_dim)
    ]
