"""Autonomous polynomial ODE systems and their induced monomial dynamics.

Text format
-----------
A system is written one equation per state variable::

    # Lotka-Volterra
    x' = -y - x*y
    y' = x + x*y

Equations are separated by newlines or ``;``.  ``#`` starts a comment
that runs to the end of the line.  Variables are declared implicitly by
their appearance order on left-hand sides; every identifier on a
right-hand side must be one of them.  A right-hand side is a polynomial
over the declared variables built from numeric literals, ``+``, ``-``,
``*``, powers (``^`` or ``**``, non-negative integer exponents) and
parentheses.  Division is allowed only by a constant subexpression
(``q^3/3`` is fine, ``1/x`` is not); function calls and any other
construct are rejected as unsupported rather than approximated.

The coefficient blocks follow the descending-lex monomial ordering of
:mod:`liemap.monomial`: block ``k`` has one column per degree-``k``
monomial, one row per state variable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import OdeParseError, UnsupportedExpressionError
from .monomial import (
    Poly,
    basis,
    monomial_count,
    poly_add,
    poly_mul,
    poly_pow,
    poly_scale,
    reduced_power,
)


@dataclass
class PolynomialODE:
    """Coefficient blocks of an autonomous polynomial right-hand side.

    ``coeffs[k]`` has shape ``(n, C(n+k-1, k))`` and multiplies the
    degree-``k`` reduced power of the state; ``coeffs[0]`` is the
    constant term as an ``(n, 1)`` column.
    """

    coeffs: list[np.ndarray]
    variable_names: list[str]

    def __post_init__(self):
        if not self.coeffs:
            raise ValueError("at least the degree-0 block is required")
        self.coeffs = [np.asarray(c, dtype=float) for c in self.coeffs]
        n = self.coeffs[0].shape[0]
        if len(self.variable_names) != n:
            raise ValueError(
                f"{len(self.variable_names)} variable names for dimension {n}"
            )
        for k, block in enumerate(self.coeffs):
            want = (n, monomial_count(n, k))
            if block.shape != want:
                raise ValueError(f"block {k} has shape {block.shape}, expected {want}")
            if not np.all(np.isfinite(block)):
                raise ValueError(f"non-finite coefficient in block {k}")

    @property
    def n(self) -> int:
        return self.coeffs[0].shape[0]

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def rhs(self, x) -> np.ndarray:
        """Evaluate the right-hand side at state ``x``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"state has shape {x.shape}, expected ({self.n},)")
        out = self.coeffs[0][:, 0].copy()
        for k in range(1, self.degree + 1):
            out += self.coeffs[k] @ reduced_power(x, k)
        return out

    def induced_block(self, i: int, j: int) -> np.ndarray:
        """Matrix routing degree-``j`` monomials into the time derivative
        of degree-``i`` monomials along solutions.

        Built by formal Leibniz differentiation: for a degree-``i``
        monomial ``x^alpha``, ``d/dt x^alpha = sum_m alpha_m x^(alpha-e_m)
        * rhs_m``, and each right-hand-side monomial lands in the degree
        ``i - 1 + k`` basis.  Pairs ``(i, j)`` outside the reachable
        range yield a zero block.
        """
        rows = monomial_count(self.n, i) if i > 0 else 1
        cols = monomial_count(self.n, j) if j > 0 else 1
        block = np.zeros((rows, cols))
        k = j - i + 1
        if i == 0 or k < 0 or k > self.degree:
            return block
        pk = self.coeffs[k]
        lookup = {b.exponents: c for c, b in enumerate(basis(self.n, j).entries)}
        for r, alpha in enumerate(basis(self.n, i).entries):
            for m, am in enumerate(alpha.exponents):
                if am == 0:
                    continue
                lowered = list(alpha.exponents)
                lowered[m] -= 1
                for c, beta in enumerate(basis(self.n, k).entries):
                    coef = pk[m, c]
                    if coef == 0.0:
                        continue
                    target = tuple(l + b for l, b in zip(lowered, beta.exponents))
                    block[r, lookup[target]] += am * coef
        return block


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<dstar>\*\*)
  | (?P<op>['=+\-*/^()])
  | (?P<sep>;)
  | (?P<ws>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<bad>.)
""",
    re.VERBOSE,
)


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    # strip comments but keep newlines so positions stay honest
    for match in _TOKEN_RE.finditer(re.sub(r"#[^\n]*", lambda m: " " * len(m.group()), text)):
        kind = match.lastgroup
        value = match.group()
        if kind == "ws":
            col += len(value)
            continue
        if kind == "newline":
            tokens.append(_Token("sep", value, line, col))
            line += 1
            col = 1
            continue
        if kind == "bad":
            raise OdeParseError(f"unexpected character {value!r}", line, col)
        if kind == "dstar":
            kind = "op"
            value = "^"
        tokens.append(_Token(kind if kind != "op" else value, value, line, col))
        col += len(match.group())
    return tokens


class _ExprParser:
    """Recursive-descent parser producing exponent-dict polynomials."""

    def __init__(self, tokens: list[_Token], variables: dict[str, int]):
        self.tokens = tokens
        self.pos = 0
        self.variables = variables
        self.n = len(variables)

    def _peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self) -> _Token | None:
        tok = self._peek()
        if tok is not None:
            self.pos += 1
        return tok

    def _fail(self, message, cls=OdeParseError):
        tok = self._peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else None
            raise cls(
                message + " (at end of equation)",
                last.line if last else None,
                last.column if last else None,
            )
        raise cls(message, tok.line, tok.column)

    def parse(self) -> Poly:
        poly = self._expr()
        if self._peek() is not None:
            self._fail(f"unexpected {self._peek().text!r}")
        return poly

    def _expr(self) -> Poly:
        poly = self._term()
        while (tok := self._peek()) is not None and tok.kind in "+-":
            self._next()
            rhs = self._term()
            if tok.kind == "-":
                rhs = poly_scale(rhs, -1.0)
            poly = poly_add(poly, rhs)
        return poly

    def _term(self) -> Poly:
        poly = self._unary()
        while (tok := self._peek()) is not None and tok.kind in "*/":
            self._next()
            rhs = self._unary()
            if tok.kind == "*":
                poly = poly_mul(poly, rhs)
            else:
                const = self._as_constant(rhs, tok)
                if const == 0.0:
                    raise OdeParseError("division by zero", tok.line, tok.column)
                poly = poly_scale(poly, 1.0 / const)
        return poly

    def _as_constant(self, poly: Poly, tok: _Token) -> float:
        nonconst = [e for e in poly if sum(e) > 0]
        if nonconst:
            raise UnsupportedExpressionError(
                "division by a variable expression is not polynomial",
                tok.line,
                tok.column,
            )
        return poly.get((0,) * self.n, 0.0)

    def _unary(self) -> Poly:
        sign = 1.0
        while (tok := self._peek()) is not None and tok.kind in "+-":
            self._next()
            if tok.kind == "-":
                sign = -sign
        poly = self._power()
        return poly_scale(poly, sign) if sign < 0 else poly

    def _power(self) -> Poly:
        base = self._atom()
        tok = self._peek()
        if tok is not None and tok.kind == "^":
            self._next()
            exp_tok = self._peek()
            if exp_tok is None or exp_tok.kind != "number":
                self._fail("exponent must be a non-negative integer literal",
                           UnsupportedExpressionError)
            self._next()
            value = float(exp_tok.text)
            if value != int(value) or value < 0:
                raise UnsupportedExpressionError(
                    f"exponent {exp_tok.text} is not a non-negative integer",
                    exp_tok.line,
                    exp_tok.column,
                )
            return poly_pow(base, int(value), self.n)
        return base

    def _atom(self) -> Poly:
        tok = self._peek()
        if tok is None:
            self._fail("expected a value")
        if tok.kind == "number":
            self._next()
            return {(0,) * self.n: float(tok.text)}
        if tok.kind == "ident":
            self._next()
            nxt = self._peek()
            if nxt is not None and nxt.kind == "(":
                raise UnsupportedExpressionError(
                    f"function call {tok.text!r}(...) is not polynomial",
                    tok.line,
                    tok.column,
                )
            if tok.text not in self.variables:
                raise OdeParseError(
                    f"unknown identifier {tok.text!r}", tok.line, tok.column
                )
            e = [0] * self.n
            e[self.variables[tok.text]] = 1
            return {tuple(e): 1.0}
        if tok.kind == "(":
            self._next()
            poly = self._expr()
            closing = self._peek()
            if closing is None or closing.kind != ")":
                self._fail("expected ')'")
            self._next()
            return poly
        self._fail(f"unexpected {tok.text!r}")


def parse_ode(text: str) -> PolynomialODE:
    """Parse an ODE specification string (format in the module docstring)."""
    tokens = _tokenize(text)

    statements: list[list[_Token]] = []
    current: list[_Token] = []
    for tok in tokens:
        if tok.kind == "sep":
            if current:
                statements.append(current)
                current = []
        else:
            current.append(tok)
    if current:
        statements.append(current)
    if not statements:
        raise OdeParseError("empty system: no equations found")

    # first pass: collect variables in LHS appearance order
    variables: dict[str, int] = {}
    bodies: list[list[_Token]] = []
    for stmt in statements:
        if len(stmt) < 4 or stmt[0].kind != "ident" or stmt[1].kind != "'" \
                or stmt[2].kind != "=":
            tok = stmt[0]
            raise OdeParseError(
                "each equation must look like \"x' = <polynomial>\"",
                tok.line,
                tok.column,
            )
        name = stmt[0].text
        if name in variables:
            raise OdeParseError(
                f"duplicate equation for {name!r}", stmt[0].line, stmt[0].column
            )
        variables[name] = len(variables)
        bodies.append(stmt[3:])

    n = len(variables)
    polys = [_ExprParser(body, variables).parse() for body in bodies]

    degree = max((sum(e) for poly in polys for e, v in poly.items() if v != 0.0),
                 default=0)
    coeffs = [np.zeros((n, monomial_count(n, k))) for k in range(degree + 1)]
    lookups = [
        {b.exponents: c for c, b in enumerate(basis(n, k).entries)}
        for k in range(degree + 1)
    ]
    for row, poly in enumerate(polys):
        for exponents, value in poly.items():
            if value == 0.0:
                continue
            k = sum(exponents)
            coeffs[k][row, lookups[k][exponents]] += value
    return PolynomialODE(coeffs=coeffs, variable_names=list(variables))


def format_ode(ode: PolynomialODE) -> str:
    """Render an ODE back to its text format.

    Coefficients print with full round-trip precision, so
    ``parse_ode(format_ode(ode))`` reproduces the blocks bitwise.
    """
    lines = []
    for row, name in enumerate(ode.variable_names):
        terms = []
        for k in range(ode.degree + 1):
            for col, entry in enumerate(basis(ode.n, k).entries):
                coef = ode.coeffs[k][row, col]
                if coef == 0.0:
                    continue
                factors = []
                for var, e in zip(ode.variable_names, entry.exponents):
                    if e == 1:
                        factors.append(var)
                    elif e > 1:
                        factors.append(f"{var}^{e}")
                magnitude = abs(coef)
                if not factors:
                    body = repr(magnitude)
                elif magnitude == 1.0:
                    body = "*".join(factors)
                else:
                    body = "*".join([repr(magnitude)] + factors)
                terms.append((coef < 0, body))
        if not terms:
            expr = "0"
        else:
            negative, body = terms[0]
            expr = ("-" if negative else "") + body
            for negative, body in terms[1:]:
                expr += (" - " if negative else " + ") + body
        lines.append(f"{name}' = {expr}")
    return "\n".join(lines) + "\n"
