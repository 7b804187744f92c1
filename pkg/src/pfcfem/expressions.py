"""Initial-condition expressions: a small hand-written parser.

Grammar (precedence low to high: + -, * /, unary -, ^ right-associative):

    expr      := term (("+" | "-") term)*
    term      := factor (("*" | "/") factor)*
    factor    := "-" factor | power
    power     := atom ("^" factor)?
    atom      := number | "x" | "y" | "pi" | call | "(" expr ")"
    call      := name "(" [args] ")"
    piecewise := "piecewise" "(" "(" cond "," expr ")" {"," "(" cond "," expr ")"} "," expr ")"
    cond      := expr ("<" | ">") expr

Known functions: sin, cos, exp (one argument), hexcos (no arguments,
the six-beam cosine sum that seeds hexagonal patterns), and the piecewise
special form whose last argument is the otherwise branch.  Evaluation is
vectorized over numpy arrays; piecewise gives the first matching branch
priority.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import ExpressionError

_TOKEN = re.compile(r"""
    (?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?
              |\d+(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),<>])
  | (?P<ws>\s+)
""", re.VERBOSE)

_UNARY_FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}


def _hexcos(x, y):
    total = 0.0
    for j in range(6):
        total = total + np.cos(np.cos(j * np.pi / 3) * x
                               + np.sin(j * np.pi / 3) * y)
    return total


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ExpressionError("unexpected character %r" % src[pos], pos)
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class Expression:
    """A parsed initial-condition expression.

    Call with nodal coordinate arrays: `expr(x)` on intervals, or
    `expr(x, y)` on planar domains.  `variables` lists the coordinate
    names the expression actually reads, so a configuration on a 1D
    domain can reject expressions needing y before any mesh is built.
    """

    def __init__(self, source, fn, variables):
        self.source = source
        self._fn = fn
        self.variables = frozenset(variables)

    def __call__(self, x, y=None):
        if "y" in self.variables and y is None:
            raise ExpressionError(
                "expression %r needs coordinate y" % self.source, 0)
        env = {"x": np.asarray(x, dtype=float)}
        env["y"] = np.asarray(y, dtype=float) if y is not None else None
        return np.broadcast_to(np.asarray(self._fn(env), dtype=float),
                               np.shape(env["x"])).copy()

    def __repr__(self):
        return "Expression(%r)" % self.source


class _Parser:
    def __init__(self, src):
        self.src = src
        self.tokens = _tokenize(src)
        self.k = 0
        self.variables = set()

    def peek(self):
        return self.tokens[self.k]

    def take(self, text=None):
        kind, value, pos = self.tokens[self.k]
        if text is not None and value != text:
            raise ExpressionError(
                "expected %r, found %r" % (text, value or "end of input"), pos)
        self.k += 1
        return kind, value, pos

    def parse(self):
        fn = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ExpressionError("trailing input %r" % value, pos)
        return fn

    def expr(self):
        fn = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            fn = ((lambda a, b: lambda env: a(env) + b(env)) if op == "+"
                  else (lambda a, b: lambda env: a(env) - b(env)))(fn, rhs)
        return fn

    def term(self):
        fn = self.factor()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.factor()
            fn = ((lambda a, b: lambda env: a(env) * b(env)) if op == "*"
                  else (lambda a, b: lambda env: a(env) / b(env)))(fn, rhs)
        return fn

    def factor(self):
        if self.peek()[1] == "-":
            self.take()
            inner = self.factor()
            return lambda env: -inner(env)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            exponent = self.factor()
            return lambda env: base(env) ** exponent(env)
        return base

    def atom(self):
        kind, value, pos = self.peek()
        if kind == "number":
            self.take()
            const = float(value)
            return lambda env: const
        if kind == "name":
            return self.name_atom()
        if value == "(":
            self.take()
            fn = self.expr()
            self.take(")")
            return fn
        raise ExpressionError(
            "expected a value, found %r" % (value or "end of input"), pos)

    def name_atom(self):
        kind, value, pos = self.take()
        if value in ("x", "y"):
            self.variables.add(value)
            return (lambda env: env["x"]) if value == "x" else \
                   (lambda env: env["y"])
        if value == "pi":
            return lambda env: np.pi
        if value in _UNARY_FUNCTIONS:
            func = _UNARY_FUNCTIONS[value]
            self.take("(")
            arg = self.expr()
            self.take(")")
            return lambda env: func(arg(env))
        if value == "hexcos":
            self.take("(")
            self.take(")")
            self.variables.update(("x", "y"))
            return lambda env: _hexcos(env["x"], env["y"])
        if value == "piecewise":
            return self.piecewise(pos)
        raise ExpressionError("unknown identifier %r" % value, pos)

    def piecewise(self, pos):
        self.take("(")
        branches = []
        otherwise = None
        while True:
            if self.peek()[1] == "(" and self.is_branch():
                self.take("(")
                cond = self.condition()
                self.take(",")
                val = self.expr()
                self.take(")")
                branches.append((cond, val))
            else:
                otherwise = self.expr()
            if self.peek()[1] == ",":
                self.take()
                if otherwise is not None:
                    raise ExpressionError(
                        "piecewise otherwise branch must come last",
                        self.peek()[2])
                continue
            break
        self.take(")")
        if otherwise is None:
            raise ExpressionError(
                "piecewise needs a final otherwise expression", pos)
        if not branches:
            return otherwise

        def fn(env):
            value = np.asarray(otherwise(env), dtype=float)
            shape = np.shape(env["x"])
            value = np.broadcast_to(value, shape).copy()
            # first matching branch wins: fold from the last one backwards
            for cond, val in reversed(branches):
                value = np.where(cond(env), val(env), value)
            return value

        return fn

    def is_branch(self):
        """Lookahead: does the parenthesis open a (condition, value) pair?

        A branch contains a comparison before the comma at depth 1; a bare
        parenthesized expression (usable as the otherwise value) does not.
        """
        depth = 0
        for kind, value, _ in self.tokens[self.k:]:
            if value == "(":
                depth += 1
            elif value == ")":
                depth -= 1
                if depth == 0:
                    return False
            elif depth == 1 and value in ("<", ">"):
                return True
            elif kind == "end":
                break
        return False

    def condition(self):
        lhs = self.expr()
        kind, value, pos = self.take()
        if value not in ("<", ">"):
            raise ExpressionError(
                "expected a comparison, found %r"
                % (value or "end of input"), pos)
        rhs = self.expr()
        if value == "<":
            return lambda env: lhs(env) < rhs(env)
        return lambda env: lhs(env) > rhs(env)


def parse_expression(src):
    """Parse the source into an Expression; raises ExpressionError with
    the offending position on malformed input."""
    if not isinstance(src, str):
        raise ExpressionError("expression must be a string", 0)
    if not src.strip():
        raise ExpressionError("empty expression", 0)
    parser = _Parser(src)
    fn = parser.parse()
    return Expression(src, fn, parser.variables)
