"""Rate expressions in one variable ``x``.

Expressions are parsed with :mod:`ast` (``^`` is accepted as a synonym for
``**``) and checked against a whitelist.  Evaluation is available in exact
rational arithmetic, binary64, or mpmath; exact evaluation refuses operations
whose result is not rational (``exp``, ``sqrt``, non-integer powers).
"""
from __future__ import annotations

import ast
import math
from fractions import Fraction

from .errors import ParseError

FUNCTIONS = {
    "floor": 1,
    "ceil": 1,
    "pow": 2,
    "abs": 1,
    "min": None,
    "max": None,
    "exp": 1,
    "log": 1,
    "sqrt": 1,
    "piecewise": None,
}
TRANSCENDENTAL = {"exp", "log", "sqrt"}


class NotExact(ArithmeticError):
    """Raised when exact evaluation would need an irrational result."""


class _ExactOps:
    name = "exact"

    def const(self, q):
        return q

    def var(self, x):
        return Fraction(x)

    def floor(self, a):
        return Fraction(math.floor(a))

    def ceil(self, a):
        return Fraction(math.ceil(a))

    def pow(self, a, b):
        if b.denominator != 1:
            raise NotExact("non-integer exponent")
        return a ** int(b)

    def div(self, a, b):
        return a / b

    def exp(self, a):
        raise NotExact("exp")

    log = sqrt = exp


class _FloatOps:
    name = "binary64"

    def const(self, q):
        return q.numerator / q.denominator

    def var(self, x):
        return float(x)

    def floor(self, a):
        return float(math.floor(a)) if math.isfinite(a) else a

    def ceil(self, a):
        return float(math.ceil(a)) if math.isfinite(a) else a

    def pow(self, a, b):
        try:
            return float(a) ** b
        except OverflowError:
            return math.inf
        except ZeroDivisionError:
            return math.inf

    def div(self, a, b):
        if b == 0:
            return math.copysign(math.inf, a) if a else math.nan
        return a / b

    def exp(self, a):
        try:
            return math.exp(a)
        except OverflowError:
            return math.inf

    def log(self, a):
        return math.log(a)

    def sqrt(self, a):
        return math.sqrt(a)


class _MpOps:
    name = "mp"

    def __init__(self, ctx):
        self.ctx = ctx

    def const(self, q):
        return self.ctx.mpf(q.numerator) / q.denominator

    def var(self, x):
        return self.ctx.mpf(x)

    def floor(self, a):
        return self.ctx.floor(a)

    def ceil(self, a):
        return self.ctx.ceil(a)

    def pow(self, a, b):
        return self.ctx.power(a, b)

    def div(self, a, b):
        return a / b

    def exp(self, a):
        return self.ctx.exp(a)

    def log(self, a):
        return self.ctx.log(a)

    def sqrt(self, a):
        return self.ctx.sqrt(a)


EXACT_OPS = _ExactOps()
FLOAT_OPS = _FloatOps()


def ops_for(backend):
    if backend.mode == "exact":
        return EXACT_OPS
    if backend.mode == "mp":
        return _MpOps(backend.ctx)
    return FLOAT_OPS


class Expression:
    """A compiled rate expression ``f(x)``."""

    def __init__(self, source: str, line: int | None = None, column: int | None = None):
        self._line = line
        self._column = column or 1
        text = source.replace("^", "**")
        try:
            tree = ast.parse(text.strip(), mode="eval")
        except SyntaxError as exc:
            col = self._column + (exc.offset or 1) - 1
            raise ParseError(f"invalid expression: {exc.msg}", line, col) from None
        self._text = text.strip()
        self._tree = tree
        self.uses_transcendental = False
        self._fn = self._compile(tree.body)
        self.source = ast.unparse(tree)

    def __repr__(self):
        return f"Expression({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and other.source == self.source

    def __hash__(self):
        return hash(self.source)

    @property
    def exact_capable(self) -> bool:
        return not self.uses_transcendental

    def evaluate(self, x: int, ops=FLOAT_OPS):
        return self._fn(ops.var(x), ops)

    def exact(self, x: int) -> Fraction:
        return self._fn(Fraction(x), EXACT_OPS)

    # -- compilation ---------------------------------------------------------

    def _fail(self, node, message):
        col = self._column + getattr(node, "col_offset", 0)
        raise ParseError(message, self._line, col)

    def _compile(self, node):
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                self._fail(node, f"unsupported literal {node.value!r}")
            literal = ast.get_source_segment(self._text, node) or repr(node.value)
            q = Fraction(literal)
            return lambda x, ops: ops.const(q)
        if isinstance(node, ast.Name):
            if node.id != "x":
                self._fail(node, f"unknown variable {node.id!r}; only x is allowed")
            return lambda x, ops: x
        if isinstance(node, ast.UnaryOp):
            operand = self._compile(node.operand)
            if isinstance(node.op, ast.USub):
                return lambda x, ops: -operand(x, ops)
            if isinstance(node.op, ast.UAdd):
                return operand
            if isinstance(node.op, ast.Not):
                return lambda x, ops: not operand(x, ops)
            self._fail(node, "unsupported unary operator")
        if isinstance(node, ast.BinOp):
            left, right = self._compile(node.left), self._compile(node.right)
            op = node.op
            if isinstance(op, ast.Add):
                return lambda x, ops: left(x, ops) + right(x, ops)
            if isinstance(op, ast.Sub):
                return lambda x, ops: left(x, ops) - right(x, ops)
            if isinstance(op, ast.Mult):
                return lambda x, ops: left(x, ops) * right(x, ops)
            if isinstance(op, ast.Div):
                return lambda x, ops: ops.div(left(x, ops), right(x, ops))
            if isinstance(op, ast.Pow):
                return lambda x, ops: ops.pow(left(x, ops), right(x, ops))
            self._fail(node, "unsupported operator")
        if isinstance(node, ast.Compare):
            return self._compile_compare(node)
        if isinstance(node, ast.BoolOp):
            parts = [self._compile(v) for v in node.values]
            if isinstance(node.op, ast.And):
                return lambda x, ops: all(p(x, ops) for p in parts)
            return lambda x, ops: any(p(x, ops) for p in parts)
        if isinstance(node, ast.Call):
            return self._compile_call(node)
        self._fail(node, f"unsupported syntax {type(node).__name__}")

    def _compile_compare(self, node):
        table = {
            ast.Lt: lambda a, b: a < b,
            ast.LtE: lambda a, b: a <= b,
            ast.Gt: lambda a, b: a > b,
            ast.GtE: lambda a, b: a >= b,
            ast.Eq: lambda a, b: a == b,
            ast.NotEq: lambda a, b: a != b,
        }
        terms = [self._compile(node.left)] + [self._compile(c) for c in node.comparators]
        tests = []
        for op in node.ops:
            if type(op) not in table:
                self._fail(node, "unsupported comparison")
            tests.append(table[type(op)])

        def compare(x, ops):
            values = [t(x, ops) for t in terms]
            return all(test(values[i], values[i + 1]) for i, test in enumerate(tests))

        return compare

    def _compile_call(self, node):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            name = getattr(node.func, "id", "?")
            self._fail(node, f"unknown function {name!r}")
        if node.keywords:
            self._fail(node, "keyword arguments are not allowed")
        name = node.func.id
        arity = FUNCTIONS[name]
        args = [self._compile(a) for a in node.args]
        if arity is not None and len(args) != arity:
            self._fail(node, f"{name} takes {arity} argument(s)")
        if name in TRANSCENDENTAL:
            self.uses_transcendental = True
        if name == "piecewise":
            if len(args) < 3 or len(args) % 2 == 0:
                self._fail(node, "piecewise(cond1, value1, ..., default) needs an odd number >= 3 of arguments")
            pairs = list(zip(args[0:-1:2], args[1:-1:2]))
            default = args[-1]

            def piecewise(x, ops):
                for cond, value in pairs:
                    if cond(x, ops):
                        return value(x, ops)
                return default(x, ops)

            return piecewise
        if name in ("min", "max"):
            if not args:
                self._fail(node, f"{name} needs at least one argument")
            fold = min if name == "min" else max
            return lambda x, ops: fold(a(x, ops) for a in args)
        if name == "abs":
            (a,) = args
            return lambda x, ops: abs(a(x, ops))
        if name == "pow":
            a, b = args
            return lambda x, ops: ops.pow(a(x, ops), b(x, ops))
        (a,) = args
        method = name
        return lambda x, ops: getattr(ops, method)(a(x, ops))
