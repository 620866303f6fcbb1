"""Closed-form expressions in the ambient coordinates x1..x5 with exact
forward propagation of derivatives up to third order.

Grammar (whitespace insignificant, numbers decimal with optional exponent):

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' integer)?
    base   := number | 'x1'..'x5' | '(' expr ')' | ('exp'|'sin'|'cos') '(' expr ')'

Evaluation is vectorized over batches of points, shape (n, 5).  ``jets``
returns (value, gradient, hessian, third) as ambient-coordinate tensors; the
third slot is None unless order 3 is requested.  These are raw coordinate
derivatives of the ambient extension; intrinsic quantities are assembled in
``kfield``.
"""

from __future__ import annotations

import re
from typing import Optional

import numpy as np

from .errors import ParseError, PositivityError
from . import geometry

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)

_FUNCS = ("exp", "sin", "cos")
_VARS = {f"x{i + 1}": i for i in range(5)}


class _Token:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind, text, pos):
        self.kind = kind
        self.text = text
        self.pos = pos


def _lex(source: str):
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            # skip leading whitespace manually to report the right offset
            stripped = source[pos:].lstrip()
            at = n - len(stripped)
            if not stripped:
                break
            raise ParseError(f"unexpected character {stripped[0]!r}", at)
        if m.group("num") is not None:
            tokens.append(_Token("num", m.group("num"), m.start("num")))
        elif m.group("name") is not None:
            tokens.append(_Token("name", m.group("name"), m.start("name")))
        else:
            tokens.append(_Token("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(_Token("end", "", n))
    return tokens


# ---------------------------------------------------------------------------
# jet algebra: tuples (v, g, H, T); g is (n,5), H is (n,5,5), T is (n,5,5,5)


def _sym3(g, H):
    # g_i H_jk + g_j H_ik + g_k H_ij
    return (
        g[:, :, None, None] * H[:, None, :, :]
        + g[:, None, :, None] * H[:, :, None, :]
        + g[:, None, None, :] * H[:, :, :, None]
    )


def _jet_const(c, n, order):
    v = np.full(n, float(c))
    g = np.zeros((n, 5))
    H = np.zeros((n, 5, 5))
    T = np.zeros((n, 5, 5, 5)) if order >= 3 else None
    return v, g, H, T


def _jet_add(a, b, sign=1.0):
    v = a[0] + sign * b[0]
    g = a[1] + sign * b[1]
    H = a[2] + sign * b[2]
    T = None if a[3] is None else a[3] + sign * b[3]
    return v, g, H, T


def _jet_mul(a, b):
    av, ag, aH, aT = a
    bv, bg, bH, bT = b
    v = av * bv
    g = av[:, None] * bg + bv[:, None] * ag
    H = (
        av[:, None, None] * bH
        + bv[:, None, None] * aH
        + ag[:, :, None] * bg[:, None, :]
        + bg[:, :, None] * ag[:, None, :]
    )
    if aT is None:
        T = None
    else:
        T = (
            av[:, None, None, None] * bT
            + bv[:, None, None, None] * aT
            + _sym3(ag, bH)
            + _sym3(bg, aH)
        )
    return v, g, H, T


def _jet_chain(f0, f1, f2, f3, inner):
    """Jets of f(u) from scalar derivatives of f at u and the jets of u."""
    v, g, H, T = inner
    val = f0
    grad = f1[:, None] * g
    hess = f2[:, None, None] * (g[:, :, None] * g[:, None, :]) + f1[:, None, None] * H
    if T is None:
        third = None
    else:
        ggg = g[:, :, None, None] * g[:, None, :, None] * g[:, None, None, :]
        third = (
            f3[:, None, None, None] * ggg
            + f2[:, None, None, None] * _sym3(g, H)
            + f1[:, None, None, None] * T
        )
    return val, grad, hess, third


def _jet_recip(a):
    v = a[0]
    return _jet_chain(1.0 / v, -1.0 / v**2, 2.0 / v**3, -6.0 / v**4, a)


# ---------------------------------------------------------------------------
# expression nodes


class Node:
    def jets(self, X, order):
        raise NotImplementedError


class Const(Node):
    def __init__(self, value):
        self.value = float(value)

    def jets(self, X, order):
        return _jet_const(self.value, X.shape[0], order)


class Var(Node):
    def __init__(self, index):
        self.index = index

    def jets(self, X, order):
        n = X.shape[0]
        v = X[:, self.index].astype(float)
        g = np.zeros((n, 5))
        g[:, self.index] = 1.0
        H = np.zeros((n, 5, 5))
        T = np.zeros((n, 5, 5, 5)) if order >= 3 else None
        return v, g, H, T


class Binary(Node):
    def __init__(self, op, left, right):
        self.op = op
        self.left = left
        self.right = right

    def jets(self, X, order):
        a = self.left.jets(X, order)
        b = self.right.jets(X, order)
        if self.op == "+":
            return _jet_add(a, b)
        if self.op == "-":
            return _jet_add(a, b, sign=-1.0)
        if self.op == "*":
            return _jet_mul(a, b)
        return _jet_mul(a, _jet_recip(b))


class Pow(Node):
    def __init__(self, base, exponent: int):
        self.base = base
        self.exponent = exponent

    def jets(self, X, order):
        n = abs(self.exponent)
        if n == 0:
            return _jet_const(1.0, X.shape[0], order)
        b = self.base.jets(X, order)
        # binary powering on jets
        acc = None
        sq = b
        k = n
        while k:
            if k & 1:
                acc = sq if acc is None else _jet_mul(acc, sq)
            k >>= 1
            if k:
                sq = _jet_mul(sq, sq)
        if self.exponent < 0:
            acc = _jet_recip(acc)
        return acc


class Call(Node):
    def __init__(self, func, arg):
        self.func = func
        self.arg = arg

    def jets(self, X, order):
        a = self.arg.jets(X, order)
        u = a[0]
        if self.func == "exp":
            e = np.exp(u)
            return _jet_chain(e, e, e, e, a)
        if self.func == "sin":
            s, c = np.sin(u), np.cos(u)
            return _jet_chain(s, c, -s, -c, a)
        s, c = np.sin(u), np.cos(u)
        return _jet_chain(c, -s, -c, s, a)


# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, symbol):
        tok = self.peek()
        if tok.kind != "op" or tok.text != symbol:
            raise ParseError(f"expected {symbol!r}", tok.pos)
        return self.advance()

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected token {tok.text!r}", tok.pos)
        return node

    def expr(self):
        node = self.term()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "+-":
                self.advance()
                node = Binary(tok.text, node, self.term())
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "*/":
                self.advance()
                node = Binary(tok.text, node, self.factor())
            else:
                return node

    def factor(self):
        node = self.base()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.advance()
            sign = 1
            tok = self.peek()
            if tok.kind == "op" and tok.text == "-":
                sign = -1
                self.advance()
            tok = self.peek()
            if tok.kind != "num" or not tok.text.isdigit():
                raise ParseError("exponent must be an integer", tok.pos)
            self.advance()
            node = Pow(node, sign * int(tok.text))
        return node

    def base(self):
        tok = self.peek()
        if tok.kind == "num":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "name":
            self.advance()
            if tok.text in _VARS:
                return Var(_VARS[tok.text])
            if tok.text in _FUNCS:
                self.expect_op("(")
                inner = self.expr()
                self.expect_op(")")
                return Call(tok.text, inner)
            raise ParseError(f"unknown identifier {tok.text!r}", tok.pos)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            inner = self.expr()
            self.expect_op(")")
            return inner
        raise ParseError(f"unexpected token {tok.text!r}", tok.pos)


class KExpression:
    """Parsed candidate curvature with exact derivative jets.

    Use ``value`` for plain evaluation and ``jets`` for derivatives; both
    accept a single 5-vector or an (n, 5) batch.
    """

    def __init__(self, root: Node, source: str, name: str = "K"):
        self.root = root
        self.source = source
        self.name = name

    def _batch(self, X):
        A = np.asarray(X, dtype=float)
        if A.ndim == 1:
            return A[None, :], True
        return A, False

    def value(self, X):
        A, single = self._batch(X)
        v = self.root.jets(A, 1)[0]
        return float(v[0]) if single else v

    __call__ = value

    def jets(self, X, order: int = 2):
        """(value, grad, hess, third) ambient-coordinate jets.

        ``third`` is None unless order >= 3.  For a single input point the
        batch axis is squeezed away.
        """
        A, single = self._batch(X)
        v, g, H, T = self.root.jets(A, order)
        if single:
            return (
                float(v[0]),
                g[0],
                H[0],
                None if T is None else T[0],
            )
        return v, g, H, T

    def __repr__(self):
        return f"KExpression({self.name}: {self.source!r})"


_POSITIVITY_SAMPLES = 10_000


def parse_k(source: str, name: str = "K", check_positivity: bool = True) -> KExpression:
    """Parse ``source`` and, by default, sample-check positivity.

    The positivity check evaluates the expression on a deterministic
    quasi-uniform grid of 10^4 hemisphere points plus the poles of the chart
    axes; any non-finite or non-positive value raises PositivityError.
    """
    tree = _Parser(_lex(source)).parse()
    k = KExpression(tree, source, name)
    if check_positivity:
        pts = geometry.hemisphere_grid(_POSITIVITY_SAMPLES)
        vals = k.value(pts)
        if not np.all(np.isfinite(vals)):
            raise PositivityError(f"{name} is non-finite on the hemisphere sample")
        worst = float(np.min(vals))
        if worst <= 0.0:
            idx = int(np.argmin(vals))
            raise PositivityError(
                f"{name} must be positive; sampled {worst:.6g} near "
                f"{np.array2string(pts[idx], precision=4)}"
            )
    return k
