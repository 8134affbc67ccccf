"""Symbolic alpha expressions: tree type, text form and vectorised evaluation.

Canonical text uses prefix calls, e.g. ``gp_mul(roc_30, roc_5)`` or
``ts_argmin(CumLgReturn_40d, 10)``.  Windowed primitives print their window
as a trailing integer argument; when parsing, a missing window falls back to
``default_window``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

from ..errors import EmptyColumnError, ExprReferenceError, ParseError

PROTECTED_EPS = 1e-12
DEFAULT_WINDOW = 10


@dataclass(frozen=True)
class Primitive:
    name: str
    arity: int
    windowed: bool = False
    prefixed: bool = False  # printed as gp_<name>

    @property
    def label(self) -> str:
        return f"gp_{self.name}" if self.prefixed else self.name


PRIMITIVES: dict[str, Primitive] = {
    p.name: p
    for p in [
        Primitive("add", 2, prefixed=True),
        Primitive("sub", 2, prefixed=True),
        Primitive("mul", 2, prefixed=True),
        Primitive("div", 2, prefixed=True),
        Primitive("max", 2, prefixed=True),
        Primitive("min", 2, prefixed=True),
        Primitive("sqrt", 1, prefixed=True),
        Primitive("abs", 1, prefixed=True),
        Primitive("sin", 1, prefixed=True),
        Primitive("cos", 1, prefixed=True),
        Primitive("tan", 1, prefixed=True),
        Primitive("rank", 1),
        Primitive("scale", 1),
        Primitive("delta", 1, windowed=True),
        Primitive("ts_sum", 1, windowed=True),
        Primitive("ts_min", 1, windowed=True),
        Primitive("ts_max", 1, windowed=True),
        Primitive("ts_argmin", 1, windowed=True),
        Primitive("ts_argmax", 1, windowed=True),
    ]
}


@dataclass(frozen=True)
class Node:
    """A primitive call (``children`` non-empty) or a terminal column name."""

    value: str
    children: tuple["Node", ...] = ()
    window: int | None = None

    @property
    def is_terminal(self) -> bool:
        return not self.children

    @property
    def primitive(self) -> Primitive | None:
        return None if self.is_terminal else PRIMITIVES[self.value]

    def depth(self) -> int:
        """Edges on the longest root-to-leaf path; a bare terminal has depth 0."""
        if self.is_terminal:
            return 0
        return 1 + max(c.depth() for c in self.children)

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)

    def leaves(self) -> list[str]:
        if self.is_terminal:
            return [self.value]
        return [leaf for c in self.children for leaf in c.leaves()]

    def __str__(self) -> str:
        return format_expr(self)


def terminal(name: str) -> Node:
    return Node(name)


def call(op: str, *args: Node, window: int | None = None) -> Node:
    prim = PRIMITIVES[op.removeprefix("gp_")]
    if len(args) != prim.arity:
        raise ValueError(f"{prim.label} takes {prim.arity} argument(s), got {len(args)}")
    if prim.windowed and window is None:
        raise ValueError(f"{prim.label} needs a window")
    return Node(prim.name, tuple(args), window if prim.windowed else None)


# text form -----------------------------------------------------------------------


def format_expr(node: Node) -> str:
    if node.is_terminal:
        return node.value
    prim = node.primitive
    args = [format_expr(c) for c in node.children]
    if prim.windowed:
        args.append(str(node.window))
    return f"{prim.label}({', '.join(args)})"


_TOKEN = re.compile(r"\s*(?:(?P<num>\d+)(?![A-Za-z_])|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[(),]))")


class _Parser:
    def __init__(self, text: str, default_window: int):
        self.text = text
        self.pos = 0
        self.default_window = default_window

    def _peek(self):
        m = _TOKEN.match(self.text, self.pos)
        if not m:
            return None, None, self.pos
        kind = m.lastgroup
        return kind, m.group(kind), m.start(kind)

    def _next(self):
        m = _TOKEN.match(self.text, self.pos)
        if not m:
            if self.text[self.pos :].strip():
                start = self.pos + len(self.text[self.pos :]) - len(self.text[self.pos :].lstrip())
                raise ParseError(f"unexpected character {self.text[start]!r}", start)
            raise ParseError("unexpected end of expression (unmatched parenthesis?)", len(self.text))
        self.pos = m.end()
        kind = m.lastgroup
        return kind, m.group(kind), m.start(kind)

    def parse(self) -> Node:
        node = self._expr()
        rest = self.text[self.pos :]
        if rest.strip():
            raise ParseError("trailing input", self.pos + len(rest) - len(rest.lstrip()))
        return node

    def _expr(self) -> Node:
        kind, tok, start = self._next()
        if kind != "name":
            raise ParseError(f"expected a name, found {tok!r}", start)
        k2, t2, _ = self._peek()
        if not (k2 == "punct" and t2 == "("):
            return Node(tok)
        prim = PRIMITIVES.get(tok.removeprefix("gp_"))
        if prim is None:
            raise ParseError(f"unknown primitive {tok!r}", start)
        open_pos = self._next()[2]
        args: list[Node] = []
        window: int | None = None
        while True:
            k, t, s = self._peek()
            if k == "num":
                if not prim.windowed or window is not None or len(args) != prim.arity:
                    raise ParseError(f"unexpected integer {t!r}", s)
                self._next()
                window = int(t)
                if window < 1:
                    raise ParseError("window must be >= 1", s)
            else:
                if len(args) == prim.arity:
                    raise ParseError(f"{prim.label} takes {prim.arity} argument(s)", s)
                args.append(self._expr())
            k, t, s = self._peek()
            if k == "punct" and t == ",":
                self._next()
                continue
            if k == "punct" and t == ")":
                self._next()
                break
            if k is None:
                raise ParseError("unmatched parenthesis", open_pos)
            raise ParseError(f"expected ',' or ')', found {t!r}", s)
        if len(args) != prim.arity:
            raise ParseError(f"{prim.label} takes {prim.arity} argument(s), got {len(args)}", start)
        if prim.windowed and window is None:
            window = self.default_window
        return Node(prim.name, tuple(args), window)


def parse_expr(text: str, default_window: int = DEFAULT_WINDOW) -> Node:
    """Parse prefix text; accepts both ``gp_mul`` and ``mul`` spellings."""
    return _Parser(text, default_window).parse()


# evaluation ----------------------------------------------------------------------


def _finite(x: np.ndarray) -> np.ndarray:
    return np.where(np.isfinite(x), x, np.nan)


def protected_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(np.abs(b) < PROTECTED_EPS, 1.0, a / np.where(b == 0, 1.0, b))
    return np.where(np.isnan(a) | np.isnan(b), np.nan, out)


def fractional_rank(x: np.ndarray) -> np.ndarray:
    """Average-tie rank of the finite entries mapped onto [0, 1]."""
    out = np.full(len(x), np.nan)
    ok = np.isfinite(x)
    m = int(ok.sum())
    if m == 1:
        out[ok] = 0.5
    elif m > 1:
        out[ok] = (rankdata(x[ok]) - 1.0) / (m - 1)
    return out


def zscore(x: np.ndarray) -> np.ndarray:
    out = np.full(len(x), np.nan)
    ok = np.isfinite(x)
    if ok.any():
        v = x[ok]
        sd = v.std()
        out[ok] = (v - v.mean()) / sd if sd > 0 else 0.0
    return out


def _windows(x: np.ndarray, w: int) -> np.ndarray:
    if w > len(x):
        raise EmptyColumnError(f"window {w} exceeds column length {len(x)}")
    return sliding_window_view(x, w)


def _rolling(x: np.ndarray, w: int, reducer: Callable) -> np.ndarray:
    out = np.full(len(x), np.nan)
    out[w - 1 :] = reducer(_windows(x, w))
    return out


def _arg_extreme(x: np.ndarray, w: int, pick: Callable) -> np.ndarray:
    """Offset of the extremum inside each trailing window (0 = oldest row)."""
    win = _windows(x, w)
    bad = np.isnan(win).any(axis=-1)
    idx = pick(np.where(np.isnan(win), 0.0, win), axis=-1).astype(float)
    idx[bad] = np.nan
    out = np.full(len(x), np.nan)
    out[w - 1 :] = idx
    return out


def delta(x: np.ndarray, w: int) -> np.ndarray:
    if w >= len(x):
        raise EmptyColumnError(f"window {w} exceeds column length {len(x)}")
    out = np.full(len(x), np.nan)
    out[w:] = x[w:] - x[:-w]
    return out


def _apply(prim: str, args: list[np.ndarray], window: int | None) -> np.ndarray:
    with np.errstate(all="ignore"):
        if prim == "add":
            out = args[0] + args[1]
        elif prim == "sub":
            out = args[0] - args[1]
        elif prim == "mul":
            out = args[0] * args[1]
        elif prim == "div":
            out = protected_div(args[0], args[1])
        elif prim == "max":
            out = np.maximum(args[0], args[1])
        elif prim == "min":
            out = np.minimum(args[0], args[1])
        elif prim == "sqrt":
            out = np.sqrt(np.abs(args[0]))
        elif prim == "abs":
            out = np.abs(args[0])
        elif prim == "sin":
            out = np.sin(args[0])
        elif prim == "cos":
            out = np.cos(args[0])
        elif prim == "tan":
            out = np.tan(args[0])
        elif prim == "rank":
            out = fractional_rank(args[0])
        elif prim == "scale":
            out = zscore(args[0])
        elif prim == "delta":
            out = delta(args[0], window)
        elif prim == "ts_sum":
            out = _rolling(args[0], window, lambda v: v.sum(axis=-1))
        elif prim == "ts_min":
            out = _rolling(args[0], window, lambda v: v.min(axis=-1))
        elif prim == "ts_max":
            out = _rolling(args[0], window, lambda v: v.max(axis=-1))
        elif prim == "ts_argmin":
            out = _arg_extreme(args[0], window, np.argmin)
        elif prim == "ts_argmax":
            out = _arg_extreme(args[0], window, np.argmax)
        else:  # pragma: no cover - guarded by PRIMITIVES
            raise KeyError(prim)
    return _finite(out)


def eval_expr(expr: Node, table: Mapping[str, np.ndarray]) -> np.ndarray:
    """Evaluate ``expr`` over the columns of ``table`` (a FeatureTable or dict).

    Non-finite intermediate results become NaN, so warm-up rows and numeric
    blow-ups surface as missing values rather than infinities.
    """
    columns = table.columns if hasattr(table, "columns") else table
    return _eval(expr, columns)


def _eval(node: Node, columns: Mapping[str, np.ndarray]) -> np.ndarray:
    if node.is_terminal:
        try:
            return np.asarray(columns[node.value], dtype=float)
        except KeyError:
            raise ExprReferenceError(f"unknown column {node.value!r}") from None
    return _apply(node.value, [_eval(c, columns) for c in node.children], node.window)
