"""Weakest (liberal) preexpectations by structural recursion and quadrature.

Evaluation is vectorised over a batch of states.  A continuation is a
linked list ``(frame, rest)`` of statements still to run; loops become
frames carrying how many Kleene iterations remain.  Each uniform draw is
integrated with the composite midpoint rule by expanding every state into
``nodes`` copies.  Before such an expansion (and at every loop frame) rows
that agree on all variables still live are merged, which keeps loops whose
live state is small cheap to iterate.
"""

from __future__ import annotations

import math
import os
import sys
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Union

import numpy as np
from scipy.special import erfc

from .runtime import Postexpectation, State, _A, _B, _C, _D, _P_LOW
from .syntax import (And, Assign, BinOp, BoolLit, Call, Cmp, Diverge, Draw, Expr, If,
                     Not, Num, Observe, Or, Pred, Score, Seq, Skip, Stmt, Var, While,
                     expr_vars, iter_stmts, pred_vars)

DEFAULT_CEILING = 10 ** 8
CHUNK_ROWS = 1 << 20


class InfeasibleQuery(Exception):
    """Structural evaluation would exceed the configured cost ceiling."""

    def __init__(self, depth: int, cost: int, ceiling: int):
        self.depth = depth
        self.cost = cost
        self.ceiling = ceiling
        super().__init__(
            f"quadrature needs more than {ceiling} leaf evaluations "
            f"(reached {cost} at draw nesting depth {depth}); use the Monte Carlo estimator")


def default_ceiling() -> int:
    text = os.environ.get("PREEXP_COST_CEILING")
    return int(float(text)) if text else DEFAULT_CEILING


@dataclass(frozen=True)
class QuadConfig:
    nodes: int = 512
    max_depth: int = 100
    mode: str = "wp"
    dedup: bool = True
    ceiling: Optional[int] = None

    def __post_init__(self):
        if self.nodes < 1:
            raise ValueError("nodes must be at least 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be nonnegative")
        if self.mode not in ("wp", "wlp"):
            raise ValueError("mode must be 'wp' or 'wlp'")

    @property
    def cost_ceiling(self) -> int:
        return self.ceiling if self.ceiling is not None else default_ceiling()


ExpectationFn = Union[Postexpectation, Callable[[Mapping], float], float, int]


# ------------------------------------------------------- vectorised semantics

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def _std_quantile(p: np.ndarray) -> np.ndarray:
    upper = p > 0.5
    q = np.where(upper, 1.0 - p, p)
    z = np.empty_like(q)
    low = q < _P_LOW
    if low.any():
        r = np.sqrt(-2.0 * np.log(q[low]))
        z[low] = ((((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5])
                  / ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0))
    mid = ~low
    if mid.any():
        r = q[mid] - 0.5
        t = r * r
        z[mid] = ((((((_A[0] * t + _A[1]) * t + _A[2]) * t + _A[3]) * t + _A[4]) * t + _A[5]) * r
                  / (((((_B[0] * t + _B[1]) * t + _B[2]) * t + _B[3]) * t + _B[4]) * t + 1.0))
    e = 0.5 * erfc(-z / _SQRT2) - q
    refine = (e != 0.0) & (z * z <= 1400.0)
    d = np.where(refine, e * _SQRT2PI * np.exp(np.where(refine, 0.5 * z * z, 0.0)), 0.0)
    z = np.where(refine, z - d / (1.0 + 0.5 * z * d), z)
    return np.where(upper, -z, z)


def _inv_cdf(mu, sigma, u):
    u = np.clip(u, 0.0, 1.0)
    inside = (u > 0.0) & (u < 1.0)
    safe = np.where(inside, u, 0.5)
    return np.where(inside, mu + sigma * _std_quantile(safe), 0.0)


def _pdf(mu, sigma, x):
    two_var = 2.0 * sigma * sigma
    ok = two_var != 0.0
    d = mu - x
    val = np.exp(-d * d / np.where(ok, two_var, 1.0)) / (_SQRT2PI * np.where(ok, sigma, 1.0))
    return np.where(ok, val, 0.0)


def _power(a, b):
    undefined = ((a == 0.0) & (b < 0.0)) | ((a < 0.0) & (b != np.floor(b)))
    return np.where(undefined, 0.0, np.power(np.where(undefined, 1.0, a), b))


def _raw(cols: Mapping, n: int, e: Expr) -> np.ndarray:
    if isinstance(e, Num):
        return np.full(n, e.value)
    if isinstance(e, Var):
        col = cols.get(e.name)
        return np.zeros(n) if col is None else col
    if isinstance(e, BinOp):
        a, b = _raw(cols, n, e.left), _raw(cols, n, e.right)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return np.where(b == 0.0, 0.0, a / np.where(b == 0.0, 1.0, b))
        return _power(a, b)
    if isinstance(e, Call):
        args = [_raw(cols, n, a) for a in e.args]
        nan = np.zeros(n, dtype=bool)
        for a in args:
            nan |= np.isnan(a)
        if e.func == "softeq":
            d = args[0] - args[1]
            val = np.exp(-d * d)
        elif e.func == "gaussian_pdf":
            val = _pdf(*args)
        else:
            val = _inv_cdf(*args)
        return np.where(nan, np.nan, val)
    raise TypeError(f"not an expression: {e!r}")


def eval_expr_vec(cols: Mapping, n: int, e: Expr) -> np.ndarray:
    """Vectorised counterpart of :func:`preexp.runtime.eval_expr`."""
    with np.errstate(all="ignore"):
        v = np.asarray(_raw(cols, n, e), dtype=np.float64)
        return np.where(np.isfinite(v), v, 0.0)


def eval_pred_vec(cols: Mapping, n: int, p: Pred) -> np.ndarray:
    if isinstance(p, BoolLit):
        return np.full(n, p.value)
    if isinstance(p, Cmp):
        a, b = eval_expr_vec(cols, n, p.left), eval_expr_vec(cols, n, p.right)
        return {"<": np.less, "<=": np.less_equal, "=": np.equal,
                ">=": np.greater_equal, ">": np.greater}[p.op](a, b)
    if isinstance(p, And):
        return eval_pred_vec(cols, n, p.left) & eval_pred_vec(cols, n, p.right)
    if isinstance(p, Or):
        return eval_pred_vec(cols, n, p.left) | eval_pred_vec(cols, n, p.right)
    if isinstance(p, Not):
        return ~eval_pred_vec(cols, n, p.arg)
    raise TypeError(f"not a predicate: {p!r}")


# ------------------------------------------------------------------ liveness

ALL = None  # marker: every variable may be read


def _transfer(s, live, memo: dict):
    if live is ALL:
        return ALL
    if isinstance(s, _LoopFrame):
        s = s.loop
    key = (id(s), live)
    hit = memo.get(key)
    if hit is not None:
        return hit[1]
    if isinstance(s, (Skip,)):
        out = live
    elif isinstance(s, Diverge):
        out = frozenset()
    elif isinstance(s, Assign):
        out = (live - {s.var}) | expr_vars(s.expr) if s.var in live else live
    elif isinstance(s, Draw):
        out = live - {s.var}
    elif isinstance(s, Observe):
        out = live | pred_vars(s.pred)
    elif isinstance(s, Score):
        out = live | expr_vars(s.expr)
    elif isinstance(s, Seq):
        out = _transfer(s.first, _transfer(s.second, live, memo), memo)
    elif isinstance(s, If):
        if _inert(s.body, live):
            out = live  # the branch cannot change anything that is read later
        else:
            out = live | pred_vars(s.pred) | _transfer(s.body, live, memo)
    elif isinstance(s, While):
        loop = s
        out = live | pred_vars(loop.pred)
        while True:
            nxt = out | _transfer(loop.body, out, memo)
            if nxt == out:
                break
            out = nxt
    else:
        raise TypeError(f"not a statement: {s!r}")
    memo[key] = (s, out)  # keep s alive so its id stays unique
    return out


def _inert(s, live) -> bool:
    """True if ``s`` always runs to completion with weight 1 and writes no live variable."""
    for t in iter_stmts(s):
        if isinstance(t, (Score, Observe, Diverge, While)):
            return False
        if isinstance(t, (Assign, Draw)) and t.var in live:
            return False
    return True


@dataclass(frozen=True, eq=False)
class _LoopFrame:
    loop: While
    depth: int


# ----------------------------------------------------------------- evaluator


class _Evaluator:
    def __init__(self, post, post_live, q: QuadConfig, mode: str):
        self.post = post
        self.post_live = post_live
        self.q = q
        self.mode = mode
        self.ceiling = q.cost_ceiling
        self.cost = 0
        self.draw_depth = 0
        self.memo: dict = {}
        self.grid = (np.arange(q.nodes) + 0.5) / q.nodes
        self.stop_value = 0.0 if mode == "wp" else 1.0

    def live(self, k):
        if k is None:
            return self.post_live
        frame, rest = k
        return _transfer(frame, self.live(rest), self.memo)

    def ev_unique(self, k, cols: dict, n: int) -> np.ndarray:
        """Evaluate after merging rows that agree on the live variables."""
        if not self.q.dedup or n <= 1:
            return self.ev(k, cols, n)
        live = self.live(k)
        names = sorted(cols) if live is ALL else sorted(v for v in live if v in cols)
        if not names:
            one = self.ev(k, {name: col[:1] for name, col in cols.items()}, 1)
            return np.full(n, one[0])
        mat = np.stack([cols[name] for name in names], axis=1)
        uniq, first, inverse = np.unique(mat, axis=0, return_index=True, return_inverse=True)
        if len(uniq) == n:
            return self.ev(k, cols, n)
        sub = {name: col[first] for name, col in cols.items()}
        return self.ev(k, sub, len(uniq))[inverse.reshape(-1)]

    def ev(self, k, cols: dict, n: int) -> np.ndarray:
        out = np.zeros(n)
        pos = np.arange(n)
        w = np.ones(n)

        def keep(mask):
            nonlocal pos, w, cols
            pos, w = pos[mask], w[mask]
            cols = {name: col[mask] for name, col in cols.items()}

        while len(pos):
            m = len(pos)
            if k is None:
                out[pos] = w * self.post(cols, m)
                break
            frame, rest = k
            if isinstance(frame, _LoopFrame):
                if frame.depth == 0:
                    out[pos] = w * self.stop_value
                    break
                loop = frame.loop
                mask = eval_pred_vec(cols, m, loop.pred)
                if mask.any():
                    inner = (loop.body, (_LoopFrame(loop, frame.depth - 1), rest))
                    sub = {name: col[mask] for name, col in cols.items()}
                    out[pos[mask]] = w[mask] * self.ev_unique(inner, sub, int(mask.sum()))
                keep(~mask)
                k = rest
            elif isinstance(frame, Seq):
                k = (frame.first, (frame.second, rest))
            elif isinstance(frame, Skip):
                k = rest
            elif isinstance(frame, Diverge):
                out[pos] = w * self.stop_value
                break
            elif isinstance(frame, Assign):
                cols = dict(cols)
                cols[frame.var] = eval_expr_vec(cols, m, frame.expr)
                k = rest
            elif isinstance(frame, Observe):
                keep(eval_pred_vec(cols, m, frame.pred))
                k = rest
            elif isinstance(frame, Score):
                v = eval_expr_vec(cols, m, frame.expr)
                ok = (v > 0.0) & (v <= 1.0)
                w = w * np.where(ok, v, 0.0)
                keep(ok)
                k = rest
            elif isinstance(frame, If):
                mask = eval_pred_vec(cols, m, frame.pred)
                if mask.any():
                    sub = {name: col[mask] for name, col in cols.items()}
                    out[pos[mask]] = w[mask] * self.ev((frame.body, rest), sub, int(mask.sum()))
                keep(~mask)
                k = rest
            elif isinstance(frame, While):
                k = (_LoopFrame(frame, self.q.max_depth), rest)
            elif isinstance(frame, Draw):
                out[pos] = w * self.draw(frame.var, rest, cols, m)
                break
            else:
                raise TypeError(f"not a core statement: {frame!r}")
        return out

    def draw(self, var: str, rest, cols: dict, n: int) -> np.ndarray:
        if self.q.dedup and n > 1:
            live = self.live(rest)
            live = live if live is ALL else live - {var}
            names = sorted(cols) if live is ALL else sorted(v for v in live if v in cols)
            if not names:
                one = self._expand(var, rest, {name: col[:1] for name, col in cols.items()}, 1)
                return np.full(n, one[0])
            mat = np.stack([cols[name] for name in names], axis=1)
            uniq, first, inverse = np.unique(mat, axis=0, return_index=True,
                                             return_inverse=True)
            if len(uniq) < n:
                sub = {name: col[first] for name, col in cols.items()}
                return self._expand(var, rest, sub, len(uniq))[inverse.reshape(-1)]
        return self._expand(var, rest, cols, n)

    def _expand(self, var: str, rest, cols: dict, n: int) -> np.ndarray:
        nodes = self.q.nodes
        self.draw_depth += 1
        try:
            if self.cost + n * nodes > self.ceiling:
                raise InfeasibleQuery(self.draw_depth, self.cost + n * nodes, self.ceiling)
            self.cost += n * nodes
            result = np.empty(n)
            step = max(1, CHUNK_ROWS // nodes)
            for lo in range(0, n, step):
                hi = min(n, lo + step)
                c = hi - lo
                sub = {name: np.repeat(col[lo:hi], nodes) for name, col in cols.items()}
                sub[var] = np.tile(self.grid, c)
                vals = self.ev(rest, sub, c * nodes)
                result[lo:hi] = vals.reshape(c, nodes).mean(axis=1)
            return result
        finally:
            self.draw_depth -= 1


def _vector_post(f: ExpectationFn, mode: str):
    """Vectorised postexpectation and its live variables."""
    cap = 1.0 if mode == "wlp" else math.inf
    if isinstance(f, (int, float)):
        value = float(f)
        if value < 0.0:
            value = 0.0
        value = min(value, cap)
        return (lambda cols, n: np.full(n, value)), frozenset()
    if isinstance(f, Postexpectation):
        upper = min(cap, f.bound if f.bound is not None else math.inf)

        def post(cols, n):
            return np.clip(eval_expr_vec(cols, n, f.expr), 0.0, upper)
        return post, f.variables
    if callable(f):
        def post(cols, n):
            names = sorted(cols)
            out = np.empty(n)
            for i in range(n):
                out[i] = min(max(float(f(State({v: cols[v][i] for v in names}))), 0.0), cap)
            return out
        return post, ALL
    raise TypeError(f"not a postexpectation: {f!r}")


def _bounded_by_one(f: ExpectationFn) -> bool:
    if isinstance(f, (int, float)):
        return 0.0 <= float(f) <= 1.0
    if isinstance(f, Postexpectation):
        return f.is_bounded_by(1.0)
    bound = getattr(f, "bound", None)
    return bound is not None and bound <= 1.0


def _evaluate(C: Stmt, f: ExpectationFn, sigma: Mapping, q: QuadConfig, mode: str) -> float:
    if mode == "wlp" and not _bounded_by_one(f):
        raise ValueError("wlp needs a postexpectation bounded by 1")
    post, post_live = _vector_post(f, mode)
    ev = _Evaluator(post, post_live, q, mode)
    cols = {name: np.array([float(v)]) for name, v in sigma.items()}
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 20_000))
    try:
        with np.errstate(all="ignore"):
            return float(ev.ev((C, None), cols, 1)[0])
    finally:
        sys.setrecursionlimit(limit)


def wp(C: Stmt, f: ExpectationFn, sigma: Mapping = State(), q: QuadConfig = QuadConfig()) -> float:
    """Weakest preexpectation of ``f`` at ``sigma``; loops use the lower iterate."""
    if q.mode != "wp":
        raise ValueError("QuadConfig.mode must be 'wp' for wp")
    return _evaluate(C, f, sigma, q, "wp")


def wlp(C: Stmt, f: ExpectationFn, sigma: Mapping = State(),
        q: QuadConfig = QuadConfig(mode="wlp")) -> float:
    """Weakest liberal preexpectation; loops use the upper iterate."""
    if q.mode != "wlp":
        raise ValueError("QuadConfig.mode must be 'wlp' for wlp")
    return _evaluate(C, f, sigma, q, "wlp")


def wp_bracket(C: Stmt, f: ExpectationFn, sigma: Mapping = State(),
               q: QuadConfig = QuadConfig()) -> tuple[float, float]:
    """Lower and upper bounds (wp iterate, wlp iterate) for a bounded ``f``."""
    if not _bounded_by_one(f):
        raise ValueError("a bracket needs a postexpectation bounded by 1")
    low = _evaluate(C, f, sigma, q, "wp")
    high = _evaluate(C, f, sigma, q, "wlp")
    return low, high


def evaluate(C: Stmt, f: ExpectationFn, sigma: Mapping, q: QuadConfig) -> float:
    """Dispatch on ``q.mode``."""
    return _evaluate(C, f, sigma, q, q.mode)
