"""Syntactic program transformations: bounded loop unfolding and score removal."""

from __future__ import annotations

from typing import Iterable, Mapping, Optional, Union

from .syntax import (And, Cmp, DIVERGE, Draw, Fresh, If, Num, Observe, Score, Seq, Stmt,
                     Var, While, stmt_vars)

Depth = Union[int, Mapping[int, int]]


def unfold_while(C: Stmt, n: Depth) -> Stmt:
    """Replace every loop by its ``n``-th approximation, innermost loops first.

    ``n`` is either one depth for all loops or a map from a loop's pre-order
    index (0 for the first ``while`` in the text) to its depth; loops missing
    from the map are left in place.
    """
    if isinstance(n, int) and n < 0:
        raise ValueError("unfolding depth must be nonnegative")
    counter = [0]
    return _unfold(C, n, counter)


def _unfold(s: Stmt, n: Depth, counter: list) -> Stmt:
    if isinstance(s, Seq):
        first = _unfold(s.first, n, counter)
        second = _unfold(s.second, n, counter)
        return s if (first is s.first and second is s.second) else Seq(first, second)
    if isinstance(s, If):
        body = _unfold(s.body, n, counter)
        return s if body is s.body else If(s.pred, body)
    if isinstance(s, While):
        index = counter[0]
        counter[0] += 1
        body = _unfold(s.body, n, counter)
        depth = n if isinstance(n, int) else n.get(index)
        if depth is None:
            return s if body is s.body else While(s.pred, body)
        return approximate(While(s.pred, body), depth)
    return s


def approximate(loop: While, n: int) -> Stmt:
    """The ``n``-th approximation of a single loop (its body is kept as is)."""
    result: Stmt = DIVERGE
    for _ in range(n):
        result = If(loop.pred, Seq(loop.body, result))
    return result


def noscore(C: Stmt, fresh: Optional[Fresh] = None, avoid: Iterable[str] = ()) -> Stmt:
    """Replace each ``score(E)`` by a fresh draw and an observation.

    The observation ``0 < E && E <= 1 && u <= E`` accepts with probability E.
    """
    if fresh is None:
        fresh = Fresh(set(stmt_vars(C)) | set(avoid), prefix="_s")
    return _noscore(C, fresh)


def _noscore(s: Stmt, fresh: Fresh) -> Stmt:
    if isinstance(s, Score):
        u = fresh()
        guard = And(And(Cmp("<", Num(0.0), s.expr), Cmp("<=", s.expr, Num(1.0))),
                    Cmp("<=", Var(u), s.expr))
        return Seq(Draw(u), Observe(guard))
    if isinstance(s, Seq):
        return Seq(_noscore(s.first, fresh), _noscore(s.second, fresh))
    if isinstance(s, (If, While)):
        return type(s)(s.pred, _noscore(s.body, fresh))
    return s
