"""Small-step operational semantics over entropy (reference implementation).

A configuration is ``<theta, stmt, K, sigma, theta_K, n, w>``.  Each call to
:func:`step` applies exactly one reduction rule.  :func:`run` drives a
configuration to a classified outcome within a step budget.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Optional, Union

from . import entropy as ent
from .runtime import ERROR, ExtState, State, eval_expr, eval_pred
from .syntax import (Assign, Diverge, Draw, If, Observe, Score, Seq, Skip, Stmt,
                     While)


class _Done:
    def __repr__(self) -> str:
        return "DONE"


DONE = _Done()


@dataclass(frozen=True)
class Config:
    theta: ent.Entropy
    stmt: Union[Stmt, _Done]
    cont: tuple  # continuation stack, top at index 0
    state: ExtState
    theta_k: ent.Entropy
    steps: int = 0
    weight: float = 1.0


@dataclass(frozen=True)
class Next:
    config: Config


@dataclass(frozen=True)
class Stuck:
    config: Config


StepResult = Union[Next, Stuck]


@dataclass(frozen=True)
class Terminated:
    state: State
    score: float
    steps: int


@dataclass(frozen=True)
class Errored:
    steps: int
    score: float = 0.0


@dataclass(frozen=True)
class Diverged:
    score: float
    detected_at: int


@dataclass(frozen=True)
class Exhausted:
    score: float
    steps: int = 0


RunOutcome = Union[Terminated, Errored, Diverged, Exhausted]


def initial(C: Stmt, sigma: State, theta: ent.Entropy, seed: int = 0) -> Config:
    theta_k = theta if isinstance(theta, ent.Scripted) else ent.dummy(seed)
    return Config(theta, C, (), sigma, theta_k, 0, 1.0)


def _finished(k: Config) -> bool:
    return k.stmt is DONE or isinstance(k.stmt, Skip)


def step(k: Config) -> StepResult:
    """Apply the unique reduction rule for ``k``."""
    s, sigma, n = k.stmt, k.state, k.steps + 1
    if sigma is ERROR:
        return Stuck(k)
    if _finished(k):
        if k.cont:
            # (pop)
            th = k.theta_k
            return Next(Config(th.pi_l(), k.cont[0], k.cont[1:], sigma, th.pi_r(), n, k.weight))
        # (final)
        return Next(replace(k, stmt=DONE, steps=n))
    if isinstance(s, Seq):
        # (seq), peeling the left-most non-sequence statement
        first, rest = s.first, s.second
        while isinstance(first, Seq):
            first, rest = first.first, Seq(first.second, rest)
        th = k.theta
        return Next(Config(th.pi_l(), first, (rest,) + k.cont, sigma,
                           ent.pair(th.pi_r(), k.theta_k), n, k.weight))
    if isinstance(s, Assign):
        v = eval_expr(sigma, s.expr)
        return Next(replace(k, stmt=DONE, state=sigma.update(s.var, v), steps=n))
    if isinstance(s, Draw):
        th = k.theta
        v = th.pi_l().pi_u()
        return Next(replace(k, theta=th.pi_r(), stmt=DONE, state=sigma.update(s.var, v), steps=n))
    if isinstance(s, Observe):
        if eval_pred(sigma, s.pred):
            return Next(replace(k, stmt=DONE, steps=n))
        return Next(replace(k, stmt=DONE, cont=(), state=ERROR, steps=n))
    if isinstance(s, Score):
        v = eval_expr(sigma, s.expr)
        if 0.0 < v <= 1.0:
            return Next(replace(k, stmt=DONE, steps=n, weight=k.weight * v))
        return Stuck(k)
    if isinstance(s, If):
        if eval_pred(sigma, s.pred):
            return Next(replace(k, stmt=s.body, steps=n))
        return Next(replace(k, stmt=DONE, steps=n))
    if isinstance(s, While):
        if eval_pred(sigma, s.pred):
            return Next(replace(k, stmt=Seq(s.body, s), steps=n))
        return Next(replace(k, stmt=DONE, steps=n))
    if isinstance(s, Diverge):
        return Next(replace(k, steps=n))
    raise TypeError(f"not a core statement: {s!r}")


def _classify(k: Config, budget: int) -> Optional[RunOutcome]:
    if k.state is ERROR:
        return Errored(k.steps)
    if _finished(k) and not k.cont:
        return Terminated(k.state, k.weight, k.steps)
    if isinstance(k.stmt, Diverge):
        return Diverged(k.weight, k.steps)
    if k.steps >= budget:
        return Exhausted(k.weight, k.steps)
    return None


def run(C: Stmt, sigma: State, theta: ent.Entropy, budget: int = 10_000,
        seed: int = 0) -> RunOutcome:
    """Run ``C`` from ``sigma`` and classify the result.

    Termination is reported without applying the (final) rule.  A run whose
    current statement is ``diverge`` is reported as divergent at once.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    k = initial(C, sigma, theta, seed)
    while True:
        outcome = _classify(k, budget)
        if outcome is not None:
            return outcome
        r = step(k)
        if isinstance(r, Stuck):
            return Errored(k.steps)
        k = r.config


def trace(C: Stmt, sigma: State, theta: ent.Entropy, max_steps: int,
          seed: int = 0) -> Iterator[Config]:
    """Yield successive configurations, at most ``max_steps`` steps past the start."""
    k = initial(C, sigma, theta, seed)
    yield k
    for _ in range(max_steps):
        if _finished(k) and not k.cont and k.state is not ERROR:
            return
        r = step(k)
        if isinstance(r, Stuck):
            return
        k = r.config
        yield k


def sc_at(C: Stmt, sigma: State, theta: ent.Entropy, n: int, seed: int = 0) -> float:
    """Weight after exactly ``n`` steps, or 0 if no such proper configuration exists.

    A finished run keeps its weight through (final) steps.
    """
    k = initial(C, sigma, theta, seed)
    while k.steps < n:
        r = step(k)
        if isinstance(r, Stuck):
            return 0.0
        k = r.config
    return 0.0 if k.state is ERROR else k.weight


def run_seed(C: Stmt, sigma: State, seed: int, budget: int = 10_000) -> RunOutcome:
    """Run on ``base(seed)`` with the matching dummy continuation entropy."""
    return run(C, sigma, ent.base(seed), budget, seed)
