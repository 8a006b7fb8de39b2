"""Monte Carlo estimates of expectations over entropies.

Run ``i`` of an estimate uses the entropy ``base(seed + i)``.  The runs of
one ``(program, state, N, seed, budget)`` tuple are computed once and shared
by every query, so wp, wlp, divergence mass and posterior estimates on the
same arguments use common random numbers.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

from . import _kernel
from .runtime import Postexpectation, State
from .syntax import Stmt

Post = Union[Postexpectation, float, int]

MODES = ("wp", "wlp", "divergence", "posterior")


class VanishingNormalizer(Exception):
    """The normalising constant is not distinguishable from zero."""


@dataclass(frozen=True)
class Counts:
    terminated: int = 0
    errored: int = 0
    diverged: int = 0
    exhausted: int = 0

    @property
    def total(self) -> int:
        return self.terminated + self.errored + self.diverged + self.exhausted

    def as_dict(self) -> dict:
        return {"terminated": self.terminated, "errored": self.errored,
                "diverged": self.diverged, "exhausted": self.exhausted}


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    samples: int
    counts: Counts
    mode: str
    values: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def is_bound(self) -> bool:
        """True when unfinished runs make this a one-sided bound."""
        return self.counts.exhausted > 0

    def as_dict(self) -> dict:
        return {"mode": self.mode, "mean": self.mean, "stderr": self.stderr,
                "samples": self.samples, "counts": self.counts.as_dict(),
                "bound": self.is_bound}


# ----------------------------------------------------------------- run cache

_CACHE: "OrderedDict[tuple, _kernel.Batch]" = OrderedDict()
_CACHE_SIZE = 4


def runs(C: Stmt, sigma: Mapping, N: int, seed: int, budget: int,
         threads: Optional[int] = None) -> _kernel.Batch:
    """Per-run outcomes for ``base(seed + i)``, ``i < N`` (memoised)."""
    if N < 1:
        raise ValueError("N must be at least 1")
    if budget < 1:
        raise ValueError("budget must be at least 1")
    key = (C, tuple(sorted(State(sigma).items())), int(N), int(seed), int(budget))
    batch = _CACHE.get(key)
    if batch is None:
        batch = _kernel.run_batch(C, State(sigma), int(N), int(seed), int(budget), threads)
        _CACHE[key] = batch
        while len(_CACHE) > _CACHE_SIZE:
            _CACHE.popitem(last=False)
    else:
        _CACHE.move_to_end(key)
    return batch


def clear_cache() -> None:
    _CACHE.clear()


def _counts(batch: _kernel.Batch) -> Counts:
    c = np.bincount(batch.outcome.astype(np.int64), minlength=4)
    return Counts(int(c[_kernel.TERMINATED]), int(c[_kernel.ERRORED]),
                  int(c[_kernel.DIVERGED]), int(c[_kernel.EXHAUSTED]))


def _as_post(f: Post) -> Postexpectation:
    if isinstance(f, Postexpectation):
        return f
    if isinstance(f, (int, float)):
        return Postexpectation.constant(float(f))
    raise TypeError(f"not a postexpectation: {f!r}")


def _post_values(batch: _kernel.Batch, f: Postexpectation, cap: float = math.inf) -> np.ndarray:
    raw = batch.eval_expr(f.expr)
    upper = min(cap, f.bound if f.bound is not None else math.inf)
    return np.clip(raw, 0.0, upper)


def _summary(values: np.ndarray, batch: _kernel.Batch, mode: str) -> Estimate:
    n = len(values)
    mean = float(math.fsum(values) / n)
    stderr = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean, stderr, n, _counts(batch), mode, values)


def wp_contributions(batch: _kernel.Batch, f: Post) -> np.ndarray:
    """Per-run ``f(final) * score``; unfinished and failed runs give 0."""
    f = _as_post(f)
    term = batch.outcome == _kernel.TERMINATED
    return np.where(term, _post_values(batch, f) * batch.weight, 0.0)


def wlp_contributions(batch: _kernel.Batch, f: Post) -> np.ndarray:
    """As :func:`wp_contributions` but divergent and unfinished runs give their weight."""
    f = _as_post(f)
    term = batch.outcome == _kernel.TERMINATED
    loose = (batch.outcome == _kernel.DIVERGED) | (batch.outcome == _kernel.EXHAUSTED)
    vals = np.where(term, _post_values(batch, f, 1.0) * batch.weight, 0.0)
    return np.where(loose, batch.weight, vals)


def divergence_contributions(batch: _kernel.Batch) -> np.ndarray:
    loose = (batch.outcome == _kernel.DIVERGED) | (batch.outcome == _kernel.EXHAUSTED)
    return np.where(loose, batch.weight, 0.0)


def _require_bounded(f: Post) -> None:
    f = _as_post(f)
    if not f.is_bounded_by(1.0):
        raise ValueError("this query needs a postexpectation bounded by 1")


def estimate_wp(C: Stmt, f: Post, sigma: Mapping = State(), N: int = 10_000, seed: int = 0,
                budget: int = 10_000, threads: Optional[int] = None) -> Estimate:
    batch = runs(C, sigma, N, seed, budget, threads)
    return _summary(wp_contributions(batch, f), batch, "wp")


def estimate_wlp(C: Stmt, f: Post, sigma: Mapping = State(), N: int = 10_000, seed: int = 0,
                 budget: int = 10_000, threads: Optional[int] = None) -> Estimate:
    _require_bounded(f)
    batch = runs(C, sigma, N, seed, budget, threads)
    return _summary(wlp_contributions(batch, f), batch, "wlp")


def estimate_divergence_mass(C: Stmt, sigma: Mapping = State(), N: int = 10_000,
                             seed: int = 0, budget: int = 10_000,
                             threads: Optional[int] = None) -> Estimate:
    batch = runs(C, sigma, N, seed, budget, threads)
    return _summary(divergence_contributions(batch), batch, "divergence")


def estimate_posterior(C: Stmt, f: Post, sigma: Mapping = State(), N: int = 10_000,
                       seed: int = 0, budget: int = 10_000,
                       threads: Optional[int] = None) -> Estimate:
    """Ratio of wp(f) to wlp(1) on shared runs, with a delta-method error.

    ``f`` need not be bounded; unfinished runs enter the numerator as 0 and
    the denominator with their weight.
    """
    batch = runs(C, sigma, N, seed, budget, threads)
    num = wp_contributions(batch, f)
    den = wlp_contributions(batch, 1.0)
    n = len(num)
    mean_num = math.fsum(num) / n
    mean_den = math.fsum(den) / n
    se_den = float(np.std(den, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    if mean_den <= 3.0 * se_den or mean_den == 0.0:
        raise VanishingNormalizer(
            f"normalising constant {mean_den:.3g} is within 3 standard errors of 0")
    ratio = mean_num / mean_den
    if n > 1:
        # delta method for a ratio of means on the same runs
        resid = (num - ratio * den) / mean_den
        stderr = float(np.std(resid, ddof=1) / math.sqrt(n))
    else:
        stderr = 0.0
    return Estimate(float(ratio), stderr, n, _counts(batch), "posterior", None)


def estimate(mode: str, C: Stmt, f: Post = 1.0, sigma: Mapping = State(), N: int = 10_000,
             seed: int = 0, budget: int = 10_000, threads: Optional[int] = None) -> Estimate:
    """Dispatch on ``mode`` (one of wp, wlp, divergence, posterior)."""
    if mode == "wp":
        return estimate_wp(C, f, sigma, N, seed, budget, threads)
    if mode == "wlp":
        return estimate_wlp(C, f, sigma, N, seed, budget, threads)
    if mode == "divergence":
        return estimate_divergence_mass(C, sigma, N, seed, budget, threads)
    if mode == "posterior":
        return estimate_posterior(C, f, sigma, N, seed, budget, threads)
    raise ValueError(f"unknown mode {mode!r}")


def sc_values(C: Stmt, sigma: Mapping = State(), N: int = 10_000, seed: int = 0,
              budget: int = 10_000) -> np.ndarray:
    """Per-run limit-score values (0 for errors, in-flight weight when unfinished)."""
    batch = runs(C, sigma, N, seed, budget)
    return np.where(batch.outcome == _kernel.ERRORED, 0.0, batch.weight)


__all__ = ["Estimate", "Counts", "VanishingNormalizer", "estimate", "estimate_wp",
           "estimate_wlp", "estimate_divergence_mass", "estimate_posterior", "runs",
           "sc_values", "clear_cache"]
