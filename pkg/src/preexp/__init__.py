"""Probabilistic while-programs with soft and hard conditioning.

Two semantics are provided and checked against each other: structural
weakest (liberal) preexpectations evaluated by quadrature, and a small-step
machine driven by splittable entropy, sampled by Monte Carlo.
"""

from .entropy import base, pair, pi_l, pi_r, pi_u, scripted
from .estimator import (Estimate, VanishingNormalizer, estimate_divergence_mass,
                        estimate_posterior, estimate_wlp, estimate_wp)
from .opsem import Diverged, Errored, Exhausted, Terminated, run, sc_at, step
from .runtime import Postexpectation, State, eval_expr, eval_pred
from .syntax import desugar, parse, pretty
from .transform import noscore, unfold_while
from .wpeval import InfeasibleQuery, QuadConfig, wlp, wp, wp_bracket

__all__ = [
    "base", "pair", "pi_l", "pi_r", "pi_u", "scripted",
    "Estimate", "VanishingNormalizer", "estimate_divergence_mass", "estimate_posterior",
    "estimate_wlp", "estimate_wp",
    "Diverged", "Errored", "Exhausted", "Terminated", "run", "sc_at", "step",
    "Postexpectation", "State", "eval_expr", "eval_pred",
    "desugar", "parse", "pretty",
    "noscore", "unfold_while",
    "InfeasibleQuery", "QuadConfig", "wlp", "wp", "wp_bracket",
]

__version__ = "0.1.0"
