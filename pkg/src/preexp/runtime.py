"""Program states and total evaluation of expressions and predicates."""

from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Union

from .syntax import (And, BinOp, BoolLit, Call, Cmp, Expr, Not, Num, Or, Pred, Var,
                     expr_vars, parse_expr)


class State(Mapping):
    """Immutable finite map from variable names to finite reals.

    Reading an unbound variable through :func:`eval_expr` yields 0.
    """

    __slots__ = ("_data", "_hash")

    def __init__(self, data: Optional[Mapping] = None, **kwargs: float):
        merged = dict(data or {})
        merged.update(kwargs)
        self._data = {str(k): _finite(float(v)) for k, v in merged.items()}
        self._hash = None

    def __getitem__(self, name: str) -> float:
        return self._data[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._data.items()))
        return self._hash

    def __eq__(self, other) -> bool:
        if isinstance(other, State):
            return self._data == other._data
        if isinstance(other, Mapping):
            return self._data == dict(other)
        return NotImplemented

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v!r}" for k, v in sorted(self._data.items()))
        return f"State({inner})"

    def get_value(self, name: str) -> float:
        return self._data.get(name, 0.0)

    def update(self, name: str, value: float) -> "State":
        """A new state with ``name`` bound to ``value``; ``self`` is untouched."""
        new = State.__new__(State)
        new._data = dict(self._data)
        new._data[name] = _finite(float(value))
        new._hash = None
        return new

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)

    def as_dict(self) -> dict:
        return dict(sorted(self._data.items()))

    @classmethod
    def from_json(cls, text: str) -> "State":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("state must be a JSON object")
        for k, v in data.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValueError(f"state value for {k!r} is not a number")
        return cls(data)


EMPTY = State()


def update(sigma: State, name: str, value: float) -> State:
    return sigma.update(name, value)


class _Sentinel:
    def __init__(self, name: str, symbol: str):
        self.name = name
        self.symbol = symbol

    def __repr__(self) -> str:
        return self.name

    def __reduce__(self):
        return self.name


ERROR = _Sentinel("ERROR", "↯")
DIVERGED = _Sentinel("DIVERGED", "↑")

ExtState = Union[State, _Sentinel]


def _finite(v: float) -> float:
    return v if math.isfinite(v) else 0.0


# ------------------------------------------------------------ normal helpers

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# rational approximation coefficients for the standard normal quantile
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549671010998611e+00, 4.374664141464968e+00, 2.938163982963392e+00)
_D = (7.784695709951251e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def _tail_quantile(q: float) -> float:
    """Standard normal z with lower tail probability q, for 0 < q <= 0.5."""
    if q < _P_LOW:
        r = math.sqrt(-2.0 * math.log(q))
        z = ((((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5])
             / ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0))
    else:
        r = q - 0.5
        t = r * r
        z = ((((((_A[0] * t + _A[1]) * t + _A[2]) * t + _A[3]) * t + _A[4]) * t + _A[5]) * r
             / (((((_B[0] * t + _B[1]) * t + _B[2]) * t + _B[3]) * t + _B[4]) * t + 1.0))
    # one Halley step against the exact tail probability
    e = 0.5 * math.erfc(-z / _SQRT2) - q
    if e == 0.0 or z * z > 1400.0:  # exact already, or deep subnormal tail
        return z
    d = e * _SQRT2PI * math.exp(0.5 * z * z)
    return z - d / (1.0 + 0.5 * z * d)


def std_normal_quantile(p: float) -> float:
    """Inverse of the standard normal cdf on the open interval (0, 1)."""
    if p > 0.5:
        return -_tail_quantile(1.0 - p)
    return _tail_quantile(p)


def gaussian_inv_cdf(mu: float, sigma: float, u: float) -> float:
    """Quantile of N(mu, sigma^2); u is clamped into [0,1] and the endpoints give 0."""
    if not u > 0.0 or u >= 1.0:  # also catches NaN
        return 0.0
    return mu + sigma * std_normal_quantile(u)


def gaussian_cdf(mu: float, sigma: float, x: float) -> float:
    return 0.5 * math.erfc(-(x - mu) / (sigma * _SQRT2))


def gaussian_pdf(mu: float, sigma: float, x: float) -> float:
    two_var = 2.0 * sigma * sigma
    if two_var == 0.0:  # sigma is zero or so small that its square underflows
        return 0.0
    d = mu - x
    return math.exp(-d * d / two_var) / (_SQRT2PI * sigma)


def softeq(a: float, b: float) -> float:
    d = a - b
    return math.exp(-d * d)


def power(a: float, b: float) -> float:
    """``a ^ b`` made total: undefined real powers give 0, overflow gives inf."""
    if a == 0.0 and b < 0.0:
        return 0.0
    if a < 0.0 and b != math.floor(b):
        return 0.0
    try:
        return math.pow(a, b)
    except OverflowError:
        return math.inf
    except ValueError:
        return 0.0


def divide(a: float, b: float) -> float:
    if b == 0.0:
        return 0.0
    return a / b


# ----------------------------------------------------------------- evaluation


def _eval(sigma: Mapping, e: Expr) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return sigma.get(e.name, 0.0)
    if isinstance(e, BinOp):
        a = _eval(sigma, e.left)
        b = _eval(sigma, e.right)
        op = e.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return divide(a, b)
        if op == "^":
            return power(a, b)
        raise ValueError(f"unknown operator {op!r}")
    if isinstance(e, Call):
        args = [_eval(sigma, a) for a in e.args]
        if any(math.isnan(v) for v in args):
            return math.nan
        if e.func == "softeq":
            return softeq(*args)
        if e.func == "gaussian_pdf":
            return gaussian_pdf(*args)
        if e.func == "gaussian_inv_cdf":
            mu, s, u = args
            return gaussian_inv_cdf(mu, s, min(max(u, 0.0), 1.0))
        raise ValueError(f"unknown builtin {e.func!r}")
    raise TypeError(f"not an expression: {e!r}")


def eval_expr(sigma: Mapping, e: Expr) -> float:
    """Total evaluation; non-finite intermediate results surface as 0."""
    v = _eval(sigma, e)
    return v if math.isfinite(v) else 0.0


def eval_pred(sigma: Mapping, p: Pred) -> bool:
    if isinstance(p, BoolLit):
        return p.value
    if isinstance(p, Cmp):
        a = eval_expr(sigma, p.left)
        b = eval_expr(sigma, p.right)
        op = p.op
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == "=":
            return a == b
        if op == ">=":
            return a >= b
        if op == ">":
            return a > b
        raise ValueError(f"unknown comparison {op!r}")
    if isinstance(p, And):
        return eval_pred(sigma, p.left) and eval_pred(sigma, p.right)
    if isinstance(p, Or):
        return eval_pred(sigma, p.left) or eval_pred(sigma, p.right)
    if isinstance(p, Not):
        return not eval_pred(sigma, p.arg)
    raise TypeError(f"not a predicate: {p!r}")


# ----------------------------------------------------------- postexpectations


@dataclass(frozen=True)
class Postexpectation:
    """A nonnegative function of final states, optionally bounded above."""

    expr: Expr
    bound: Optional[float] = None

    def __post_init__(self):
        if self.bound is not None and not self.bound >= 0.0:
            raise ValueError("bound must be nonnegative")

    @classmethod
    def parse(cls, text: str, bound: Optional[float] = None) -> "Postexpectation":
        return cls(parse_expr(text), bound)

    @classmethod
    def constant(cls, value: float) -> "Postexpectation":
        bound = value if 0.0 <= value else None
        return cls(Num(float(value)), bound)

    def __call__(self, sigma: Mapping) -> float:
        v = eval_expr(sigma, self.expr)
        if v < 0.0:
            return 0.0
        if self.bound is not None and v > self.bound:
            return self.bound
        return v

    def hat(self, ext: ExtState) -> float:
        """Extension to exception states that sends both to 0."""
        return 0.0 if isinstance(ext, _Sentinel) else self(ext)

    def check(self, ext: ExtState) -> float:
        """Extension that sends divergence to 1 and error to 0."""
        if ext is DIVERGED:
            return 1.0
        if ext is ERROR:
            return 0.0
        return self(ext)

    @property
    def variables(self) -> frozenset:
        return expr_vars(self.expr)

    def is_bounded_by(self, limit: float) -> bool:
        if self.bound is not None:
            return self.bound <= limit
        return isinstance(self.expr, Num) and 0.0 <= self.expr.value <= limit


ExpectationFn = Union[Postexpectation, Callable[[Mapping], float]]
