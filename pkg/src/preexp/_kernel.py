"""Compiled batch sampler that mirrors :mod:`preexp.opsem` rule for rule.

A core program is flattened so that every maximal sequence becomes a list
of non-sequence nodes, and each loop owns a list holding its body followed
by the loop itself.  The current statement is then one of finitely many
program points (done, a single node, or a list suffix of length two or
more), so each program gets its own generated numba function with one
branch per point and variables held in locals.  The continuation stack
stores program points with the entropy saved for them; base entropies are
tracked by stride exponent and index key, which is all that drawing needs.
"""

from __future__ import annotations

import hashlib
import importlib.util
import math
import os
import sys
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numba
import numpy as np
from numba import njit

from . import entropy as ent
from .syntax import (And, Assign, BinOp, BoolLit, Call, Cmp, Diverge, Draw, Expr, If,
                     Not, Num, Observe, Or, Pred, Score, Seq, Skip, Stmt, Var, While)

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the portable layer avoids start-up warnings about old TBB installs
    numba.config.THREADING_LAYER = "workqueue"

# node kinds
SKIP, DIVERGE, ASSIGN, DRAW, OBSERVE, SCORE, IF, WHILE = range(8)

# bytecode
(OP_CONST, OP_VAR, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW, OP_SOFTEQ, OP_PDF,
 OP_INVCDF, OP_FIN, OP_LT, OP_LE, OP_EQ, OP_GE, OP_GT, OP_AND, OP_OR, OP_NOT) = range(19)

_BINOPS = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV, "^": OP_POW}
_CALLS = {"softeq": OP_SOFTEQ, "gaussian_pdf": OP_PDF, "gaussian_inv_cdf": OP_INVCDF}
_CMPS = {"<": OP_LT, "<=": OP_LE, "=": OP_EQ, ">=": OP_GE, ">": OP_GT}

# outcome codes
TERMINATED, ERRORED, DIVERGED, EXHAUSTED = range(4)

KEY_TABLE_SIZE = 1 << 16
_BIT_KEYS = np.array([ent.bit_key(j) for j in range(KEY_TABLE_SIZE)], dtype=np.uint64)


class Code:
    """Postfix bytecode for a set of expressions and predicates."""

    def __init__(self, slots: dict):
        self.slots = slots
        self.ops: list[int] = []
        self.args: list[int] = []
        self.consts: list[float] = []
        self.starts: list[int] = []
        self.lengths: list[int] = []
        self.max_stack = 1

    def _emit(self, op: int, arg: int = 0):
        self.ops.append(op)
        self.args.append(arg)

    def _slot(self, name: str) -> int:
        if name not in self.slots:
            self.slots[name] = len(self.slots)
        return self.slots[name]

    def _expr(self, e: Expr, depth: int) -> int:
        if isinstance(e, Num):
            self.consts.append(e.value)
            self._emit(OP_CONST, len(self.consts) - 1)
            return depth + 1
        if isinstance(e, Var):
            self._emit(OP_VAR, self._slot(e.name))
            return depth + 1
        if isinstance(e, BinOp):
            d = self._expr(e.left, depth)
            d = max(d, self._expr(e.right, depth + 1))
            self._emit(_BINOPS[e.op])
            return d
        if isinstance(e, Call):
            d = depth
            for i, a in enumerate(e.args):
                d = max(d, self._expr(a, depth + i))
            self._emit(_CALLS[e.func])
            return d
        raise TypeError(f"not an expression: {e!r}")

    def _pred(self, p: Pred, depth: int) -> int:
        if isinstance(p, BoolLit):
            self.consts.append(1.0 if p.value else 0.0)
            self._emit(OP_CONST, len(self.consts) - 1)
            return depth + 1
        if isinstance(p, Cmp):
            d = self._expr(p.left, depth)
            self._emit(OP_FIN)
            d = max(d, self._expr(p.right, depth + 1))
            self._emit(OP_FIN)
            self._emit(_CMPS[p.op])
            return d
        if isinstance(p, (And, Or)):
            d = self._pred(p.left, depth)
            d = max(d, self._pred(p.right, depth + 1))
            self._emit(OP_AND if isinstance(p, And) else OP_OR)
            return d
        if isinstance(p, Not):
            d = self._pred(p.arg, depth)
            self._emit(OP_NOT)
            return d
        raise TypeError(f"not a predicate: {p!r}")

    def add_expr(self, e: Expr) -> int:
        start = len(self.ops)
        self.max_stack = max(self.max_stack, self._expr(e, 0))
        self._emit(OP_FIN)
        return self._close(start)

    def add_pred(self, p: Pred) -> int:
        start = len(self.ops)
        self.max_stack = max(self.max_stack, self._pred(p, 0))
        return self._close(start)

    def _close(self, start: int) -> int:
        self.starts.append(start)
        self.lengths.append(len(self.ops) - start)
        return len(self.starts) - 1

    def arrays(self):
        return (np.array(self.ops, dtype=np.int64), np.array(self.args, dtype=np.int64),
                np.array(self.consts or [0.0], dtype=np.float64),
                np.array(self.starts, dtype=np.int64), np.array(self.lengths, dtype=np.int64))


# ------------------------------------------------------------ numeric helpers

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
_A0, _A1, _A2, _A3, _A4, _A5 = (-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00)
_B0, _B1, _B2, _B3, _B4 = (-5.447609879822406e+01, 1.615858368580409e+02,
                           -1.556989798598866e+02, 6.680131188771972e+01,
                           -1.328068155288572e+01)
_C0, _C1, _C2, _C3, _C4, _C5 = (-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549671010998611e+00,
                                4.374664141464968e+00, 2.938163982963392e+00)
_D0, _D1, _D2, _D3 = (7.784695709951251e-03, 3.224671290700398e-01,
                      2.445134137142996e+00, 3.754408661907416e+00)


@njit(cache=True, error_model="numpy")
def _tail_quantile(q):
    if q < 0.02425:
        r = math.sqrt(-2.0 * math.log(q))
        z = ((((((_C0 * r + _C1) * r + _C2) * r + _C3) * r + _C4) * r + _C5)
             / ((((_D0 * r + _D1) * r + _D2) * r + _D3) * r + 1.0))
    else:
        r = q - 0.5
        t = r * r
        z = ((((((_A0 * t + _A1) * t + _A2) * t + _A3) * t + _A4) * t + _A5) * r
             / (((((_B0 * t + _B1) * t + _B2) * t + _B3) * t + _B4) * t + 1.0))
    e = 0.5 * math.erfc(-z / _SQRT2) - q
    if e == 0.0 or z * z > 1400.0:
        return z
    d = e * _SQRT2PI * math.exp(0.5 * z * z)
    return z - d / (1.0 + 0.5 * z * d)


@njit(cache=True, error_model="numpy")
def _inv_cdf(mu, sigma, u):
    if u < 0.0:
        u = 0.0
    if u > 1.0:
        u = 1.0
    if not u > 0.0 or u >= 1.0:
        return 0.0
    if u > 0.5:
        z = -_tail_quantile(1.0 - u)
    else:
        z = _tail_quantile(u)
    return mu + sigma * z


@njit(cache=True, error_model="numpy")
def _pdf(mu, sigma, x):
    two_var = 2.0 * sigma * sigma
    if two_var == 0.0:
        return 0.0
    d = mu - x
    return math.exp(-d * d / two_var) / (_SQRT2PI * sigma)


@njit(cache=True, error_model="numpy")
def _power(a, b):
    if a == 0.0 and b < 0.0:
        return 0.0
    if a < 0.0 and b != math.floor(b):
        return 0.0
    return math.pow(a, b)


@njit(cache=True, error_model="numpy")
def eval_code(ops, args, consts, start, length, vals, stack):
    sp = 0
    for pc in range(start, start + length):
        op = ops[pc]
        if op == OP_CONST:
            stack[sp] = consts[args[pc]]
            sp += 1
        elif op == OP_VAR:
            stack[sp] = vals[args[pc]]
            sp += 1
        elif op == OP_FIN:
            v = stack[sp - 1]
            if not math.isfinite(v):
                stack[sp - 1] = 0.0
        elif op == OP_NOT:
            stack[sp - 1] = 1.0 - stack[sp - 1]
        elif op == OP_SOFTEQ:
            a = stack[sp - 2]
            b = stack[sp - 1]
            sp -= 1
            if math.isnan(a) or math.isnan(b):
                stack[sp - 1] = math.nan
            else:
                d = a - b
                stack[sp - 1] = math.exp(-d * d)
        elif op == OP_PDF or op == OP_INVCDF:
            a = stack[sp - 3]
            b = stack[sp - 2]
            c = stack[sp - 1]
            sp -= 2
            if math.isnan(a) or math.isnan(b) or math.isnan(c):
                stack[sp - 1] = math.nan
            elif op == OP_PDF:
                stack[sp - 1] = _pdf(a, b, c)
            else:
                stack[sp - 1] = _inv_cdf(a, b, c)
        else:
            a = stack[sp - 2]
            b = stack[sp - 1]
            sp -= 1
            if op == OP_ADD:
                r = a + b
            elif op == OP_SUB:
                r = a - b
            elif op == OP_MUL:
                r = a * b
            elif op == OP_DIV:
                r = 0.0 if b == 0.0 else a / b
            elif op == OP_POW:
                r = _power(a, b)
            elif op == OP_LT:
                r = 1.0 if a < b else 0.0
            elif op == OP_LE:
                r = 1.0 if a <= b else 0.0
            elif op == OP_EQ:
                r = 1.0 if a == b else 0.0
            elif op == OP_GE:
                r = 1.0 if a >= b else 0.0
            elif op == OP_GT:
                r = 1.0 if a > b else 0.0
            elif op == OP_AND:
                r = 1.0 if (a != 0.0 and b != 0.0) else 0.0
            else:  # OP_OR
                r = 1.0 if (a != 0.0 or b != 0.0) else 0.0
            stack[sp - 1] = r
    return stack[0]


# ------------------------------------------------------------------- hashing

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(ent.GOLDEN)
_SALT = np.uint64(ent.DUMMY_SALT)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_UNIT = 2.0 ** -53


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def _bit_key(j, table):
    if j < table.shape[0]:
        return table[j]
    return _mix(np.uint64(j + 1) * _GOLDEN)


@njit(cache=True, inline="always")
def _unit(seed_k, key):
    return float(_mix(_mix(seed_k ^ key) + _GOLDEN) >> _S11) * _UNIT




@njit(cache=True, inline="always")
def _fin(x):
    return x if math.isfinite(x) else 0.0


@njit(cache=True, inline="always")
def _div(a, b):
    return 0.0 if b == 0.0 else a / b


@njit(cache=True, error_model="numpy")
def _softeq_n(a, b):
    if math.isnan(a) or math.isnan(b):
        return math.nan
    d = a - b
    return math.exp(-d * d)


@njit(cache=True, error_model="numpy")
def _pdf_n(mu, sigma, x):
    if math.isnan(mu) or math.isnan(sigma) or math.isnan(x):
        return math.nan
    return _pdf(mu, sigma, x)


@njit(cache=True, error_model="numpy")
def _invcdf_n(mu, sigma, u):
    if math.isnan(mu) or math.isnan(sigma) or math.isnan(u):
        return math.nan
    return _inv_cdf(mu, sigma, u)


@njit(cache=True, error_model="numpy")
def _eval_rows(ops, cargs, consts, start, length, rows, max_stack):
    n = rows.shape[0]
    out = np.empty(n, dtype=np.float64)
    stack = np.empty(max_stack, dtype=np.float64)
    for i in range(n):
        out[i] = eval_code(ops, cargs, consts, start, length, rows[i], stack)
    return out


def eval_rows(e: Expr, names: Sequence[str], rows: np.ndarray) -> np.ndarray:
    """Evaluate ``e`` on each row of ``rows`` (columns named by ``names``)."""
    slots = {n: j for j, n in enumerate(names)}
    code = Code(dict(slots))
    idx = code.add_expr(e)
    extra = len(code.slots) - len(slots)
    rows = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(names))
    if extra:
        rows = np.concatenate([rows, np.zeros((len(rows), extra))], axis=1)
    ops, cargs, consts, starts, lengths = code.arrays()
    return _eval_rows(ops, cargs, consts, starts[idx], lengths[idx],
                      np.ascontiguousarray(rows), code.max_stack + 2)


# ------------------------------------------------------------ code generation

_PY_BINOPS = {"+": "+", "-": "-", "*": "*"}
_PY_CMPS = {"<": "<", "<=": "<=", "=": "==", ">=": ">=", ">": ">"}
_PY_CALLS = {"softeq": "_softeq_n", "gaussian_pdf": "_pdf_n", "gaussian_inv_cdf": "_invcdf_n"}


def _literal(v: float) -> str:
    if math.isnan(v):
        return "math.nan"
    if math.isinf(v):
        return "math.inf" if v > 0 else "(-math.inf)"
    return f"({v!r})"


class _Emitter:
    """Turns a flattened core program into the source of a numba kernel."""

    def __init__(self, C: Stmt, extra_vars: Sequence[str]):
        self.slots: dict = {}
        for name in extra_vars:
            self._slot(name)
        self.nodes: list[Stmt] = []
        self.lists: list[list[int]] = []
        self.node_list: dict = {}  # node id -> owned list (if or while body)
        self.root = self._list(self._flatten(C))
        self.points: dict = {}  # ('node', id) or ('suffix', list, pos) -> point id
        self.point_keys: list = [("done",)]

    def _slot(self, name: str) -> int:
        return self.slots.setdefault(name, len(self.slots))

    def _list(self, items: list) -> int:
        self.lists.append(items)
        return len(self.lists) - 1

    def _flatten(self, s: Stmt) -> list:
        if isinstance(s, Seq):
            return self._flatten(s.first) + self._flatten(s.second)
        idx = len(self.nodes)
        self.nodes.append(s)
        for name in sorted(_assigned(s)):
            self._slot(name)
        if isinstance(s, If):
            self.node_list[idx] = self._list(self._flatten(s.body))
        elif isinstance(s, While):
            self.node_list[idx] = self._list(self._flatten(s.body) + [idx])
        return [idx]

    def point(self, lst: int, pos: int) -> int:
        items = self.lists[lst]
        if len(items) - pos == 1:
            node = items[pos]
            if isinstance(self.nodes[node], Skip):
                return 0
            key = ("node", node)
        else:
            key = ("suffix", lst, pos)
        if key not in self.points:
            self.points[key] = len(self.point_keys)
            self.point_keys.append(key)
        return self.points[key]

    def node_point(self, node: int) -> int:
        if isinstance(self.nodes[node], Skip):
            return 0
        key = ("node", node)
        if key not in self.points:
            self.points[key] = len(self.point_keys)
            self.point_keys.append(key)
        return self.points[key]

    # expressions
    def expr(self, e: Expr) -> str:
        if isinstance(e, Num):
            return _literal(e.value)
        if isinstance(e, Var):
            return f"v{self._slot(e.name)}"
        if isinstance(e, BinOp):
            l, r = self.expr(e.left), self.expr(e.right)
            if e.op in _PY_BINOPS:
                return f"({l} {_PY_BINOPS[e.op]} {r})"
            return f"{'_div' if e.op == '/' else '_power'}({l}, {r})"
        if isinstance(e, Call):
            return f"{_PY_CALLS[e.func]}({', '.join(self.expr(a) for a in e.args)})"
        raise TypeError(f"not an expression: {e!r}")

    def pred(self, p: Pred) -> str:
        if isinstance(p, BoolLit):
            return "True" if p.value else "False"
        if isinstance(p, Cmp):
            return f"(_fin({self.expr(p.left)}) {_PY_CMPS[p.op]} _fin({self.expr(p.right)}))"
        if isinstance(p, And):
            return f"({self.pred(p.left)} and {self.pred(p.right)})"
        if isinstance(p, Or):
            return f"({self.pred(p.left)} or {self.pred(p.right)})"
        if isinstance(p, Not):
            return f"(not {self.pred(p.arg)})"
        raise TypeError(f"not a predicate: {p!r}")

    def source(self) -> str:
        root = self.point(self.root, 0)
        branches = []
        i = 1
        while i < len(self.point_keys):  # points are discovered while emitting
            branches.append((i, self._branch(self.point_keys[i])))
            i += 1
        n = max(len(self.slots), 1)
        init = "\n".join(f"    v{j} = init_vals[{j}]\n    b{j} = init_bound[{j}]"
                         for j in range(n))
        save = "\n".join(f"                row_vals[{j}] = v{j}\n                row_bound[{j}] = b{j}"
                         for j in range(n))
        body = []
        for pid, lines in branches:
            body.append(f"        elif pt == {pid}:")
            body.extend("            " + ln for ln in lines)
        return _TEMPLATE.format(init=init, save=save, root=root, branches="\n".join(body),
                                max_cont=len(self.lists) + 2)

    def _branch(self, key) -> list:
        step = ["if steps >= budget:", "    return 3, weight, steps", "steps += 1"]
        if key[0] == "suffix":
            _, lst, pos = key
            head = self.node_point(self.lists[lst][pos])
            rest = self.point(lst, pos + 1)
            return step + [
                f"cont_pt[sp] = {rest}",
                "cont_k[sp] = th_k + 1",
                "cont_key[sp] = th_key ^ _bit_key(th_k, table)",
                "sp += 1",
                "th_k += 1",
                f"pt = {head}",
            ]
        node = key[1]
        s = self.nodes[node]
        if isinstance(s, Diverge):
            return ["return 2, weight, steps"]
        if isinstance(s, Assign):
            j = self._slot(s.var)
            return step + [f"v{j} = _fin({self.expr(s.expr)})", f"b{j} = 1", "pt = 0"]
        if isinstance(s, Draw):
            j = self._slot(s.var)
            return step + [f"v{j} = _unit(seed_k, th_key)", f"b{j} = 1",
                           "th_key = th_key ^ _bit_key(th_k, table)", "th_k += 1", "pt = 0"]
        if isinstance(s, Observe):
            return step + [f"if {self.pred(s.pred)}:", "    pt = 0", "else:",
                           "    return 1, 0.0, steps"]
        if isinstance(s, Score):
            return step + [f"sv = _fin({self.expr(s.expr)})", "if 0.0 < sv <= 1.0:",
                           "    weight *= sv", "    pt = 0", "else:",
                           "    return 1, 0.0, steps - 1"]
        if isinstance(s, (If, While)):
            target = self.point(self.node_list[node], 0)
            return step + [f"if {self.pred(s.pred)}:", f"    pt = {target}", "else:",
                           "    pt = 0"]
        raise TypeError(f"unexpected node {s!r}")


def _assigned(s: Stmt) -> set:
    if isinstance(s, (Assign, Draw)):
        return {s.var}
    return set()


_TEMPLATE = '''\
import math
import numpy as np
from numba import njit, prange
from preexp._kernel import (_bit_key, _div, _fin, _invcdf_n, _mix, _pdf_n, _power,
                            _softeq_n, _unit)

MAX_CONT = {max_cont}


@njit(cache=True, error_model="numpy")
def run_one(seed, init_vals, init_bound, budget, table, row_vals, row_bound,
            cont_pt, cont_k, cont_key):
{init}
    seed_k = _mix(seed)
    th_k = 0
    th_key = np.uint64(0)
    sp = 0
    weight = 1.0
    steps = 0
    pt = {root}
    while True:
        if pt == 0:
            if sp == 0:
{save}
                return 0, weight, steps
            if steps >= budget:
                return 3, weight, steps
            steps += 1
            sp -= 1
            pt = cont_pt[sp]
            th_k = cont_k[sp]
            th_key = cont_key[sp]
{branches}


def _batch(seeds, init_vals, init_bound, budget, table, chunk,
           out_code, out_weight, out_steps, out_vals, out_bound):
    n = seeds.shape[0]
    nchunks = (n + chunk - 1) // chunk
    for ci in prange(nchunks):
        cont_pt = np.empty(MAX_CONT, dtype=np.int64)
        cont_k = np.empty(MAX_CONT, dtype=np.int64)
        cont_key = np.empty(MAX_CONT, dtype=np.uint64)
        for i in range(ci * chunk, min(n, (ci + 1) * chunk)):
            code, w, steps = run_one(seeds[i], init_vals, init_bound, budget, table,
                                     out_vals[i], out_bound[i], cont_pt, cont_k, cont_key)
            out_code[i] = code
            out_weight[i] = w
            out_steps[i] = steps


# compiled lazily: the threaded variant only when more than one thread is asked for
run_batch = njit(cache=True, error_model="numpy")(_batch)
run_batch_parallel = njit(cache=True, parallel=True, error_model="numpy")(_batch)
'''


def _cache_dir() -> str:
    path = os.environ.get("PREEXP_KERNEL_CACHE") or os.path.join(
        os.path.expanduser("~"), ".cache", "preexp", "kernels")
    os.makedirs(path, exist_ok=True)
    return path


_MODULES: dict = {}


def kernel_source(C: Stmt, extra_vars: Sequence[str] = ()) -> tuple[str, list]:
    em = _Emitter(C, extra_vars)
    src = em.source()
    return src, sorted(em.slots, key=em.slots.get)


def load_kernel(C: Stmt, extra_vars: Sequence[str] = ()):
    """Generated kernel module for ``C`` and its variable slot names."""
    src, names = kernel_source(C, extra_vars)
    digest = hashlib.sha256(src.encode()).hexdigest()[:24]
    if digest not in _MODULES:
        name = f"preexp_kernel_{digest}"
        path = os.path.join(_cache_dir(), name + ".py")
        if not os.path.exists(path):
            tmp = f"{path}.{os.getpid()}.tmp"
            with open(tmp, "w") as fh:
                fh.write(src)
            os.replace(tmp, path)
        spec = importlib.util.spec_from_file_location(name, path)
        module = importlib.util.module_from_spec(spec)
        # numba's on-disk cache re-imports the defining module by name
        sys.modules[name] = module
        spec.loader.exec_module(module)
        _MODULES[digest] = module
    return _MODULES[digest], names


# ------------------------------------------------------------------ batches


@dataclass
class Batch:
    """Per-run results for entropies ``base(seed + i)``, ``i < n``."""

    names: list
    outcome: np.ndarray
    weight: np.ndarray
    steps: np.ndarray
    values: np.ndarray
    bound: np.ndarray

    def column(self, name: str) -> np.ndarray:
        if name not in self.names:
            return np.zeros(len(self.outcome))
        return self.values[:, self.names.index(name)]

    def state(self, i: int) -> dict:
        return {n: float(self.values[i, j]) for j, n in enumerate(self.names)
                if self.bound[i, j]}

    def eval_expr(self, e: Expr) -> np.ndarray:
        """Evaluate ``e`` on every final state (unterminated rows read as zeros)."""
        return eval_rows(e, self.names, self.values)


def run_batch(C: Stmt, sigma: Mapping, n: int, seed: int, budget: int,
              threads: Optional[int] = None, chunk: int = 1024) -> Batch:
    """Run ``C`` from ``sigma`` on the entropies ``base(seed + i)`` for ``i < n``."""
    module, names = load_kernel(C, sorted(sigma))
    width = max(len(names), 1)
    init_vals = np.zeros(width)
    init_bound = np.zeros(width, dtype=np.uint8)
    for name, v in sigma.items():
        init_vals[names.index(name)] = v
        init_bound[names.index(name)] = 1
    seeds = (np.arange(n, dtype=np.uint64) + np.uint64(seed & ent.MASK64))
    out_code = np.zeros(n, dtype=np.int8)
    out_weight = np.zeros(n)
    out_steps = np.zeros(n, dtype=np.int64)
    out_vals = np.zeros((n, width))
    out_bound = np.zeros((n, width), dtype=np.uint8)
    workers = min(threads or numba.config.NUMBA_NUM_THREADS, numba.config.NUMBA_NUM_THREADS)
    args = (seeds, init_vals, init_bound, int(budget), _BIT_KEYS, chunk,
            out_code, out_weight, out_steps, out_vals, out_bound)
    if workers > 1 and n > chunk:
        previous = numba.get_num_threads()
        numba.set_num_threads(workers)
        try:
            module.run_batch_parallel(*args)
        finally:
            numba.set_num_threads(previous)
    else:
        module.run_batch(*args)
    return Batch(names, out_code, out_weight, out_steps,
                 out_vals[:, :len(names)], out_bound[:, :len(names)])
