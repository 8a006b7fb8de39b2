"""Command-line front end; every command prints JSON lines on stdout."""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from typing import Optional, Sequence

from . import entropy, estimator, opsem, wpeval
from .runtime import Postexpectation, State
from .syntax import ParseError, desugar, find_return, parse, parse_expr, pretty, pretty_expr
from .transform import noscore, unfold_while

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def bundled_programs() -> list[str]:
    root = resources.files("preexp") / "programs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".pl"))


def read_program(ref: str) -> tuple[str, str]:
    """Source text for a path, falling back to a bundled program of that name."""
    if os.path.isfile(ref):
        with open(ref, encoding="utf-8") as fh:
            return ref, fh.read()
    name = os.path.basename(ref)
    if not name.endswith(".pl"):
        name += ".pl"
    candidate = resources.files("preexp") / "programs" / name
    if candidate.is_file():
        return f"<bundled>/{name}", candidate.read_text(encoding="utf-8")
    raise UsageError(f"no such program: {ref} (bundled: {', '.join(bundled_programs())})")


def load(ref: str, unfold: Optional[int] = None):
    path, text = read_program(ref)
    sugared = parse(text)
    core = desugar(sugared)
    if unfold is not None:
        core = unfold_while(core, unfold)
    return path, core, find_return(sugared)


def _state(text: Optional[str]) -> State:
    if not text:
        return State()
    try:
        return State.from_json(text)
    except (json.JSONDecodeError, ValueError) as exc:
        raise UsageError(f"bad --state: {exc}") from exc


def _nonneg(name: str, value: Optional[int], minimum: int = 0) -> None:
    if value is not None and value < minimum:
        raise UsageError(f"{name} must be at least {minimum}")


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


# ------------------------------------------------------------------ commands


def cmd_check(args) -> None:
    for ref in args.programs:
        path, core, ret = load(ref)
        _emit({"program": path, "core": pretty(core),
               "return": pretty_expr(ret) if ret is not None else None})


def cmd_unfold(args) -> None:
    _nonneg("--depth", args.depth)
    path, core, _ = load(args.program, args.depth)
    _emit({"program": path, "depth": args.depth, "source": pretty(core)})


def cmd_noscore(args) -> None:
    path, core, _ = load(args.program)
    _emit({"program": path, "source": pretty(noscore(core))})


def cmd_run(args) -> None:
    _nonneg("--budget", args.budget, 1)
    _nonneg("--unfold", args.unfold)
    path, core, _ = load(args.program, args.unfold)
    sigma = _state(args.state)
    if args.draws is not None:
        try:
            values = [float(v) for v in args.draws.split(",") if v.strip()]
        except ValueError as exc:
            raise UsageError(f"bad --draws: {exc}") from exc
        theta = entropy.scripted(values)
    else:
        theta = entropy.base(args.seed)
    try:
        out = opsem.run(core, sigma, theta, args.budget, args.seed)
    except entropy.EntropyExhausted as exc:
        raise UsageError(str(exc)) from exc
    record = {"program": path, "outcome": type(out).__name__.lower(), "score": out.score}
    if isinstance(out, opsem.Terminated):
        record.update(state=out.state.as_dict(), steps=out.steps)
    elif isinstance(out, opsem.Diverged):
        record.update(steps=out.detected_at)
    else:
        record.update(steps=out.steps)
    _emit(record)


def _post(text: str, mode: str, bound: Optional[float]) -> Postexpectation:
    if mode in ("wlp", "bracket"):
        bound = 1.0 if bound is None else min(bound, 1.0)
    return Postexpectation(parse_expr(text), bound)


def cmd_estimate(args) -> None:
    _nonneg("--samples", args.samples, 1)
    _nonneg("--budget", args.budget, 1)
    _nonneg("--unfold", args.unfold)
    _nonneg("--threads", args.threads, 1)
    path, core, _ = load(args.program, args.unfold)
    f = _post(args.post, args.mode, args.bound)
    est = estimator.estimate(args.mode, core, f, _state(args.state), args.samples,
                             args.seed, args.budget, args.threads)
    record = {"program": path, "post": args.post, "seed": args.seed, "budget": args.budget}
    record.update(est.as_dict())
    if args.mode == "posterior":
        record["normalizer"] = "shared runs (common random numbers)"
    _emit(record)


def cmd_quad(args) -> None:
    _nonneg("--nodes", args.nodes, 1)
    _nonneg("--depth", args.depth)
    path, core, _ = load(args.program)
    f = _post(args.post, args.mode, args.bound)
    sigma = _state(args.state)
    mode = "wp" if args.mode == "bracket" else args.mode
    q = wpeval.QuadConfig(nodes=args.nodes, max_depth=args.depth, mode=mode,
                          ceiling=args.ceiling)
    record = {"program": path, "post": args.post, "nodes": args.nodes, "depth": args.depth,
              "mode": args.mode}
    if args.mode == "bracket":
        low, high = wpeval.wp_bracket(core, f, sigma, q)
        record.update(low=low, high=high)
    else:
        record["value"] = wpeval.evaluate(core, f, sigma, q)
    _emit(record)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="preexp", description="Evaluate and sample probabilistic while-programs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", help="parse and print the desugared core program")
    c.add_argument("programs", nargs="+")
    c.set_defaults(func=cmd_check)

    c = sub.add_parser("unfold", help="replace loops by bounded approximations")
    c.add_argument("program")
    c.add_argument("--depth", type=int, required=True)
    c.set_defaults(func=cmd_unfold)

    c = sub.add_parser("noscore", help="replace scores by draws and observations")
    c.add_argument("program")
    c.set_defaults(func=cmd_noscore)

    c = sub.add_parser("run", help="execute one run of the small-step machine")
    c.add_argument("program")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--budget", type=int, default=10_000)
    c.add_argument("--state")
    c.add_argument("--draws", help="comma-separated values replayed in draw order")
    c.add_argument("--unfold", type=int)
    c.set_defaults(func=cmd_run)

    c = sub.add_parser("estimate", help="Monte Carlo estimate over entropies")
    c.add_argument("program")
    c.add_argument("--post", default="1")
    c.add_argument("--bound", type=float)
    c.add_argument("--mode", choices=estimator.MODES, default="wp")
    c.add_argument("--samples", type=int, default=100_000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--budget", type=int, default=10_000)
    c.add_argument("--state")
    c.add_argument("--unfold", type=int)
    c.add_argument("--threads", type=int)
    c.set_defaults(func=cmd_estimate)

    c = sub.add_parser("quad", help="structural evaluation by quadrature")
    c.add_argument("program")
    c.add_argument("--post", default="1")
    c.add_argument("--bound", type=float)
    c.add_argument("--mode", choices=("wp", "wlp", "bracket"), default="wp")
    c.add_argument("--nodes", type=int, default=512)
    c.add_argument("--depth", type=int, default=100)
    c.add_argument("--state")
    c.add_argument("--ceiling", type=int, help="leaf-evaluation limit (default from "
                   "PREEXP_COST_CEILING or 1e8)")
    c.set_defaults(func=cmd_quad)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except (UsageError, ParseError, ValueError) as exc:
        print(f"preexp: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (wpeval.InfeasibleQuery, estimator.VanishingNormalizer) as exc:
        print(f"preexp: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
