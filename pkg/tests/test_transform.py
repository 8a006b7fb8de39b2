import math
import random

import pytest

from preexp.estimator import estimate_wp
from preexp.opsem import Diverged, Errored, Terminated, run_seed
from preexp.runtime import Postexpectation, State
from preexp.syntax import (And, Cmp, Diverge, Draw, If, Num, Observe, Score, Seq, Var, While,
                           iter_stmts, parse, stmt_vars)
from preexp.transform import approximate, noscore, unfold_while

from programs import ProgramGen, bundled, loop_program


def unfolded_value(C, n, seed, f, liberal):
    out = run_seed(unfold_while(C, n), State(), seed, 100_000)
    if isinstance(out, Terminated):
        return f(out.state) * out.score
    if isinstance(out, Diverged):
        return out.score if liberal else 0.0
    assert isinstance(out, Errored)
    return 0.0


class TestUnfold:
    loop = parse("while (x < 3) { x := x + 1 }")

    def test_depth_zero(self):
        assert unfold_while(self.loop, 0) == Diverge()

    def test_depth_one(self):
        assert unfold_while(self.loop, 1) == If(self.loop.pred, Seq(self.loop.body, Diverge()))

    def test_loop_free_unchanged(self):
        for seed in range(50):
            C = ProgramGen(seed).program()
            assert unfold_while(C, 3) is C

    def test_output_is_loop_free(self):
        nested = parse("while (a < 2) { while (b < 2) { b := b + 1 }; a := a + 1 }")
        out = unfold_while(nested, 2)
        assert not any(isinstance(s, While) for s in iter_stmts(out))

    def test_innermost_first(self):
        nested = parse("while (a < 2) { while (b < 2) { b := b + 1 } }")
        inner = approximate(nested.body, 1)
        assert unfold_while(nested, 1) == If(nested.pred, Seq(inner, Diverge()))

    def test_depth_map(self):
        nested = parse("while (a < 2) { a := a + 1 }; while (b < 2) { b := b + 1 }")
        out = unfold_while(nested, {1: 0})
        assert out == Seq(nested.first, Diverge())

    def test_negative_depth(self):
        with pytest.raises(ValueError):
            unfold_while(self.loop, -1)

    def test_deterministic_loop_converges(self):
        for n in range(6):
            out = run_seed(unfold_while(self.loop, n), State(), 0, 1000)
            if n < 4:
                assert isinstance(out, Diverged)
            else:
                assert out == Terminated(State(x=3.0), 1.0, out.steps)


class TestBrackets:
    """For one entropy, the wp-style value rises and the wlp-style value falls with depth."""

    @pytest.mark.parametrize("name,seeds", [("ex2", 1000)])
    def test_pathwise_bundled(self, name, seeds):
        self._check(bundled(name), Postexpectation.parse("softeq(k, 2)", 1.0), range(seeds))

    @pytest.mark.parametrize("program", range(3))
    def test_pathwise_random_loops(self, program):
        f = Postexpectation.parse("softeq(x, 1)", 1.0)
        self._check(loop_program(program), f, range(5000, 5300))

    @staticmethod
    def _check(C, f, seeds, depths=range(0, 8)):
        for seed in seeds:
            low = [unfolded_value(C, n, seed, f, False) for n in depths]
            high = [unfolded_value(C, n, seed, f, True) for n in depths]
            assert all(a <= b for a, b in zip(low, low[1:]))
            assert all(a >= b for a, b in zip(high, high[1:]))
            assert all(a <= b for a, b in zip(low, high))

    def test_limit_consistency(self):
        checked = 0
        for seed in range(1000):
            C = bundled("ex2") if seed % 2 else loop_program(seed % 7)
            raw = run_seed(C, State(), seed, 2000)
            if not isinstance(raw, Terminated) or raw.state["k"] > 40:
                continue
            iterations = int(raw.state["k"]) + 1
            for extra in (1, 3):
                out = run_seed(unfold_while(C, iterations + extra), State(), seed, 2000)
                assert isinstance(out, Terminated)
                assert out.state == raw.state and out.score == raw.score
                assert out.steps == raw.steps
            checked += 1
        assert checked > 400


class TestNoscore:
    def test_single_score(self):
        out = noscore(Score(Num(0.5)))
        u = out.first.var
        guard = And(And(Cmp("<", Num(0.0), Num(0.5)), Cmp("<=", Num(0.5), Num(1.0))),
                    Cmp("<=", Var(u), Num(0.5)))
        assert out == Seq(Draw(u), Observe(guard))

    def test_score_free_unchanged(self):
        C = parse("x :~ U; if (x < 0.5) { observe(x > 0.1) }")
        assert noscore(C) == C

    def test_fresh_sites(self):
        C = bundled("ex1")
        out = noscore(C, avoid={"q"})
        new = stmt_vars(out) - stmt_vars(C)
        assert len(new) == 2 and "q" not in new
        assert not any(isinstance(s, Score) for s in iter_stmts(out))

    def test_accepted_runs_carry_unit_score(self):
        rng = random.Random(0)
        for i in range(300):
            C = ProgramGen(i).program()
            D = noscore(C)
            fresh = stmt_vars(D) - stmt_vars(C)
            seed = rng.randrange(1 << 30)
            out = run_seed(D, State(), seed, 10_000)
            if isinstance(out, Terminated):
                assert out.score == 1.0
                kept = {k for k in out.state if k not in fresh}
                assert kept <= stmt_vars(C)

    def test_wp_invariance(self):
        C = bundled("ex1")
        f = Postexpectation.parse("a * a")
        a = estimate_wp(C, f, State(), 1_000_000, 11, 1000)
        b = estimate_wp(noscore(C), f, State(), 1_000_000, 12, 1000)
        assert abs(a.mean - b.mean) <= 3 * math.hypot(a.stderr, b.stderr)
