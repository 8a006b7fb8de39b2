import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from preexp.opsem import Terminated, run
from preexp.entropy import base
from preexp.runtime import State
from preexp.syntax import (SUGAR, And, Assign, BinOp, BoolLit, Call, Cmp, Diverge, Draw,
                           FlipIf, Fresh, If, IfElse, Not, Num, Observe, Or, ParseError,
                           Return, Score, Seq, Skip, Var, While, desugar, find_return,
                           is_core, iter_stmts, parse, parse_expr, pretty, stmt_vars)

from programs import ProgramGen, bundled_sugared

EX2_TEXT = """
b := 0; k := 0;
while (b = 0) {
  u := U;
  k := k + 1;
  if (u < 1/(k+1)^2) { b := 1; score(k/(k+1)) }
}
"""


class TestParse:
    def test_skip(self):
        assert parse("skip") == Skip()

    def test_counter_loop(self):
        prog = parse("x := 0; while(x < 3){ x := x + 1 }")
        assert prog == Seq(Assign("x", Num(0.0)),
                           While(Cmp("<", Var("x"), Num(3.0)),
                                 Assign("x", BinOp("+", Var("x"), Num(1.0)))))

    def test_example_loop_shape(self):
        prog = parse(EX2_TEXT)
        loops = [s for s in iter_stmts(prog) if isinstance(s, While)]
        draws = [s for s in iter_stmts(prog) if isinstance(s, Draw)]
        assert len(loops) == 1 and len(draws) == 1
        ifs = [s for s in iter_stmts(loops[0].body) if isinstance(s, If)]
        assert len(ifs) == 1
        assert any(isinstance(s, Score) for s in iter_stmts(ifs[0].body))
        assert is_core(prog)

    def test_bundled_matches_listing(self):
        assert desugar(bundled_sugared("ex2")) == parse(EX2_TEXT)

    def test_draw_spellings(self):
        assert parse("x :~ U") == parse("x := U") == parse("x :≈ U") == Draw("x")

    def test_precedence(self):
        assert parse_expr("1 + 2 * 3") == BinOp("+", Num(1.0), BinOp("*", Num(2.0), Num(3.0)))
        assert parse_expr("-2 ^ 2") == BinOp("-", Num(0.0), BinOp("^", Num(2.0), Num(2.0)))
        assert parse_expr("2 ^ 3 ^ 2") == BinOp("^", Num(2.0), BinOp("^", Num(3.0), Num(2.0)))

    def test_predicates(self):
        prog = parse("observe(!(x < 1) && (y >= 2 || z != 0))")
        assert prog == Observe(And(Not(Cmp("<", Var("x"), Num(1.0))),
                                   Or(Cmp(">=", Var("y"), Num(2.0)),
                                      Not(Cmp("=", Var("z"), Num(0.0))))))

    def test_parenthesised_expression_in_comparison(self):
        assert parse("if ((x + 1) * 2 < 3) { skip }") == If(
            Cmp("<", BinOp("*", BinOp("+", Var("x"), Num(1.0)), Num(2.0)), Num(3.0)), Skip())

    def test_builtin_names_are_case_insensitive(self):
        e = parse_expr("Gaussian_inv_cdf(0, 2, u)")
        assert e == Call("gaussian_inv_cdf", (Num(0.0), Num(2.0), Var("u")))

    def test_semicolon_optional_after_block(self):
        assert parse("if (x > 0) { x := 1 } y := 2") == Seq(
            If(Cmp(">", Var("x"), Num(0.0)), Assign("x", Num(1.0))), Assign("y", Num(2.0)))

    def test_sugar_forms(self):
        prog = parse("if (flip(0.25)) { x := 1 } else { x := 2 }; return x")
        assert isinstance(prog.first, FlipIf) and isinstance(prog.second, Return)
        assert isinstance(parse("if (x < 0) { skip } else { diverge }"), IfElse)

    @pytest.mark.parametrize("text,line,col", [
        ("x := ", 1, 6),
        ("x := 1;\ny := (2", 2, 8),
        ("while x < 1 { skip }", 1, 7),
        ("score(1) score(2)", 1, 10),
    ])
    def test_errors_carry_position(self, text, line, col):
        with pytest.raises(ParseError) as info:
            parse(text)
        assert (info.value.line, info.value.col) == (line, col)
        assert info.value.expected

    def test_unknown_builtin(self):
        with pytest.raises(ParseError, match="unknown builtin"):
            parse("x := gamma(1)")

    def test_arity_is_checked(self):
        with pytest.raises(ParseError, match="takes 2 arguments"):
            parse("x := softeq(1)")


class TestDesugar:
    def test_flip(self):
        prog = desugar(FlipIf(Num(0.25), Assign("x", Num(1.0))), Fresh({"x"}, "_u"))
        u = prog.first.var
        assert prog == Seq(Draw(u), If(Cmp("<", Var(u), Num(0.25)), Assign("x", Num(1.0))))
        assert u != "x"

    def test_if_else_runs_one_branch(self):
        # the then-branch falsifies the guard, which must not trigger the else-branch
        sugared = parse("if (x < 0) { x := 0 - x } else { y := 1 }")
        core = desugar(sugared)
        out = run(core, State(x=-2.0), base(0), 100)
        assert isinstance(out, Terminated)
        assert out.state["x"] == 2.0 and "y" not in out.state
        out = run(core, State(x=3.0), base(0), 100)
        assert out.state["x"] == 3.0 and out.state["y"] == 1.0

    def test_flip_else(self):
        core = desugar(parse("if (flip(0.5)) { r := 1 } else { r := 2 }"))
        seen = {run(core, State(), base(s), 100).state["r"] for s in range(40)}
        assert seen == {1.0, 2.0}

    def test_core_is_identity(self):
        for seed in range(50):
            prog = ProgramGen(seed).program()
            assert desugar(prog) is prog

    def test_return_recorded(self):
        sugared = bundled_sugared("epilogue")
        assert find_return(sugared) == Var("t")
        core = desugar(sugared)
        assert is_core(core)
        assert not any(isinstance(s, Return) for s in iter_stmts(core))
        assert desugar(Return(Var("x"))) == Skip()

    def test_fresh_names_avoid_program_variables(self):
        sugared = parse("_u0 := 1; _g0 := 2; if (flip(_u0)) { x := 1 } else { x := 2 }")
        core = desugar(sugared)
        introduced = stmt_vars(core) - stmt_vars(sugared)
        assert introduced and not introduced & stmt_vars(sugared)

    @pytest.mark.parametrize("name", ["ex1", "ex2", "limit", "epilogue", "tortoise",
                                      "tortoise_inv"])
    def test_bundled_programs_desugar_fully(self, name):
        core = desugar(bundled_sugared(name))
        assert not any(isinstance(s, SUGAR) for s in iter_stmts(core))


class TestPretty:
    def test_leaves(self):
        assert pretty(Skip()) == "skip"
        assert pretty(Draw("x")) == "x :~ U"
        assert pretty(Diverge()) == "diverge"

    def test_example_round_trip(self):
        text = pretty(parse(EX2_TEXT))
        assert pretty(parse(text)) == text

    def test_left_nested_sequence_survives(self):
        prog = Seq(Seq(Assign("x", Num(1.0)), Skip()), Score(Num(0.5)))
        assert parse(pretty(prog)) == prog

    def test_negative_literal_base(self):
        prog = Assign("x", BinOp("^", Num(-2.0), Var("y")))
        assert parse(pretty(prog)) == prog

    def test_random_core_round_trip(self):
        for seed in range(300):
            prog = ProgramGen(seed, allow_diverge=True).program()
            assert desugar(parse(pretty(prog))) == prog


# hypothesis-driven round trip over arbitrary core trees
names = st.sampled_from(["x", "y", "k", "_t"])
nums = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False).map(Num)
exprs = st.recursive(
    st.one_of(nums, names.map(Var)),
    lambda sub: st.one_of(
        st.builds(BinOp, st.sampled_from(["+", "-", "*", "/", "^"]), sub, sub),
        st.builds(lambda a, b: Call("softeq", (a, b)), sub, sub),
        st.builds(lambda a, b, c: Call("gaussian_pdf", (a, b, c)), sub, sub, sub)),
    max_leaves=6)
preds = st.recursive(
    st.one_of(st.booleans().map(BoolLit),
              st.builds(Cmp, st.sampled_from(["<", "<=", "=", ">=", ">"]), exprs, exprs)),
    lambda sub: st.one_of(st.builds(And, sub, sub), st.builds(Or, sub, sub),
                          st.builds(Not, sub)),
    max_leaves=4)
stmts = st.recursive(
    st.one_of(st.just(Skip()), st.just(Diverge()), st.builds(Assign, names, exprs),
              names.map(Draw), preds.map(Observe), exprs.map(Score)),
    lambda sub: st.one_of(st.builds(Seq, sub, sub), st.builds(If, preds, sub),
                          st.builds(While, preds, sub)),
    max_leaves=8)


@settings(max_examples=300, deadline=None)
@given(stmts)
def test_round_trip_property(prog):
    assert desugar(parse(pretty(prog))) == prog
