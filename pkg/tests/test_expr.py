import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from renewnet.expr import (
    BinOp,
    Call,
    EvalError,
    Neg,
    Num,
    ParseError,
    UnknownVariableError,
    Var,
    check_bounds,
    eval_array,
    eval_expr,
    free_vars,
    parse_expr,
    pretty,
    substitute,
)


class TestParse:
    def test_simple_product(self):
        assert parse_expr("2*w", {"w"}) == BinOp("*", Num(2.0), Var("w"))

    def test_linear_mortality_form(self):
        # the sold-branch mortality -(a - abar)/2 at abar = 1
        ast = parse_expr("-(a-1)/2", {"a"})
        assert eval_expr(ast, {"a": 2.0}) == pytest.approx(-0.5)

    def test_unclosed_paren(self):
        with pytest.raises(ParseError) as err:
            parse_expr("min(0.7*w1, 0.3*w2", {"w1", "w2"})
        assert err.value.position >= 0

    def test_unknown_variable_named(self):
        with pytest.raises(UnknownVariableError) as err:
            parse_expr("2*q", {"w"})
        assert err.value.name == "q"

    def test_empty(self):
        with pytest.raises(ParseError):
            parse_expr("   ", {"x"})

    def test_bad_arity(self):
        with pytest.raises(ParseError):
            parse_expr("min(1)", set())

    def test_unknown_function(self):
        with pytest.raises(ParseError):
            parse_expr("tan(1)", set())

    def test_error_offset_is_byte_position(self):
        with pytest.raises(ParseError) as err:
            parse_expr("1 + $", set())
        assert err.value.position == 4


class TestEval:
    def test_min_arithmetic(self):
        e = parse_expr("min(0.7*w1,0.3*w2)", {"w1", "w2"})
        assert eval_expr(e, {"w1": 1.0, "w2": 1.0}) == pytest.approx(0.3)

    def test_division_by_zero(self):
        e = parse_expr("1/x", {"x"})
        with pytest.raises(EvalError):
            eval_expr(e, {"x": 0.0})

    def test_zero_to_negative_power(self):
        e = parse_expr("x^-1", {"x"})
        with pytest.raises(EvalError):
            eval_expr(e, {"x": 0.0})

    def test_precedence(self):
        assert eval_expr(parse_expr("2+3*4", set()), {}) == 14.0
        assert eval_expr(parse_expr("2^3^2", set()), {}) == 512.0
        assert eval_expr(parse_expr("-2^2", set()), {}) == -4.0

    def test_functions(self):
        assert eval_expr(parse_expr("exp(0)", set()), {}) == 1.0
        assert eval_expr(parse_expr("abs(-3)", set()), {}) == 3.0
        assert eval_expr(parse_expr("max(2,5)", set()), {}) == 5.0
        assert eval_expr(parse_expr("sin(0)+cos(0)", set()), {}) == 1.0

    def test_array_broadcast(self):
        e = parse_expr("x^2+t", {"x", "t"})
        out = eval_array(e, {"x": np.array([1.0, 2.0]), "t": 0.5})
        assert np.allclose(out, [1.5, 4.5])

    def test_array_nonfinite_rejected(self):
        e = parse_expr("exp(x)", {"x"})
        with pytest.raises(EvalError):
            eval_array(e, {"x": np.array([1.0, 1e9])})


class TestBounds:
    def test_constant(self):
        rep = check_bounds(parse_expr("1", set()), {"t": (0, 1), "x": (0, 1)}, 100)
        assert rep.min_seen == rep.max_seen == 1.0
        assert rep.samples_used == 100

    def test_mortality_range(self):
        rep = check_bounds(parse_expr("-(a-1)/2", {"a"}), {"a": (1.0, 2.0)}, 64)
        assert rep.min_seen == pytest.approx(-0.5)
        assert rep.max_seen == pytest.approx(0.0)

    def test_plane(self):
        # corners of the lattice are always sampled
        rep = check_bounds(parse_expr("x-t", {"x", "t"}), {"x": (0, 1), "t": (0, 1)}, 100)
        assert rep.min_seen == -1.0
        assert rep.max_seen == 1.0

    def test_failure_reports_point(self):
        with pytest.raises(EvalError) as err:
            check_bounds(parse_expr("1/(x-0.5)", {"x"}), {"x": (0.0, 1.0)}, 3)
        assert "0.5" in str(err.value)


class TestAstTools:
    def test_substitute_numbers(self):
        e = parse_expr("theta*w1", {"theta", "w1"})
        out = substitute(e, {"theta": 0.77})
        assert free_vars(out) == frozenset({"w1"})
        assert eval_expr(out, {"w1": 2.0}) == pytest.approx(1.54)

    def test_substitute_expression(self):
        e = parse_expr("x^2", {"x"})
        out = substitute(e, {"x": parse_expr("x+1", {"x"})})
        assert eval_expr(out, {"x": 2.0}) == 9.0

    def test_free_vars(self):
        e = parse_expr("min(t*w1, w2)-exp(w1)", {"t", "w1", "w2"})
        assert free_vars(e) == frozenset({"t", "w1", "w2"})


# hypothesis strategy over ASTs restricted to the declared variables
_names = st.sampled_from(["x", "t", "w1"])
_leaf = st.one_of(
    st.floats(min_value=0.0, max_value=100.0, allow_nan=False).map(Num),
    _names.map(Var),
)


def _branch(children):
    return st.one_of(
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda t: BinOp(*t)),
        children.map(Neg),
        st.tuples(st.sampled_from(["min", "max"]), children, children).map(
            lambda t: Call(t[0], (t[1], t[2]))
        ),
        st.tuples(st.sampled_from(["exp", "abs", "sin", "cos"]), children).map(
            lambda t: Call(t[0], (t[1],))
        ),
    )


_asts = st.recursive(_leaf, _branch, max_leaves=25)


@given(_asts)
def test_pretty_round_trips(ast):
    assert parse_expr(pretty(ast), {"x", "t", "w1"}) == ast


@given(
    st.floats(min_value=-50, max_value=50, allow_nan=False),
    st.floats(min_value=-50, max_value=50, allow_nan=False),
)
def test_eval_never_returns_nonfinite(a, b):
    e = parse_expr("x/(1+abs(t))+x*t-min(x,t)", {"x", "t"})
    out = eval_expr(e, {"x": a, "t": b})
    assert math.isfinite(out)
