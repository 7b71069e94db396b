"""Tests for the expression language and second-order evaluation."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fieldtriple_core.errors import (
    DimensionMismatch,
    EvaluationDomainError,
    ParseError,
    ProblemError,
    UnknownFunction,
)
from fieldtriple_core.fields import (
    BinOp,
    Call,
    Expr,
    Neg,
    Num,
    ScalarField,
    Var,
    add,
    constant,
    eval2,
    evaluate,
    fd_oracle,
    free_variables,
    jet_names,
    momentum_names,
    mul,
    parse,
    scale,
    substitute,
    to_source,
    variable,
)

XYZ = ("x1", "x2", "x3")

SMOOTH = [
    "sin(x1)*exp(x2) + x3^3",
    "log(x1^2 + 1) * cos(x2*x3)",
    "sqrt(x1^2 + x2^2 + 1) / (2 + x3)",
    "(x1 + 2)^1.5 * x2 - x3/(x1^2 + 3)",
    "(x1^2 + 1)^-2 + exp(-x2^2) * x3",
    "-x1*x2*x3 + 0.25*x1^4",
]


def random_expr(rng: np.random.Generator, depth: int) -> Expr:
    """A random smooth tree over XYZ; every function argument stays in its domain."""
    if depth == 0 or rng.uniform() < 0.2:
        if rng.uniform() < 0.3:
            return constant(round(float(rng.uniform(-2.0, 2.0)), 3))
        return variable(XYZ[rng.integers(len(XYZ))])
    a = random_expr(rng, depth - 1)
    kind = int(rng.integers(9))
    if kind == 0:
        return Neg(a)
    if kind == 1:
        return add(a, random_expr(rng, depth - 1))
    if kind == 2:
        return BinOp("-", a, random_expr(rng, depth - 1))
    if kind == 3:
        return mul(a, random_expr(rng, depth - 1))
    if kind == 4:
        denominator = add(Num(1.5), BinOp("^", random_expr(rng, depth - 1), Num(2.0)))
        return BinOp("/", a, denominator)
    if kind == 5:
        return BinOp("^", a, Num(2.0))
    if kind == 6:
        func = ["sin", "cos"][rng.integers(2)]
        return scale(float(rng.uniform(-1.0, 1.0)), Call(func, a))
    if kind == 7:
        return Call("exp", Call("sin", a))
    one_plus_square = add(Num(1.0), BinOp("^", a, Num(2.0)))
    return Call(["log", "sqrt"][rng.integers(2)], one_plus_square)


class TestParser:
    def test_precedence(self):
        f = ScalarField.from_source("-x1^2 + 2*x2", XYZ)
        assert evaluate(f, [3.0, 1.0, 0.0]) == -7.0

    def test_power_is_right_associative(self):
        value = evaluate(ScalarField.from_source("2^3^2", ()), [])
        assert value == pytest.approx(512.0)

    def test_subtraction_is_left_associative(self):
        f = ScalarField.from_source("x1 - x2 - x3", XYZ)
        assert evaluate(f, [10.0, 3.0, 2.0]) == 5.0

    def test_tree_shape(self):
        assert parse("sin(x1) * -2") == BinOp("*", Call("sin", Var("x1")), Neg(Num(2.0)))

    def test_reparse_printed_source(self):
        tree = parse("exp(-x1) / (1 + x2^2) - 3e-2*x3")
        assert parse(to_source(tree)) == tree

    def test_scientific_and_leading_dot(self):
        f = ScalarField.from_source(".5*x1 + 1e1", XYZ)
        assert evaluate(f, [2.0, 0.0, 0.0]) == 11.0

    @pytest.mark.parametrize(
        "source, offset",
        [
            ("x1 + * 2", 5),
            ("x1 * (x2 + 2", 12),
            ("x1 + $", 5),
            ("", 0),
            ("(x1))", 4),
        ],
    )
    def test_malformed_input_reports_offset(self, source, offset):
        with pytest.raises(ParseError) as excinfo:
            parse(source)
        assert excinfo.value.offset == offset

    def test_offset_counts_utf8_bytes(self):
        prefix = "٣ + "
        with pytest.raises(ParseError) as excinfo:
            parse(prefix + "$")
        assert excinfo.value.offset == len(prefix.encode("utf-8"))

    def test_overflowing_literal(self):
        with pytest.raises(ParseError) as excinfo:
            parse("x1 + 1e999")
        assert excinfo.value.offset == 5
        assert "finite" in str(excinfo.value)

    def test_unknown_function(self):
        with pytest.raises(UnknownFunction) as excinfo:
            parse("2 * tanh(x1)")
        assert excinfo.value.offset == 4
        assert isinstance(excinfo.value, ParseError)


class TestTreeHelpers:
    def test_free_variables(self):
        assert free_variables(parse("x1*sin(u1_2) + 3")) == {"x1", "u1_2"}

    def test_substitute_is_simultaneous(self):
        tree = substitute(parse("x1 - x2"), {"x1": Var("x2"), "x2": Var("x1")})
        assert evaluate(ScalarField(tree, XYZ), [1.0, 5.0, 0.0]) == 4.0

    def test_unknown_variable_rejected(self):
        with pytest.raises(ProblemError):
            ScalarField.from_source("x1 + y", XYZ)

    def test_point_size_checked(self):
        with pytest.raises(DimensionMismatch):
            evaluate(ScalarField.from_source("x1", XYZ), [1.0, 2.0])

    def test_rebind_extends_layout(self):
        f = ScalarField.from_source("x2", ("x1", "x2")).rebind(("x2", "x1", "x9"))
        assert evaluate(f, [4.0, 0.0, 0.0]) == 4.0

    def test_names(self):
        assert jet_names(2, 2) == ["u1_1", "u1_2", "u2_1", "u2_2"]
        assert momentum_names(1, 3) == ["p1_1", "p1_2", "p1_3"]


class TestEval2:
    @pytest.mark.parametrize("source", SMOOTH)
    def test_matches_finite_differences(self, source, rng):
        f = ScalarField.from_source(source, XYZ)
        for point in rng.uniform(-1.0, 1.0, size=(5, 3)):
            jet = eval2(f, point)
            grad, hess = fd_oracle(f, point)
            assert jet.value == pytest.approx(evaluate(f, point), abs=1e-14)
            assert_allclose(jet.grad, grad, atol=1e-5)
            assert_allclose(jet.hess, hess, atol=1e-3)

    def test_random_trees_match_finite_differences(self):
        rng = np.random.default_rng(7)
        for _ in range(500):
            f = ScalarField(random_expr(rng, 3), XYZ)
            point = rng.uniform(-2.0, 2.0, 3)
            jet = eval2(f, point)
            grad, hess = fd_oracle(f, point)
            size = 1.0 + abs(jet.value) + float(np.max(np.abs(jet.hess)))
            assert jet.value == pytest.approx(evaluate(f, point), rel=1e-12, abs=1e-12)
            assert_allclose(jet.grad, grad, atol=1e-5 * size, err_msg=repr(f))
            assert_allclose(jet.hess, hess, atol=1e-3 * size, err_msg=repr(f))
            assert np.array_equal(jet.hess, jet.hess.T)

    @pytest.mark.parametrize("source", SMOOTH)
    def test_hessian_exactly_symmetric(self, source, rng):
        jet = eval2(ScalarField.from_source(source, XYZ), rng.uniform(-1, 1, 3))
        assert np.array_equal(jet.hess, jet.hess.T)

    def test_polynomial_exact(self):
        jet = eval2(ScalarField.from_source("x1^2*x2 + 3*x3", XYZ), [2.0, -1.0, 0.5])
        assert jet.value == -2.5
        assert_allclose(jet.grad, [-4.0, 4.0, 3.0], rtol=0, atol=0)
        assert_allclose(
            jet.hess, [[-2.0, 4.0, 0.0], [4.0, 0.0, 0.0], [0.0, 0.0, 0.0]], atol=0
        )

    def test_constant_field(self):
        jet = eval2(ScalarField.constant(2.5, XYZ), [0.1, 0.2, 0.3])
        assert jet.value == 2.5
        assert not jet.grad.any() and not jet.hess.any()

    def test_oracle_rejects_bad_step(self):
        with pytest.raises(ProblemError):
            fd_oracle(ScalarField.from_source("x1", XYZ), [0, 0, 0], h=0.0)


class TestDomainErrors:
    @pytest.mark.parametrize(
        "source, point",
        [
            ("log(x1)", [0.0, 1.0, 1.0]),
            ("x1/x2", [1.0, 0.0, 1.0]),
            ("x1^0.5", [-1.0, 0.0, 0.0]),
            ("x2^-1", [1.0, 0.0, 0.0]),
            ("sqrt(x1 - 2)", [1.0, 0.0, 0.0]),
        ],
    )
    def test_raises_with_subexpression(self, source, point):
        with pytest.raises(EvaluationDomainError) as excinfo:
            evaluate(ScalarField.from_source(source, XYZ), point)
        assert excinfo.value.subexpression

    def test_sqrt_at_zero_has_value_but_no_derivative(self):
        f = ScalarField.from_source("sqrt(x1)", XYZ)
        assert evaluate(f, [0.0, 0.0, 0.0]) == 0.0
        with pytest.raises(EvaluationDomainError):
            eval2(f, [0.0, 0.0, 0.0])

    def test_domain_error_is_arithmetic(self):
        assert issubclass(EvaluationDomainError, ArithmeticError)
