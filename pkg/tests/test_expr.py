"""Unit tests for weylconn.expr module.

These tests cover:
- Grammar: precedence, associativity, unary minus and powers
- Syntax and identifier errors with positions
- Reserved and duplicate names
- Evaluation domain errors
- Canonical printing and reparsing
- Second-order jets against analytic derivatives and on random trees
- Batched evaluation over stacks of points
- Bindings
"""

import math

import numpy as np
import pytest

from weylconn.exceptions import (
    DimensionMismatchError,
    DomainError,
    ExpressionSyntaxError,
    InvalidParameterError,
    UnboundParameterError,
    UnknownIdentifierError,
)
from weylconn.expr import (
    Bindings,
    Jet2,
    eval_jet2,
    eval_jet2_many,
    evaluate,
    evaluate_many,
    parse,
    to_text,
)

XY = ("x", "y")


@pytest.mark.parametrize(
    "text,point,expected",
    [
        ("x^2 + 2*x*y", (1.0, 2.0), 5.0),
        ("-x^2", (3.0, 0.0), -9.0),
        ("(-x)^2", (3.0, 0.0), 9.0),
        ("2^3^2", (0.0, 0.0), 512.0),
        ("2*3 + 4", (0.0, 0.0), 10.0),
        ("8/2/2", (0.0, 0.0), 2.0),
        ("8 - 2 - 2", (0.0, 0.0), 4.0),
        ("2^-1", (0.0, 0.0), 0.5),
        ("--x", (2.0, 0.0), 2.0),
        ("sin(pi/2)", (0.0, 0.0), 1.0),
        ("sqrt(x*x + y*y)", (3.0, 4.0), 5.0),
        ("log(exp(y))", (0.0, 1.5), 1.5),
        ("1.5e2 + .5", (0.0, 0.0), 150.5),
    ],
)
def test_evaluate(text, point, expected):
    """Evaluate expressions following precedence and associativity rules."""
    e = parse(text, XY)
    assert evaluate(e, point, Bindings()) == pytest.approx(expected, rel=1e-15)


def test_evaluate_with_parameters():
    """Resolve parameters through the bindings."""
    e = parse("a*x + b", XY, ("a", "b"))
    assert evaluate(e, (2.0, 0.0), Bindings(a=3, b=1)) == 7.0
    assert e.free_params == frozenset({"a", "b"})


@pytest.mark.parametrize(
    "text,message,position",
    [
        ("", "Empty expression", 0),
        ("x +", "Unexpected end of expression", 3),
        ("(x", "Expected ')'", 2),
        ("2^x", "Exponent must not depend on coordinates", 1),
        ("x $ y", "Unexpected character '$'", 2),
        ("x y", "Unexpected token 'y'", 2),
        ("sin", "Function 'sin' needs an argument", 0),
        ("*x", "Unexpected token '*'", 0),
        ("1e999", "Number '1e999' is not finite", 0),
        ("x + 2e400", "Number '2e400' is not finite", 4),
    ],
)
def test_syntax_errors(text, message, position):
    """Report syntax errors with their 0-based position."""
    with pytest.raises(ExpressionSyntaxError) as exc:
        parse(text, XY)
    assert message in exc.value.message
    assert exc.value.position == position


@pytest.mark.parametrize("text,name", [("w + 1", "w"), ("foo(x)", "foo")])
def test_unknown_identifier(text, name):
    """Reject names that are neither coordinates, parameters nor built-ins."""
    with pytest.raises(UnknownIdentifierError) as exc:
        parse(text, XY)
    assert exc.value.name == name


def test_parameter_exponent_allowed():
    """Accept exponents built from parameters and literals."""
    e = parse("x^(n + 1)", XY, ("n",))
    assert evaluate(e, (2.0, 0.0), Bindings(n=2)) == 8.0


@pytest.mark.parametrize(
    "coords,params", [(("sin",), ()), (("x",), ("pi",)), (("x", "x"), ())]
)
def test_reserved_and_duplicate_names(coords, params):
    """Reject declarations clashing with built-ins or with each other."""
    with pytest.raises(InvalidParameterError):
        parse("1", coords, params)


@pytest.mark.parametrize(
    "text,point",
    [
        ("log(x)", (0.0, 0.0)),
        ("sqrt(x)", (-1.0, 0.0)),
        ("x/y", (1.0, 0.0)),
        ("x^0.5", (-1.0, 0.0)),
        ("x^-1", (0.0, 0.0)),
        ("exp(x)", (1000.0, 0.0)),
    ],
)
def test_domain_errors(text, point):
    """Raise DomainError outside the domain of the functions."""
    e = parse(text, XY)
    with pytest.raises(DomainError):
        evaluate(e, point, Bindings())
    with pytest.raises(DomainError):
        eval_jet2(e, point, Bindings())


def test_sqrt_jet_at_zero():
    """Evaluate sqrt at zero but refuse to differentiate it there."""
    e = parse("sqrt(x)", XY)
    assert evaluate(e, (0.0, 0.0), Bindings()) == 0.0
    with pytest.raises(DomainError) as exc:
        eval_jet2(e, (0.0, 0.0), Bindings())
    assert "not differentiable" in exc.value.message


def test_unbound_parameter():
    """Name the parameters without a value."""
    e = parse("a*x + b", XY, ("a", "b"))
    with pytest.raises(UnboundParameterError) as exc:
        evaluate(e, (1.0, 1.0), Bindings(a=1))
    assert exc.value.message == "Unbound parameters: b"


def test_dimension_mismatch():
    """Reject points with the wrong number of coordinates."""
    e = parse("x", XY)
    with pytest.raises(DimensionMismatchError):
        evaluate(e, (1.0,), Bindings())


@pytest.mark.parametrize(
    "text,canonical",
    [
        ("(x+y)*y", "(x + y)*y"),
        ("x-(y-x)", "x - (y - x)"),
        ("x-y-x", "x - y - x"),
        ("-(x+y)", "-(x + y)"),
        ("-x^2", "-x^2"),
        ("(-x)^2", "(-x)^2"),
        ("2^-1", "2^-1"),
        ("x/(y*x)", "x/(y*x)"),
        ("(x*y)/x", "x*y/x"),
        ("2^(3^2)", "2^3^2"),
        ("(2^3)^2", "(2^3)^2"),
        ("sin((x))", "sin(x)"),
        ("1.5", "1.5"),
    ],
)
def test_canonical_text(text, canonical):
    """Print with minimal parentheses and reparse to the same tree."""
    e = parse(text, XY)
    assert e.text == canonical
    assert str(e) == canonical
    assert parse(e.text, XY).root == e.root


def test_canonical_text_of_pi_reparses_exactly():
    """Print literal values with enough digits to round-trip."""
    e = parse("pi*x/3", XY)
    again = parse(e.text, XY)
    assert again.root == e.root
    point = (1.0, 0.0)
    assert evaluate(again, point, Bindings()) == evaluate(e, point, Bindings())


def test_depends_on_coords():
    """Flag expressions whose value changes with the point."""
    assert parse("x*a", XY, ("a",)).depends_on_coords
    assert not parse("a^2 + pi", XY, ("a",)).depends_on_coords


def test_jet_against_analytic_derivatives():
    """Match the analytic gradient and Hessian of a mixed expression."""
    e = parse("sin(x)*exp(y) + x^3/y", XY)
    x, y = 0.7, 1.3
    jet = eval_jet2(e, (x, y), Bindings())
    grad = [
        math.cos(x) * math.exp(y) + 3 * x**2 / y,
        math.sin(x) * math.exp(y) - x**3 / y**2,
    ]
    hess = [
        [
            -math.sin(x) * math.exp(y) + 6 * x / y,
            math.cos(x) * math.exp(y) - 3 * x**2 / y**2,
        ],
        [
            math.cos(x) * math.exp(y) - 3 * x**2 / y**2,
            math.sin(x) * math.exp(y) + 2 * x**3 / y**3,
        ],
    ]
    np.testing.assert_allclose(jet.grad, grad, rtol=1e-13)
    np.testing.assert_allclose(jet.hess, hess, rtol=1e-12)


@pytest.mark.parametrize(
    "text",
    [
        "sin(x)*exp(y) + x^3/y",
        "log(1 + x^2)*cos(y) - sqrt(2 + y)",
        "(x - y)^4/(1 + x*x)",
        "-x^3 + 2^-1*y",
        "exp(-x*y)/(2 + sin(x))",
    ],
)
def test_jet_value_matches_evaluate(rng, text):
    """Return bit-identical values from evaluate and eval_jet2."""
    e = parse(text, XY)
    for point in rng.uniform(-1.0, 1.0, size=(20, 2)):
        assert eval_jet2(e, point, Bindings()).value == evaluate(e, point, Bindings())


@pytest.mark.parametrize(
    "text",
    [
        "log(1 + x^2)*cos(y) - sqrt(2 + y)",
        "(x - y)^4/(1 + x*x)",
        "exp(-x*y)/(2 + sin(x))",
    ],
)
def test_jet_against_finite_differences(finite_difference, text):
    """Match the jets with central differences of evaluate."""
    e = parse(text, XY)
    point = np.array([0.3, -0.4])
    jet = eval_jet2(e, point, Bindings())

    def value(pt):
        return np.array(evaluate(e, pt, Bindings()))

    def gradient(pt):
        return eval_jet2(e, pt, Bindings()).grad

    np.testing.assert_allclose(finite_difference(value, point), jet.grad, atol=1e-8)
    np.testing.assert_allclose(
        finite_difference(gradient, point), jet.hess, atol=1e-8
    )


def test_jet_negative_base_integer_power():
    """Differentiate integer powers of negative values."""
    jet = eval_jet2(parse("x^3", XY), (-2.0, 0.0), Bindings())
    assert jet.value == -8.0
    np.testing.assert_array_equal(jet.grad, [12.0, 0.0])
    np.testing.assert_array_equal(jet.hess, [[-12.0, 0.0], [0.0, 0.0]])


def test_jet_zero_power():
    """Treat x^0 as the constant 1."""
    jet = eval_jet2(parse("x^0", XY), (5.0, 0.0), Bindings())
    assert jet.value == 1.0
    assert not jet.grad.any()


def test_jet_division_by_zero():
    """Raise DomainError when dividing jets by zero."""
    with pytest.raises(DomainError):
        Jet2.variable(1.0, 0, 2) / Jet2.constant(0.0, 2)


def test_bindings():
    """Behave as an immutable mapping with helpers."""
    binds = Bindings({"a": 1}, b=2)
    assert dict(binds) == {"a": 1.0, "b": 2.0}
    assert len(binds) == 2
    assert binds.merged(b=3).as_dict() == {"a": 1.0, "b": 3.0}
    assert binds["b"] == 2.0
    assert "Bindings" in repr(binds)
    binds.require(["a"])
    with pytest.raises(UnboundParameterError):
        binds.require(["a", "c"])


def _relative_error(numeric, exact):
    scale = max(1.0, float(np.max(np.abs(exact))))
    return float(np.max(np.abs(numeric - exact))) / scale


def test_random_jets_against_finite_differences(random_expression, finite_difference):
    """Match gradients and Hessians of 1000 random trees with central differences."""
    rng = np.random.default_rng(2024)
    binds = Bindings(k=0.7)
    for _ in range(1000):
        e = random_expression(rng)
        point = rng.uniform(-1.0, 1.0, size=3)
        jet = eval_jet2(e, point, binds)

        def value(pt, e=e):
            return np.array(evaluate(e, pt, binds))

        def gradient(pt, e=e):
            return eval_jet2(e, pt, binds).grad

        assert _relative_error(finite_difference(value, point), jet.grad) < 1e-5, e
        assert _relative_error(finite_difference(gradient, point), jet.hess) < 1e-5, e


def test_random_trees_reparse_identically(random_expression):
    """Parse the canonical text of random trees back into the same tree."""
    rng = np.random.default_rng(99)
    for _ in range(300):
        e = random_expression(rng, depth=5)
        parsed = parse(to_text(e.root), e.coords, e.params)
        assert parsed.root == e.root, e.text
        assert parsed.text == e.text


def test_batched_jets_match_pointwise(random_expression):
    """Return the pointwise values, gradients and Hessians for each row."""
    rng = np.random.default_rng(5)
    binds = Bindings(k=0.7)
    points = rng.uniform(-1.0, 1.0, size=(16, 3))
    for _ in range(100):
        e = random_expression(rng)
        batch = eval_jet2_many(e, points, binds)
        jets = [eval_jet2(e, pt, binds) for pt in points]
        assert batch.value.shape == (16,)
        assert batch.hess.shape == (16, 3, 3)
        np.testing.assert_allclose(
            batch.value, [jet.value for jet in jets], rtol=1e-9, atol=1e-9
        )
        np.testing.assert_allclose(
            batch.grad, [jet.grad for jet in jets], rtol=1e-9, atol=1e-9
        )
        np.testing.assert_allclose(
            batch.hess, [jet.hess for jet in jets], rtol=1e-9, atol=1e-9
        )
        np.testing.assert_allclose(
            evaluate_many(e, points, binds), batch.value, rtol=1e-12, atol=1e-12
        )


def test_batched_constant_and_errors():
    """Broadcast constants and reject bad shapes or points outside the domain."""
    points = np.array([[1.0, 2.0], [3.0, -1.0]])
    np.testing.assert_array_equal(
        evaluate_many(parse("2*pi", XY), points, Bindings()), [2 * math.pi] * 2
    )
    jets = eval_jet2_many(parse("x*y", XY), points, Bindings())
    np.testing.assert_array_equal(jets.grad, [[2.0, 1.0], [-1.0, 3.0]])
    np.testing.assert_array_equal(jets.hess[1], [[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(DimensionMismatchError):
        evaluate_many(parse("x", XY), np.zeros(2), Bindings())
    with pytest.raises(DomainError):
        evaluate_many(parse("log(y)", XY), points, Bindings())
    with pytest.raises(DomainError):
        eval_jet2_many(parse("1/(x - 3)", XY), points, Bindings())
