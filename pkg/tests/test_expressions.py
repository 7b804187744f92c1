"""Initial-condition expression parser: values, precedence, diagnostics."""

import numpy as np
import pytest

from pfcfem.errors import ExpressionError
from pfcfem.expressions import parse_expression


def hexcos_oracle(x, y):
    # independent six-beam sum with the wavevectors written out
    beams = [(1.0, 0.0), (0.5, np.sqrt(3) / 2), (-0.5, np.sqrt(3) / 2),
             (-1.0, 0.0), (-0.5, -np.sqrt(3) / 2), (0.5, -np.sqrt(3) / 2)]
    return sum(np.cos(kx * x + ky * y) for kx, ky in beams)


def value(src, x, y=None):
    return parse_expression(src)(np.asarray(x, dtype=float),
                                 None if y is None else np.asarray(y))


def test_point_values():
    assert value("exp(x/(4*pi))", 0.0) == pytest.approx(1.0, abs=1e-15)
    assert value("cos(x)+cos(y)", 0.0, 0.0) == pytest.approx(2.0, abs=1e-15)
    assert value("hexcos()", 0.0, 0.0) == pytest.approx(6.0, abs=1e-14)
    assert value("sin(pi/2)", 0.0) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("src,expect", [
    ("-2^2", -4.0),       # unary minus binds looser than the power
    ("2^-2", 0.25),       # but an exponent may itself be negated
    ("2^3^2", 512.0),     # right-associative power
    ("2+3*4", 14.0),
    ("(2+3)*4", 20.0),
    ("1-2-3", -4.0),      # left-associative subtraction
    ("8/4/2", 1.0),
    ("2*3^2", 18.0),
    ("--3", 3.0),
    ("2*pi", 2.0 * np.pi),
    ("2.5e-1*4", 1.0),
])
def test_precedence(src, expect):
    assert value(src, 0.0) == pytest.approx(expect, rel=1e-15)


def test_piecewise_first_match_and_otherwise():
    expr = parse_expression("piecewise((x < 2, 1), (x < 4, 2), 3)")
    x = np.array([1.0, 3.0, 5.0])
    np.testing.assert_array_equal(expr(x), [1.0, 2.0, 3.0])
    # x = 1 satisfies both conditions; the first branch must win
    assert expr(np.array([1.0]))[0] == 1.0


def test_piecewise_greater_than():
    expr = parse_expression("piecewise((x > 0, x), -x)")
    np.testing.assert_allclose(expr(np.array([-2.0, 3.0])), [2.0, 3.0])
    # degenerate otherwise-only form is allowed
    assert value("piecewise(5)", 0.0) == 5.0


def test_hexcos_matches_oracle():
    rng = np.random.default_rng(11)
    x = rng.uniform(-10, 10, 300)
    y = rng.uniform(-10, 10, 300)
    # the parsed form computes its wavevectors as cos(j*pi/3), a last-ulp
    # perturbation of the exact +-1/2 used here, so allow ~6*|x|*eps slack
    np.testing.assert_allclose(value("hexcos()", x, y),
                               hexcos_oracle(x, y), rtol=1e-14, atol=1e-13)


def test_vectorized_shapes_and_broadcast():
    x = np.linspace(0, 1, 17)
    out = value("x*x", x)
    assert out.shape == x.shape
    ones = value("1", x)
    np.testing.assert_array_equal(ones, np.ones_like(x))


def test_variables_and_missing_y():
    expr = parse_expression("cos(x)")
    assert expr.variables == frozenset({"x"})
    expr(np.zeros(3))  # fine without y
    needs_y = parse_expression("cos(x)+cos(y)")
    assert "y" in needs_y.variables
    with pytest.raises(ExpressionError):
        needs_y(np.zeros(3))


@pytest.mark.parametrize("src", [
    "cos(", "2 +", "(1", "1 2", "piecewise((x < 1, 2))", "sin()",
    "sin(x, y)", "piecewise((x, 1), 0)",
])
def test_syntax_errors_carry_position(src):
    with pytest.raises(ExpressionError) as err:
        expr = parse_expression(src)
        expr(np.zeros(2), np.zeros(2))
    assert "position" in str(err.value)


def test_unknown_identifier():
    with pytest.raises(ExpressionError, match="foo"):
        parse_expression("foo(x)")
    with pytest.raises(ExpressionError):
        parse_expression("q + 1")


def test_unexpected_character_position():
    with pytest.raises(ExpressionError) as err:
        parse_expression("2 $ 3")
    assert err.value.position == 2


def test_preset_strings_match_hand_closures():
    rng = np.random.default_rng(5)
    x = rng.uniform(-4 * np.pi, 8 * np.pi, 1000)
    y = rng.uniform(-4 * np.pi, 8 * np.pi, 1000)
    cases = [
        ("exp(x/(4*pi))", lambda x, y: np.exp(x / (4 * np.pi))),
        ("cos(x)", lambda x, y: np.cos(x)),
        ("cos(x)+cos(y)", lambda x, y: np.cos(x) + np.cos(y)),
        ("hexcos()", hexcos_oracle),
        ("piecewise((x < 2*pi, 6*sin(x+pi/2)), (x > 4*pi, hexcos()), 0)",
         lambda x, y: np.select(
             [x < 2 * np.pi, x > 4 * np.pi],
             [6 * np.sin(x + np.pi / 2), hexcos_oracle(x, y)], 0.0)),
    ]
    for src, oracle in cases:
        np.testing.assert_allclose(value(src, x, y), oracle(x, y),
                                   rtol=1e-14, atol=1e-13)


def test_repr_mentions_source():
    assert "cos(x)" in repr(parse_expression("cos(x)"))
