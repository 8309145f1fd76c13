"""Fixtures for weylconn tests."""

from unittest import mock

import numpy as np
import pytest

from weylconn.config import Settings
from weylconn.expr import Bindings, BinOp, Call, Neg, Num, Param, Pow, ScalarExpr, Var
from weylconn.fields import MetricField, OneFormField
from weylconn.scenarios import build_deg_cylinder, build_rw_klein, build_rw_torus

# Coarse RK4 step; the rw connections are constant so the gates still pass.
FAST_STEP = 0.01


@pytest.fixture
def settings():
    """Return settings with a coarse RK4 step and few sample points."""
    return Settings(RK4_STEP=FAST_STEP, SAMPLE_POINTS=8, QUADRATURE_SUBINTERVALS=400)


@pytest.fixture
def mock_logger():
    """Fixture that returns a mock logger object for testing purposes."""
    logger = mock.Mock()
    return logger


@pytest.fixture
def rng():
    """Return a seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def binds():
    """Return empty bindings."""
    return Bindings()


@pytest.fixture(scope="session")
def rw_klein():
    """Return the default Robertson-Walker Klein bottle scenario."""
    return build_rw_klein()


@pytest.fixture(scope="session")
def rw_torus():
    """Return the default Robertson-Walker torus scenario."""
    return build_rw_torus()


@pytest.fixture(scope="session")
def deg_cylinder():
    """Return the degenerate cylinder scenario."""
    return build_deg_cylinder()


@pytest.fixture
def polar_metric():
    """Return the flat metric of the plane in polar coordinates."""
    return MetricField.from_strings(
        [["1", "0"], ["r^2"]], ("r", "phi"), signature=(0, 2)
    )


@pytest.fixture
def sphere_metric():
    """Return the round metric of radius R on the sphere."""
    return MetricField.from_strings(
        [["R^2", "0"], ["R^2*sin(theta)^2"]],
        ("theta", "phi"),
        ("R",),
        signature=(0, 2),
    )


@pytest.fixture
def curved_pair():
    """Return a non-flat metric with a non-constant closed 1-form on R^3."""
    coords = ("x", "y", "z")
    h = MetricField.from_strings(
        [
            ["1 + 0.1*sin(y)", "0.2*x", "0"],
            ["2 + 0.1*cos(x*z)", "0.1"],
            ["1.5 + 0.1*x*y"],
        ],
        coords,
        signature=(0, 3),
    )
    psi = OneFormField.from_strings(
        ["2*x*y", "x^2 + cos(z)", "-y*sin(z)"], coords
    )
    return h, psi


def _central_difference(func, pt, step=1e-5):
    pt = np.asarray(pt, dtype=float)
    slices = []
    for k in range(pt.size):
        offset = np.zeros_like(pt)
        offset[k] = step
        slices.append((func(pt + offset) - func(pt - offset)) / (2 * step))
    return np.array(slices)


@pytest.fixture
def finite_difference():
    """Return a central difference derivative along every coordinate.

    The result has the coordinate index first, followed by the shape of func.
    """
    return _central_difference


def _random_pair(rng):
    coords = ("x", "y", "z")
    c = rng.uniform(-0.3, 0.3, size=6)
    d = rng.uniform(-0.1, 0.1, size=3)
    h = MetricField.from_strings(
        [
            [
                f"2 {c[0]:+.4f}*sin({c[1]:.4f}*x + y)",
                f"{d[0]:.4f}*cos(z)",
                f"{d[1]:.4f}",
            ],
            [f"2 {c[2]:+.4f}*cos(x*z)", f"{d[2]:.4f}*sin(x)"],
            [f"2 {c[3]:+.4f}*x*y {c[4]:+.4f}*z^2"],
        ],
        coords,
        signature=(0, 3),
    )
    a, b, e = np.round(rng.uniform(-1.0, 1.0, size=3), 4)
    # Ψ = dF with F = a sin(xy) + b x z² + e cos(y + z)
    psi = OneFormField.from_strings(
        [
            f"{a:.4f}*y*cos(x*y) {b:+.4f}*z^2",
            f"{a:.4f}*x*cos(x*y) {-e:+.4f}*sin(y + z)",
            f"{2 * b:.4f}*x*z {-e:+.4f}*sin(y + z)",
        ],
        coords,
    )
    return h, psi


@pytest.fixture
def random_pair():
    """Return a factory of random metrics with exact 1-forms on R^3.

    On [-0.5, 0.5]^3 the diagonal entries stay above 1.6 and the off-diagonal
    ones below 0.1, so every metric is Riemannian there.
    """
    return _random_pair


EXPR_COORDS = ("x", "y", "z")
EXPR_PARAMS = ("k",)


def _shifted(func, child):
    return BinOp("+", Num(2.0), Call(func, child))


def _random_node(rng, depth):
    if depth == 0 or rng.random() < 0.2:
        match int(rng.integers(3)):
            case 0:
                return Num(float(np.round(rng.uniform(0.1, 1.5), 3)))
            case 1:
                index = int(rng.integers(len(EXPR_COORDS)))
                return Var(EXPR_COORDS[index], index)
        return Param("k")
    child = _random_node(rng, depth - 1)
    match int(rng.integers(8)):
        case 0:
            return Neg(child)
        case 1:
            op = str(rng.choice(["+", "-", "*"]))
            return BinOp(op, child, _random_node(rng, depth - 1))
        case 2:
            return BinOp("/", child, _shifted("cos", _random_node(rng, depth - 1)))
        case 3:
            return Call(str(rng.choice(["sin", "cos"])), child)
        case 4:
            return Call("exp", Call("sin", child))
        case 5:
            return Call(str(rng.choice(["log", "sqrt"])), _shifted("sin", child))
        case 6:
            base = Call(str(rng.choice(["sin", "cos"])), child)
            return Pow(base, Num(float(rng.integers(2, 4))))
    return Pow(_shifted("cos", child), Num(1.5))


@pytest.fixture
def random_expression():
    """Return a factory of random expressions over x, y, z and the parameter k.

    Logarithms, square roots and fractional powers only see arguments in [1, 3]
    and denominators are 2 + cos(...), so every tree is smooth everywhere. The
    arguments of sin, cos and exp stay moderate on [-1, 1]^3 with k = 0.7.
    """

    def build(rng, depth=4):
        return ScalarExpr(_random_node(rng, depth), EXPR_COORDS, EXPR_PARAMS)

    return build
