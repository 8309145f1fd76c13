"""Unit tests for weylconn.curvature module.

These tests cover:
- Riemann, Ricci and scalar curvature of the round sphere
- Riemann tensor against finite differences of the Christoffel symbols
- First Bianchi identity and Ricci symmetry of Weyl connections
- Gauge dependence of the scalar curvature and the Einstein tensor
- The same checks on every built-in scenario, and rescaled Weyl pairs
"""

import math

import numpy as np
import pytest
from pytest_cases import parametrize_with_cases

from weylconn.connection import (
    GaugeFunction,
    GaugeMetric,
    levi_civita,
    rescale_pair,
    weyl_connection,
)
from weylconn.curvature import (
    bianchi_residual,
    curvature_tensors,
    ricci,
    ricci_asymmetry,
    riemann,
    scalar_and_einstein,
)
from weylconn.exceptions import InvalidParameterError
from weylconn.expr import Bindings
from weylconn.fields import OneFormField
from weylconn.scenarios import build_deg_cylinder, build_rw_klein, build_rw_torus


def test_sphere_curvature(sphere_metric):
    """Return R^θ_{φθφ} = sin²θ, Ric = g / R² and scalar curvature 2 / R²."""
    binds = Bindings(R=2.0)
    theta = 0.8
    pt = (theta, 0.3)
    conn = levi_civita(sphere_metric)
    tensor = riemann(conn, pt, binds)
    assert tensor[0, 1, 0, 1] == pytest.approx(math.sin(theta) ** 2)
    assert tensor[0, 1, 1, 0] == pytest.approx(-math.sin(theta) ** 2)
    np.testing.assert_allclose(
        ricci(conn, pt, binds), np.diag([1.0, math.sin(theta) ** 2]), atol=1e-12
    )
    scalar, einstein = scalar_and_einstein(conn, sphere_metric, None, 1.0, pt, binds)
    assert scalar == pytest.approx(0.5)
    np.testing.assert_allclose(einstein, np.zeros((2, 2)), atol=1e-12)


def _riemann_from_differences(conn, pt, binds, finite_difference, step=1e-5):
    n = conn.dim
    gamma = conn.christoffel(pt, binds)
    dgamma = finite_difference(lambda p: conn.christoffel(p, binds), pt, step)
    numeric = np.zeros((n, n, n, n))
    for up, k, i, j in np.ndindex(n, n, n, n):
        numeric[up, k, i, j] = (
            dgamma[i, up, j, k]
            - dgamma[j, up, i, k]
            + gamma[up, i, :] @ gamma[:, j, k]
            - gamma[up, j, :] @ gamma[:, i, k]
        )
    return numeric


def test_riemann_against_finite_differences(curved_pair, finite_difference, binds):
    """Match the Riemann tensor built from central differences of Γ."""
    h, psi = curved_pair
    conn = weyl_connection(h, psi)
    pt = np.array([0.2, -0.1, 0.3])
    numeric = _riemann_from_differences(conn, pt, binds, finite_difference)
    np.testing.assert_allclose(riemann(conn, pt, binds), numeric, atol=1e-7)


def test_riemann_antisymmetric_in_last_pair(curved_pair, binds):
    """Swap sign exactly when the last two indices are exchanged."""
    h, psi = curved_pair
    tensor = riemann(weyl_connection(h, psi), (0.1, 0.2, 0.3), binds)
    np.testing.assert_array_equal(tensor, -tensor.swapaxes(2, 3))


def test_bianchi_and_ricci_symmetry(curved_pair, rng, binds):
    """Satisfy the first Bianchi identity and keep Ricci symmetric."""
    h, psi = curved_pair
    conn = weyl_connection(h, psi)
    for pt in rng.uniform(-0.5, 0.5, size=(5, 3)):
        tensor = riemann(conn, pt, binds)
        assert bianchi_residual(tensor) < 1e-10
        assert ricci_asymmetry(np.einsum("ikij->kj", tensor)) < 1e-10


def test_weyl_riemann_matches_local_metric(curved_pair, binds):
    """Equal the Riemann tensor of the Levi-Civita connection of μ⁻¹h."""
    h, psi = curved_pair
    local = GaugeMetric(h, GaugeFunction(psi, (0.0, 0.0, 0.0)))
    pt = (0.2, 0.3, -0.2)
    np.testing.assert_allclose(
        riemann(levi_civita(local), pt, binds),
        riemann(weyl_connection(h, psi), pt, binds),
        atol=1e-8,
    )


@pytest.mark.parametrize("factor", [0.5, 2.0, 10.0])
def test_einstein_gauge_invariance(curved_pair, binds, factor):
    """Scale R with the gauge constant and keep G unchanged."""
    h, psi = curved_pair
    conn = weyl_connection(h, psi)
    pt = (0.3, -0.2, 0.1)
    base = scalar_and_einstein(conn, h, psi, 1.0, pt, binds)
    scaled = scalar_and_einstein(conn, h, psi, factor, pt, binds)
    assert scaled.scalar == pytest.approx(factor * base.scalar, rel=1e-12)
    np.testing.assert_allclose(scaled.einstein, base.einstein, atol=1e-9)


@pytest.mark.parametrize("mu", [0.0, -1.0])
def test_gauge_must_be_positive(polar_metric, binds, mu):
    """Reject non-positive gauge values."""
    with pytest.raises(InvalidParameterError):
        scalar_and_einstein(
            levi_civita(polar_metric), polar_metric, None, mu, (1, 0), binds
        )


def test_curvature_tensors(sphere_metric):
    """Bundle every tensor with the gauge metric used to raise indices."""
    binds = Bindings(R=1.0)
    pt = (1.1, 0.0)
    conn = levi_civita(sphere_metric)
    result = curvature_tensors(conn, sphere_metric, None, 2.0, pt, binds)
    assert result.mu == 2.0
    np.testing.assert_allclose(
        result.gauge_metric, sphere_metric.matrix(np.array(pt), binds) / 2.0
    )
    np.testing.assert_array_equal(result.riemann, riemann(conn, pt, binds))
    np.testing.assert_array_equal(result.ricci, ricci(conn, pt, binds))
    assert result.scalar == pytest.approx(4.0)


def test_scalar_and_einstein_checks_the_pair(curved_pair, polar_metric, binds):
    """Reject a 1-form other than the one the Weyl connection was built from."""
    h, psi = curved_pair
    conn = weyl_connection(h, psi)
    pt = (0.1, 0.2, 0.3)
    with pytest.raises(InvalidParameterError):
        scalar_and_einstein(conn, h, OneFormField.zero(h.coords), 1.0, pt, binds)
    with pytest.raises(InvalidParameterError):
        curvature_tensors(conn, h, OneFormField.zero(h.coords), 1.0, pt, binds)
    with pytest.raises(InvalidParameterError):
        scalar_and_einstein(
            levi_civita(polar_metric), polar_metric, psi, 1.0, (1, 0), binds
        )


def test_scalar_and_einstein_flat(binds):
    """Vanish for Minkowski space in the Robertson-Walker chart."""
    scenario = build_rw_klein(a=0.0, b=0.0)
    result = scalar_and_einstein(
        scenario.connection,
        scenario.h,
        scenario.psi,
        1.0,
        (0.1, 0.2, 0.3, 0.4),
        scenario.binds,
    )
    assert result.scalar == 0.0
    np.testing.assert_array_equal(result.einstein, np.zeros((4, 4)))


class ScenarioCases:
    """Built-in scenarios with the connection they define."""

    def case_rw_klein(self):
        """Klein bottle quotient."""
        return build_rw_klein()

    def case_rw_torus(self):
        """Three-torus quotient with a time-dependent scale factor."""
        return build_rw_torus(S_expr="1 + 0.5*t^2")

    def case_deg_cylinder(self):
        """Degenerate cylinder."""
        return build_deg_cylinder()


@parametrize_with_cases("scenario", cases=ScenarioCases)
def test_scenario_riemann_against_finite_differences(scenario, finite_difference):
    """Match the finite-difference Riemann tensor at 20 sample points."""
    conn, binds = scenario.connection, scenario.binds
    for pt in scenario.samples(20, seed=21):
        numeric = _riemann_from_differences(
            conn, pt, binds, finite_difference, step=1e-4
        )
        assert np.max(np.abs(riemann(conn, pt, binds) - numeric)) < 1e-5


@parametrize_with_cases("scenario", cases=ScenarioCases)
def test_scenario_bianchi_and_einstein_gauge(scenario):
    """Satisfy the Bianchi identity and keep G under constant gauge rescaling."""
    conn, binds = scenario.connection, scenario.binds
    for pt in scenario.samples(100, seed=8):
        assert bianchi_residual(riemann(conn, pt, binds)) < 1e-8
    for pt in scenario.samples(10, seed=9):
        base = scalar_and_einstein(conn, scenario.h, scenario.psi, 1.0, pt, binds)
        for factor in (0.5, 2.0, 10.0):
            scaled = scalar_and_einstein(
                conn, scenario.h, scenario.psi, factor, pt, binds
            )
            np.testing.assert_allclose(scaled.einstein, base.einstein, atol=1e-9)


@pytest.mark.parametrize(
    "alpha", ["2 + sin(2*pi*x)", "exp(0.3*t)*(3 + cos(y*z))", "1 + t^2 + x^2"]
)
def test_rw_klein_rescaled_pair(rw_klein, alpha):
    """Keep Γ and the Ricci tensor for (αh, Ψ + dlog α)."""
    h, psi = rescale_pair(rw_klein.h, rw_klein.psi, alpha)
    rescaled = weyl_connection(h, psi)
    binds = rw_klein.binds
    for pt in rw_klein.samples(10, seed=4):
        np.testing.assert_allclose(
            rescaled.christoffel(pt, binds),
            rw_klein.connection.christoffel(pt, binds),
            atol=1e-8,
        )
        np.testing.assert_allclose(
            ricci(rescaled, pt, binds), ricci(rw_klein.connection, pt, binds), atol=1e-8
        )
