"""Unit tests for weylconn.connection module.

These tests cover:
- Levi-Civita symbols of known metrics
- Weyl connection: defining equation, reduction to Levi-Civita and rescaling
- Analytic Christoffel derivatives against finite differences
- Closedness and chart checks
- Explicit tables
- Deck equivariance and parallel residuals
- Local gauge and the scaled local metric
- Batched Christoffel symbols over stacks of points
"""

import math

import numpy as np
import pytest
from pytest_cases import parametrize_with_cases

from weylconn.connection import (
    ExplicitConnection,
    GaugeFunction,
    GaugeMetric,
    LeviCivitaConnection,
    Provenance,
    WeylConnection,
    covariant_derivative,
    deck_equivariance_residual,
    explicit_connection,
    levi_civita,
    local_gauge,
    nabla_h_residual,
    parallel_residual,
    rescale_pair,
    weyl_connection,
)
from weylconn.exceptions import ClosednessError, InvalidParameterError
from weylconn.expr import Bindings
from weylconn.fields import DeckMap, MetricField, OneFormField
from weylconn.scenarios import build_deg_cylinder, build_rw_klein, build_rw_torus
from weylconn.transport import PolylineCurve, Segment

XY = ("x", "y")


def test_levi_civita_polar(polar_metric, binds):
    """Return Γ^r_φφ = -r and Γ^φ_rφ = 1/r."""
    conn = levi_civita(polar_metric)
    assert isinstance(conn, LeviCivitaConnection)
    gamma = conn.christoffel((2.0, 0.4), binds)
    expected = np.zeros((2, 2, 2))
    expected[0, 1, 1] = -2.0
    expected[1, 0, 1] = expected[1, 1, 0] = 0.5
    np.testing.assert_allclose(gamma, expected, atol=1e-15)


def test_levi_civita_sphere(sphere_metric):
    """Return the symbols of the round sphere, independent of the radius."""
    theta = 0.9
    gamma = levi_civita(sphere_metric).christoffel((theta, 0.2), Bindings(R=3.0))
    np.testing.assert_allclose(gamma[0, 1, 1], -math.sin(theta) * math.cos(theta))
    np.testing.assert_allclose(gamma[1, 0, 1], math.cos(theta) / math.sin(theta))
    np.testing.assert_array_equal(gamma, gamma.swapaxes(1, 2))


def test_str_names_provenance(polar_metric):
    """Print the provenance and the chart."""
    conn = levi_civita(polar_metric)
    assert conn.provenance is Provenance.LEVI_CIVITA
    assert str(conn) == "levi_civita connection on (r, phi)"


def test_weyl_satisfies_defining_equation(curved_pair, rng, binds):
    """Satisfy ∇h = h ⊗ Ψ at random points."""
    h, psi = curved_pair
    conn = weyl_connection(h, psi)
    assert isinstance(conn, WeylConnection)
    for pt in rng.uniform(-0.5, 0.5, size=(10, 3)):
        assert nabla_h_residual(conn, h, psi, pt, binds) < 1e-12


def test_weyl_defining_equation_random_pairs(random_pair, rng, binds):
    """Satisfy ∇h = h ⊗ Ψ for random metrics and exact forms."""
    for _ in range(50):
        h, psi = random_pair(rng)
        conn = weyl_connection(h, psi)
        for pt in rng.uniform(-0.5, 0.5, size=(2, 3)):
            assert nabla_h_residual(conn, h, psi, pt, binds) < 1e-9


def test_weyl_with_zero_form_is_levi_civita(curved_pair, binds):
    """Reduce to the Levi-Civita connection when Ψ vanishes."""
    h, _ = curved_pair
    pt = (0.1, 0.2, -0.3)
    weyl = weyl_connection(h, OneFormField.zero(h.coords))
    np.testing.assert_allclose(
        weyl.christoffel(pt, binds), levi_civita(h).christoffel(pt, binds), atol=1e-15
    )


def test_weyl_invariant_under_rescaling(curved_pair, rng, binds):
    """Return the same connection for (αh, Ψ + dlog α)."""
    h, psi = curved_pair
    scaled_h, scaled_psi = rescale_pair(h, psi, "2 + sin(x*y) + z^2")
    original = weyl_connection(h, psi)
    rescaled = weyl_connection(scaled_h, scaled_psi)
    for pt in rng.uniform(-0.5, 0.5, size=(5, 3)):
        np.testing.assert_allclose(
            rescaled.christoffel(pt, binds), original.christoffel(pt, binds), atol=1e-12
        )


@pytest.mark.parametrize("kind", ["levi_civita", "weyl"])
def test_christoffel_jet_against_finite_differences(
    curved_pair, finite_difference, binds, kind
):
    """Match analytic ∂Γ with central differences of Γ."""
    h, psi = curved_pair
    conn = levi_civita(h) if kind == "levi_civita" else weyl_connection(h, psi)
    pt = np.array([0.3, -0.2, 0.4])
    gamma, dgamma = conn.christoffel_jet(pt, binds)
    np.testing.assert_allclose(gamma, conn.christoffel(pt, binds), atol=1e-15)
    numeric = finite_difference(lambda p: conn.christoffel(p, binds), pt)
    np.testing.assert_allclose(dgamma, numeric, atol=1e-8)


def test_weyl_rejects_non_closed_form(binds):
    """Raise ClosednessError when Ψ is not closed at the point."""
    h = MetricField.from_strings([["1", "0"], ["1"]], XY, signature=(0, 2))
    psi = OneFormField.from_strings(["-y", "x"], XY)
    conn = weyl_connection(h, psi)
    with pytest.raises(ClosednessError):
        conn.christoffel((0.0, 0.0), binds)
    with pytest.raises(ClosednessError):
        conn.christoffel_jet((0.0, 0.0), binds)


def test_weyl_rejects_other_chart(polar_metric):
    """Reject pairs declared over different coordinates."""
    with pytest.raises(InvalidParameterError):
        weyl_connection(polar_metric, OneFormField.zero(XY))


def test_explicit_table_matches_levi_civita(polar_metric, binds):
    """Evaluate a table equal to the polar Levi-Civita symbols."""
    conn = explicit_connection(("r", "phi"), (), {(0, 1, 1): "-r", (1, 1, 0): "1/r"})
    assert isinstance(conn, ExplicitConnection)
    assert conn.provenance is Provenance.EXPLICIT_TABLE
    pt = (1.5, 0.0)
    np.testing.assert_allclose(
        conn.christoffel(pt, binds),
        levi_civita(polar_metric).christoffel(pt, binds),
        atol=1e-15,
    )
    _, dgamma = conn.christoffel_jet(pt, binds)
    assert dgamma[0, 0, 1, 1] == -1.0
    assert dgamma[0, 1, 0, 1] == dgamma[0, 1, 1, 0] == pytest.approx(-1 / 2.25)


@pytest.mark.parametrize(
    "table",
    [
        {(1, 0, 1): "1/r", (1, 1, 0): "2/r"},
        {(2, 0, 0): "1"},
    ],
)
def test_explicit_table_errors(table):
    """Reject asymmetric tables and indices out of range."""
    with pytest.raises(InvalidParameterError):
        explicit_connection(("r", "phi"), (), table)


def test_covariant_derivative_of_metric_vanishes(curved_pair, binds):
    """Keep the metric parallel for its Levi-Civita connection."""
    h, _ = curved_pair
    pt = (0.2, 0.1, 0.0)
    assert parallel_residual(levi_civita(h), h, pt, binds) < 1e-13
    assert covariant_derivative(levi_civita(h), h, pt, binds).shape == (3, 3, 3)


def test_deck_equivariance(binds):
    """Commute with deck maps leaving the metric invariant."""
    h = MetricField.from_strings(
        [["1 + y^2", "0"], ["2 + cos(x)"]], XY, signature=(0, 2)
    )
    conn = levi_civita(h)
    flip = DeckMap(np.diag([1.0, -1.0]), np.array([0.0, 0.0]))
    shift = DeckMap.shift([2 * math.pi, 0.0])
    pt = (0.4, 0.7)
    assert deck_equivariance_residual(conn, flip, pt, binds) < 1e-14
    assert deck_equivariance_residual(conn, shift, pt, binds) < 1e-14
    assert deck_equivariance_residual(conn, DeckMap.shift([1.0, 0.0]), pt, binds) > 0.1


def test_local_gauge_of_constant_form(binds):
    """Integrate a constant form into an exponential gauge."""
    psi = OneFormField.from_strings(["1", "0"], XY)
    gauge = GaugeFunction(psi, (0.0, 0.0), scale=2.0)
    assert gauge.value((0.0, 0.0), binds) == 2.0
    assert gauge.value((1.5, 2.0), binds) == pytest.approx(2.0 * math.exp(1.5))
    path = PolylineCurve([[0.0, 0.0], [0.0, 1.0], [1.5, 2.0]])
    assert gauge.value((1.5, 2.0), binds, path) == pytest.approx(2.0 * math.exp(1.5))


def test_local_gauge_rejects_wrong_path(binds):
    """Reject paths not joining the basepoint to the point."""
    psi = OneFormField.from_strings(["1", "0"], XY)
    with pytest.raises(InvalidParameterError):
        local_gauge(psi, (0.0, 0.0), (1.0, 0.0), Segment((0.0, 0.0), (2.0, 0.0)), binds)
    with pytest.raises(InvalidParameterError):
        GaugeFunction(psi, (0.0, 0.0), scale=0.0)


def test_gauge_metric_levi_civita_is_weyl(curved_pair, binds):
    """Return the Weyl connection as Levi-Civita of μ⁻¹h."""
    h, psi = curved_pair
    gauge = GaugeFunction(psi, (0.0, 0.0, 0.0))
    local = GaugeMetric(h, gauge)
    pt = (0.3, 0.2, -0.1)
    np.testing.assert_allclose(
        levi_civita(local).christoffel(pt, binds),
        weyl_connection(h, psi).christoffel(pt, binds),
        atol=1e-10,
    )
    np.testing.assert_allclose(
        local.matrix(pt, binds), local.jets(pt, binds).value, rtol=1e-15
    )


def test_local_gauge_stores_path(binds):
    """Integrate along the stored path and reject paths leaving elsewhere."""
    psi = OneFormField.from_strings(["y", "x"], XY)
    path = PolylineCurve([[0.0, 0.0], [1.0, 0.0], [1.0, 2.0]])
    gauge = GaugeFunction(psi, (0.0, 0.0), scale=3.0, path=path)
    assert gauge.path is path
    # Ψ = d(xy), so μ(1, 2) = 3 exp(2) along any path
    assert gauge.value((1.0, 2.0), binds) == pytest.approx(3.0 * math.exp(2.0))
    assert gauge.value((0.5, 0.5), binds) == pytest.approx(3.0 * math.exp(0.25))
    assert GaugeFunction(psi, (0.0, 0.0)).path is None
    with pytest.raises(InvalidParameterError):
        GaugeFunction(psi, (0.0, 0.0), path=Segment((1.0, 0.0), (1.0, 2.0)))


@pytest.mark.parametrize("kind", ["levi_civita", "weyl", "gauge"])
def test_christoffel_many_matches_pointwise(curved_pair, rng, binds, kind):
    """Stack the pointwise symbols along a leading axis."""
    h, psi = curved_pair
    match kind:
        case "levi_civita":
            conn = levi_civita(h)
        case "weyl":
            conn = weyl_connection(h, psi)
        case _:
            conn = levi_civita(GaugeMetric(h, GaugeFunction(psi, (0.0, 0.0, 0.0))))
    points = rng.uniform(-0.5, 0.5, size=(7, 3))
    batch = conn.christoffel_many(points, binds)
    assert batch.shape == (7, 3, 3, 3)
    for pt, gamma in zip(points, batch, strict=True):
        np.testing.assert_allclose(gamma, conn.christoffel(pt, binds), atol=1e-12)


def test_christoffel_many_explicit(polar_metric, binds):
    """Evaluate every table entry at each point of the stack."""
    conn = explicit_connection(
        ("r", "phi"), (), {(0, 1, 1): "-r", (1, 0, 1): "1/r", (1, 1, 0): "1/r"}
    )
    points = np.array([[1.0, 0.0], [2.0, 0.5], [4.0, -1.0]])
    batch = conn.christoffel_many(points, binds)
    np.testing.assert_allclose(
        batch, levi_civita(polar_metric).christoffel_many(points, binds), atol=1e-14
    )
    np.testing.assert_array_equal(batch[:, 0, 1, 1], [-1.0, -2.0, -4.0])


def test_weyl_christoffel_many_rejects_non_closed_form(binds):
    """Report the first point where a stacked form is not closed."""
    h = MetricField.from_strings([["1", "0"], ["1"]], XY, signature=(0, 2))
    psi = OneFormField.from_strings(["-y", "x"], XY)
    with pytest.raises(ClosednessError):
        weyl_connection(h, psi).christoffel_many(np.zeros((3, 2)), binds)


class ScenarioCases:
    """Built-in scenarios with the connection they define."""

    def case_rw_klein(self):
        """Klein bottle quotient."""
        return build_rw_klein()

    def case_rw_torus(self):
        """Three-torus quotient."""
        return build_rw_torus()

    def case_deg_cylinder(self):
        """Degenerate cylinder."""
        return build_deg_cylinder()


@parametrize_with_cases("scenario", cases=ScenarioCases)
def test_scenario_deck_equivariance(scenario):
    """Commute with every generator at 100 sample points."""
    points = scenario.samples(100, seed=17)
    for phi in scenario.spec.generators:
        residual = max(
            deck_equivariance_residual(scenario.connection, phi, pt, scenario.binds)
            for pt in points
        )
        assert residual < 1e-10


def test_rw_torus_equivariant_under_any_translation():
    """Commute with arbitrary translations when the gauge is constant."""
    shift = DeckMap.shift([0.0, 0.3, 0.7, 0.2])
    scenario = build_rw_torus()
    for pt in scenario.samples(100, seed=3):
        assert (
            deck_equivariance_residual(scenario.connection, shift, pt, scenario.binds)
            < 1e-10
        )
    varying = build_rw_torus(alpha_expr="2 + sin(2*pi*x)")
    residual = max(
        deck_equivariance_residual(varying.connection, shift, pt, varying.binds)
        for pt in varying.samples(20, seed=3)
    )
    assert residual > 1e-3
