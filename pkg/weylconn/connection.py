"""Symmetric connections built from metrics, Weyl pairs or explicit tables.

Christoffel arrays are indexed ``gamma[k, i, j]`` for Γ^k_{ij}; their derivatives
``dgamma[m, k, i, j]`` hold ∂_m Γ^k_{ij}. Metric derivatives follow ``MetricJets``.
"""

from __future__ import annotations

import abc
import math
from collections.abc import Mapping, Sequence
from enum import Enum
from typing import NamedTuple

import numpy as np

from weylconn.config import TOL_CLOSEDNESS_ABORT
from weylconn.exceptions import ClosednessError, InvalidParameterError
from weylconn.expr import Bindings, ScalarExpr, eval_jet2, evaluate_many, parse
from weylconn.fields import (
    DeckMap,
    FloatArray,
    FormJets,
    MetricField,
    MetricJets,
    MetricSource,
    OneFormField,
    as_point,
    as_points,
    check_invertible,
)
from weylconn.transport import Curve, Segment, line_integral


class Provenance(str, Enum):
    """How a connection was obtained."""

    LEVI_CIVITA = "levi_civita"
    WEYL = "weyl"
    EXPLICIT_TABLE = "explicit_table"


class ChristoffelJets(NamedTuple):
    """Christoffel symbols and their first coordinate derivatives at a point."""

    value: FloatArray
    first: FloatArray


def _symmetrized(gamma: FloatArray) -> FloatArray:
    return 0.5 * (gamma + gamma.swapaxes(-1, -2))


class ConnectionField(metaclass=abc.ABCMeta):
    """Torsion-free connection on a coordinate chart of the cover."""

    provenance: Provenance

    def __init__(self, coords: Sequence[str]):
        """Construct the connection on the given coordinates."""
        self.coords = tuple(coords)

    @property
    def dim(self) -> int:
        """Number of coordinates."""
        return len(self.coords)

    def __str__(self) -> str:
        """Return the provenance and the chart."""
        return f"{self.provenance.value} connection on ({', '.join(self.coords)})"

    @abc.abstractmethod
    def christoffel(self, pt: Sequence[float], binds: Bindings) -> FloatArray:
        """Return Γ^k_{ij} at pt, exactly symmetric in i and j."""

    @abc.abstractmethod
    def christoffel_jet(self, pt: Sequence[float], binds: Bindings) -> ChristoffelJets:
        """Return Γ and its analytic first derivatives at pt."""

    def christoffel_many(self, points: FloatArray, binds: Bindings) -> FloatArray:
        """Return Γ at every row of an (m, n) array, with shape (m, n, n, n)."""
        points = as_points(points, self.dim)
        return np.stack([self.christoffel(pt, binds) for pt in points])


class _MetricParts(NamedTuple):
    gamma: FloatArray
    dgamma: FloatArray | None
    inverse: FloatArray
    dinverse: FloatArray | None


def _levi_civita_parts(jets: MetricJets, *, derivative: bool) -> _MetricParts:
    check_invertible(jets.value)
    inverse = np.linalg.inv(jets.value)
    dg = jets.first
    lowered = 0.5 * (
        np.einsum("...ilj->...lij", dg) + np.einsum("...jli->...lij", dg) - dg
    )
    gamma = _symmetrized(np.einsum("...kl,...lij->...kij", inverse, lowered))
    if not derivative:
        return _MetricParts(gamma, None, inverse, None)
    ddg = jets.second
    dlowered = 0.5 * (
        np.einsum("...milj->...mlij", ddg) + np.einsum("...mjli->...mlij", ddg) - ddg
    )
    dinverse = -np.einsum("...ka,...mab,...bl->...mkl", inverse, dg, inverse)
    dgamma = np.einsum("...mkl,...lij->...mkij", dinverse, lowered) + np.einsum(
        "...kl,...mlij->...mkij", inverse, dlowered
    )
    return _MetricParts(gamma, _symmetrized(dgamma), inverse, dinverse)


class LeviCivitaConnection(ConnectionField):
    """Levi-Civita connection of any metric source."""

    provenance = Provenance.LEVI_CIVITA

    def __init__(self, metric: MetricSource):
        """Construct the Levi-Civita connection of metric."""
        super().__init__(metric.coords)
        self.metric = metric

    def christoffel(self, pt: Sequence[float], binds: Bindings) -> FloatArray:
        """Return Γ = ½ g^{kl}(∂_i g_{lj} + ∂_j g_{li} - ∂_l g_{ij})."""
        jets = self.metric.jets(as_point(pt, self.dim), binds)
        return _levi_civita_parts(jets, derivative=False).gamma

    def christoffel_jet(self, pt: Sequence[float], binds: Bindings) -> ChristoffelJets:
        """Return Γ and ∂Γ from the second jets of the metric."""
        jets = self.metric.jets(as_point(pt, self.dim), binds)
        parts = _levi_civita_parts(jets, derivative=True)
        return ChristoffelJets(parts.gamma, parts.dgamma)

    def christoffel_many(self, points: FloatArray, binds: Bindings) -> FloatArray:
        """Return Γ at every row of points from the stacked metric jets."""
        jets = self.metric.jets_many(as_points(points, self.dim), binds)
        return _levi_civita_parts(jets, derivative=False).gamma


def _closed(form: FormJets, points: FloatArray) -> FormJets:
    residual = np.max(np.abs(form.first - form.first.swapaxes(-1, -2)), axis=(-2, -1))
    if np.any(residual > TOL_CLOSEDNESS_ABORT):
        where = points if np.ndim(residual) == 0 else points[np.argmax(residual)]
        raise ClosednessError(
            f"Psi is not closed at {where.tolist()}: "
            f"|dPsi| = {float(np.max(residual)):.3e}"
        )
    return form


class WeylConnection(ConnectionField):
    """The unique symmetric connection with ∇h = h ⊗ Ψ."""

    provenance = Provenance.WEYL

    def __init__(self, h: MetricField, psi: OneFormField):
        """Construct the connection of the pair (h, psi)."""
        if h.coords != psi.coords:
            raise InvalidParameterError(
                f"Metric coordinates {h.coords} differ from 1-form {psi.coords}"
            )
        super().__init__(h.coords)
        self.h = h
        self.psi = psi

    def _correction(
        self, jets: MetricJets, parts: _MetricParts, form: FormJets
    ) -> tuple[FloatArray, FloatArray | None]:
        identity = np.eye(self.dim)
        raised = np.einsum("...kl,...l->...k", parts.inverse, form.value)
        correction = -0.5 * (
            np.einsum("ki,...j->...kij", identity, form.value)
            + np.einsum("kj,...i->...kij", identity, form.value)
            - np.einsum("...ij,...k->...kij", jets.value, raised)
        )
        if parts.dinverse is None:
            return correction, None
        draised = np.einsum(
            "...mkl,...l->...mk", parts.dinverse, form.value
        ) + np.einsum("...kl,...ml->...mk", parts.inverse, form.first)
        dcorrection = -0.5 * (
            np.einsum("ki,...mj->...mkij", identity, form.first)
            + np.einsum("kj,...mi->...mkij", identity, form.first)
            - np.einsum("...mij,...k->...mkij", jets.first, raised)
            - np.einsum("...ij,...mk->...mkij", jets.value, draised)
        )
        return correction, dcorrection

    def christoffel(self, pt: Sequence[float], binds: Bindings) -> FloatArray:
        """Return LC(h) - ½(δ^k_i Ψ_j + δ^k_j Ψ_i - h_{ij} Ψ^k).

        Raises:
            ClosednessError: If dΨ exceeds the abort threshold at pt.

        """
        point = as_point(pt, self.dim)
        form = _closed(self.psi.jets(point, binds), point)
        jets = self.h.jets(point, binds)
        parts = _levi_civita_parts(jets, derivative=False)
        correction, _ = self._correction(jets, parts, form)
        return _symmetrized(parts.gamma + correction)

    def christoffel_many(self, points: FloatArray, binds: Bindings) -> FloatArray:
        """Return Γ at every row of points from the stacked jets of h and Ψ.

        Raises:
            ClosednessError: If dΨ exceeds the abort threshold at one of the points.

        """
        points = as_points(points, self.dim)
        form = _closed(self.psi.jets_many(points, binds), points)
        jets = self.h.jets_many(points, binds)
        parts = _levi_civita_parts(jets, derivative=False)
        correction, _ = self._correction(jets, parts, form)
        return _symmetrized(parts.gamma + correction)

    def christoffel_jet(self, pt: Sequence[float], binds: Bindings) -> ChristoffelJets:
        """Return Γ and ∂Γ from the jets of h and Ψ."""
        point = as_point(pt, self.dim)
        form = _closed(self.psi.jets(point, binds), point)
        jets = self.h.jets(point, binds)
        parts = _levi_civita_parts(jets, derivative=True)
        correction, dcorrection = self._correction(jets, parts, form)
        return ChristoffelJets(
            _symmetrized(parts.gamma + correction),
            _symmetrized(parts.dgamma + dcorrection),
        )


class ExplicitConnection(ConnectionField):
    """Connection given by a table of Christoffel expressions."""

    provenance = Provenance.EXPLICIT_TABLE

    def __init__(
        self,
        coords: Sequence[str],
        entries: Mapping[tuple[int, int, int], ScalarExpr],
    ):
        """Construct the connection from entries keyed by (k, i, j) with i <= j."""
        super().__init__(coords)
        self.entries = dict(entries)

    def christoffel(self, pt: Sequence[float], binds: Bindings) -> FloatArray:
        """Evaluate the table at pt."""
        return self.christoffel_jet(pt, binds).value

    def christoffel_jet(self, pt: Sequence[float], binds: Bindings) -> ChristoffelJets:
        """Evaluate the table and its gradients at pt."""
        point = as_point(pt, self.dim)
        n = self.dim
        gamma = np.zeros((n, n, n))
        dgamma = np.zeros((n, n, n, n))
        for (k, i, j), e in self.entries.items():
            jet = eval_jet2(e, point, binds)
            gamma[k, i, j] = gamma[k, j, i] = jet.value
            dgamma[:, k, i, j] = dgamma[:, k, j, i] = jet.grad
        return ChristoffelJets(gamma, dgamma)

    def christoffel_many(self, points: FloatArray, binds: Bindings) -> FloatArray:
        """Evaluate the table at every row of points."""
        points = as_points(points, self.dim)
        n = self.dim
        gamma = np.zeros((points.shape[0], n, n, n))
        for (k, i, j), e in self.entries.items():
            gamma[:, k, i, j] = gamma[:, k, j, i] = evaluate_many(e, points, binds)
        return gamma


def levi_civita(g: MetricSource) -> ConnectionField:
    """Return the Levi-Civita connection of a metric."""
    return LeviCivitaConnection(g)


def weyl_connection(h: MetricField, psi: OneFormField) -> ConnectionField:
    """Return the symmetric connection determined by ∇h = h ⊗ Ψ."""
    return WeylConnection(h, psi)


def explicit_connection(
    coords: Sequence[str],
    params: Sequence[str],
    table: Mapping[tuple[int, int, int], str],
) -> ConnectionField:
    """Build a connection from Christoffel expression texts keyed by (k, i, j).

    Raises:
        InvalidParameterError: If an index is out of range or Γ^k_{ij} and
            Γ^k_{ji} are both given with different expressions.

    """
    n = len(coords)
    entries: dict[tuple[int, int, int], ScalarExpr] = {}
    for (k, i, j), text in table.items():
        if not all(0 <= index < n for index in (k, i, j)):
            raise InvalidParameterError(f"Christoffel index ({k},{i},{j}) out of range")
        key = (k, min(i, j), max(i, j))
        e = parse(text, coords, params)
        if key in entries and entries[key] != e:
            raise InvalidParameterError(
                f"Christoffel table is not symmetric at ({k},{i},{j})"
            )
        entries[key] = e
    return ExplicitConnection(coords, entries)


def covariant_derivative(
    conn: ConnectionField, b: MetricSource, pt: Sequence[float], binds: Bindings
) -> FloatArray:
    """Return ∇_k B_{ij} = ∂_k B_{ij} - Γ^l_{ki} B_{lj} - Γ^l_{kj} B_{il}."""
    point = as_point(pt, conn.dim)
    gamma = conn.christoffel(point, binds)
    jets = b.jets(point, binds)
    return (
        jets.first
        - np.einsum("lki,lj->kij", gamma, jets.value)
        - np.einsum("lkj,il->kij", gamma, jets.value)
    )


def parallel_residual(
    conn: ConnectionField, b: MetricSource, pt: Sequence[float], binds: Bindings
) -> float:
    """Return the max-norm of ∇B at pt."""
    return float(np.max(np.abs(covariant_derivative(conn, b, pt, binds))))


def nabla_h_residual(
    conn: ConnectionField,
    h: MetricField,
    psi: OneFormField,
    pt: Sequence[float],
    binds: Bindings,
) -> float:
    """Return the max-norm of ∇_k h_{ij} - h_{ij} Ψ_k at pt."""
    point = as_point(pt, conn.dim)
    nabla = covariant_derivative(conn, h, point, binds)
    expected = np.einsum("ij,k->kij", h.matrix(point, binds), psi.values(point, binds))
    return float(np.max(np.abs(nabla - expected)))


def deck_equivariance_residual(
    conn: ConnectionField, phi: DeckMap, pt: Sequence[float], binds: Bindings
) -> float:
    """Return the max-norm of A Γ(pt) A⁻¹ A⁻¹ - Γ(φ(pt)) for an affine φ."""
    point = as_point(pt, conn.dim)
    moved = np.einsum(
        "kl,lmn,mi,nj->kij",
        phi.linear,
        conn.christoffel(point, binds),
        phi.inverse_linear,
        phi.inverse_linear,
    )
    return float(np.max(np.abs(moved - conn.christoffel(phi(point), binds))))


def local_gauge(
    psi: OneFormField,
    base: Sequence[float],
    pt: Sequence[float],
    path: Curve,
    binds: Bindings,
) -> float:
    """Return μ(pt) = exp(∫_path Ψ), normalized by μ(base) = 1.

    Raises:
        InvalidParameterError: If the path does not run from base to pt.

    """
    start = as_point(base, psi.dim)
    end = as_point(pt, psi.dim)
    scale = max(1.0, float(np.max(np.abs(start))), float(np.max(np.abs(end))))
    if (
        np.max(np.abs(path.start - start)) > 1e-12 * scale
        or np.max(np.abs(path.end - end)) > 1e-12 * scale
    ):
        raise InvalidParameterError("Gauge path must run from base to pt")
    return math.exp(line_integral(psi, path, binds))


class GaugeFunction:
    """Local gauge μ with dlog μ = Ψ, normalized at a basepoint.

    Values are obtained by integrating Ψ along a path from the basepoint. The path
    given to ``value`` wins; otherwise the stored path is used for its own end point
    and the straight segment for any other point. Globally the values depend on the
    homotopy class of the path.

    Attributes:
        psi: The closed 1-form.
        basepoint: Point where μ equals scale.
        scale: Value of μ at the basepoint.
        path: Stored path from the basepoint, or None.

    """

    def __init__(
        self,
        psi: OneFormField,
        basepoint: Sequence[float],
        scale: float = 1.0,
        path: Curve | None = None,
    ):
        """Construct the gauge with μ(basepoint) = scale.

        Raises:
            InvalidParameterError: If scale is not positive or path does not start
                at the basepoint.

        """
        if scale <= 0:
            raise InvalidParameterError("Gauge scale must be positive")
        self.psi = psi
        self.basepoint = as_point(basepoint, psi.dim)
        self.scale = float(scale)
        if path is not None and not np.allclose(
            path.start, self.basepoint, rtol=0.0, atol=1e-12
        ):
            raise InvalidParameterError("Gauge path must start at the basepoint")
        self.path = path

    def path_to(self, pt: Sequence[float]) -> Curve:
        """Return the path used for μ(pt) when none is given."""
        end = as_point(pt, self.psi.dim)
        if self.path is not None and np.array_equal(self.path.end, end):
            return self.path
        return Segment(self.basepoint, end)

    def value(
        self, pt: Sequence[float], binds: Bindings, path: Curve | None = None
    ) -> float:
        """Return μ(pt) along path, or along path_to(pt) by default."""
        end = as_point(pt, self.psi.dim)
        if path is None:
            path = self.path_to(end)
            if path is not self.path and np.array_equal(end, self.basepoint):
                return self.scale
        return self.scale * local_gauge(self.psi, self.basepoint, end, path, binds)


class GaugeMetric:
    """Numerically scaled local metric μ⁻¹h, with jets from dlog μ = Ψ."""

    def __init__(self, h: MetricField, gauge: GaugeFunction):
        """Construct μ⁻¹h for the gauge of a Weyl pair."""
        self.h = h
        self.gauge = gauge
        self.coords = h.coords
        self.signature = h.signature

    @property
    def dim(self) -> int:
        """Number of coordinates."""
        return self.h.dim

    def matrix(self, pt: Sequence[float], binds: Bindings) -> FloatArray:
        """Return μ(pt)⁻¹ h(pt)."""
        point = as_point(pt, self.dim)
        return self.h.matrix(point, binds) / self.gauge.value(point, binds)

    def jets(self, pt: Sequence[float], binds: Bindings) -> MetricJets:
        """Return the jets of μ⁻¹h, using ∂μ = μΨ."""
        point = as_point(pt, self.dim)
        mu = self.gauge.value(point, binds)
        h = self.h.jets(point, binds)
        form = self.gauge.psi.jets(point, binds)
        psi = form.value
        first = h.first - np.einsum("a,ij->aij", psi, h.value)
        second = (
            h.second
            - np.einsum("b,aij->baij", psi, h.first)
            - np.einsum("a,bij->baij", psi, h.first)
            + np.einsum("ij,a,b->baij", h.value, psi, psi)
            - np.einsum("ij,ba->baij", h.value, form.first)
        )
        return MetricJets(h.value / mu, first / mu, second / mu)

    def jets_many(self, points: FloatArray, binds: Bindings) -> MetricJets:
        """Stack the jets of μ⁻¹h over the rows of points."""
        stacked = [self.jets(pt, binds) for pt in as_points(points, self.dim)]
        return MetricJets(*(np.stack(parts) for parts in zip(*stacked, strict=True)))


def rescale_pair(
    h: MetricField, psi: OneFormField, alpha: str, *, params: Sequence[str] = ()
) -> tuple[MetricField, OneFormField]:
    """Return (αh, Ψ + dlog|α|), a pair defining the same connection as (h, Ψ)."""
    return h.scaled(alpha, params=params), psi.plus_dlog(alpha, params=params)
