"""Riemann, Ricci, scalar curvature and Einstein tensor of a connection.

The Riemann tensor is indexed ``riemann[l, k, i, j]`` for

    R^l_{kij} = ∂_i Γ^l_{jk} - ∂_j Γ^l_{ik}
                + Γ^l_{im} Γ^m_{jk} - Γ^l_{jm} Γ^m_{ik}

and the Ricci tensor is R_{kj} = R^i_{kij}. Scalar curvature depends on the gauge
used to raise indices, so it is always reported together with it.
"""

from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from weylconn.connection import ConnectionField, WeylConnection
from weylconn.exceptions import InvalidParameterError
from weylconn.expr import Bindings
from weylconn.fields import FloatArray, MetricField, OneFormField, as_point, metric_at


def riemann(conn: ConnectionField, pt: Sequence[float], binds: Bindings) -> FloatArray:
    """Return R^l_{kij} at pt from the analytic derivatives of Γ.

    Antisymmetry in the last pair is exact.
    """
    gamma, dgamma = conn.christoffel_jet(pt, binds)
    half = np.einsum("iljk->lkij", dgamma) + np.einsum("lim,mjk->lkij", gamma, gamma)
    return half - half.swapaxes(2, 3)


def ricci_from_riemann(tensor: FloatArray) -> FloatArray:
    """Contract R^i_{kij} into R_{kj}."""
    return np.einsum("ikij->kj", tensor)


def ricci(conn: ConnectionField, pt: Sequence[float], binds: Bindings) -> FloatArray:
    """Return the Ricci tensor R_{kj} at pt."""
    return ricci_from_riemann(riemann(conn, pt, binds))


def bianchi_residual(tensor: FloatArray) -> float:
    """Return the max-norm of R^l_{kij} + R^l_{ijk} + R^l_{jki}."""
    cyclic = (
        tensor
        + np.einsum("lijk->lkij", tensor)
        + np.einsum("ljki->lkij", tensor)
    )
    return float(np.max(np.abs(cyclic)))


def ricci_asymmetry(tensor: FloatArray) -> float:
    """Return the max-norm of R_{kj} - R_{jk}."""
    return float(np.max(np.abs(tensor - tensor.T)))


class ScalarEinstein(NamedTuple):
    """Scalar curvature and Einstein tensor in a given gauge."""

    scalar: float
    einstein: FloatArray


def _check_pair(
    conn: ConnectionField, h: MetricField, psi: OneFormField | None
) -> None:
    if psi is None:
        return
    if psi.coords != conn.coords:
        raise InvalidParameterError(
            f"1-form coordinates {psi.coords} differ from connection {conn.coords}"
        )
    if isinstance(conn, WeylConnection) and (conn.h is not h or conn.psi is not psi):
        raise InvalidParameterError(
            "Weyl connection was not built from the given pair (h, psi)"
        )


def _gauge_metric(h: MetricField, mu: float, pt: FloatArray, binds: Bindings):
    if mu <= 0:
        raise InvalidParameterError(f"Gauge value must be positive, got {mu}")
    return metric_at(h, pt, binds) / mu


def _scalar_and_einstein(ric: FloatArray, local: FloatArray) -> ScalarEinstein:
    scalar = float(np.einsum("kj,kj->", np.linalg.inv(local), ric))
    return ScalarEinstein(scalar, ric - 0.5 * scalar * local)


def scalar_and_einstein(
    conn: ConnectionField,
    h: MetricField,
    psi: OneFormField | None,
    mu: float,
    pt: Sequence[float],
    binds: Bindings,
) -> ScalarEinstein:
    """Return R = g^{kj} R_{kj} and G = Ric - ½ R g for g = μ⁻¹h at pt.

    Multiplying μ by a positive constant scales R and leaves G unchanged. psi is
    None for metric connections; otherwise a Weyl connection must have been built
    from exactly the pair (h, psi).

    Raises:
        SingularMetricError: If h is singular at pt.
        InvalidParameterError: If mu is not positive or the pair does not match.

    """
    _check_pair(conn, h, psi)
    point = as_point(pt, conn.dim)
    local = _gauge_metric(h, mu, point, binds)
    return _scalar_and_einstein(ricci(conn, point, binds), local)


@dataclass(frozen=True)
class CurvatureTensors:
    """Curvature of a connection at a point with the gauge used for raising.

    Attributes:
        riemann: R^l_{kij}.
        ricci: R_{kj}.
        scalar: Scalar curvature in the gauge mu.
        einstein: Einstein tensor.
        mu: Gauge value at the point.
        gauge_metric: The local metric μ⁻¹h used to raise indices.

    """

    riemann: FloatArray
    ricci: FloatArray
    scalar: float
    einstein: FloatArray
    mu: float
    gauge_metric: FloatArray


def curvature_tensors(
    conn: ConnectionField,
    h: MetricField,
    psi: OneFormField | None,
    mu: float,
    pt: Sequence[float],
    binds: Bindings,
) -> CurvatureTensors:
    """Compute every curvature tensor at pt in the gauge μ."""
    _check_pair(conn, h, psi)
    point = as_point(pt, conn.dim)
    local = _gauge_metric(h, mu, point, binds)
    tensor = riemann(conn, point, binds)
    ric = ricci_from_riemann(tensor)
    scalar, einstein = _scalar_and_einstein(ric, local)
    return CurvatureTensors(tensor, ric, scalar, einstein, float(mu), local)
