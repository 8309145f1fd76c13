"""Curves, line integrals, parallel transport, holonomy and geodesics.

All integrators are fixed-step: a run at the configured step is repeated with half
the step and the two results must agree within a gate, otherwise a
ConvergenceError is raised.
"""

from __future__ import annotations

import abc
import csv
import itertools
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from weylconn.config import (
    BLOW_UP_MAGNITUDE,
    TOL_EIGEN_ZERO,
    TOL_FIT_RESIDUAL,
    TOL_GEODESIC_GATE,
    TOL_QUADRATURE,
    TOL_TRANSPORT_GATE,
)
from weylconn.exceptions import (
    ConvergenceError,
    DimensionMismatchError,
    GeodesicBlowUpError,
    InvalidParameterError,
    QuadratureError,
)
from weylconn.expr import Bindings, ScalarExpr, eval_jet2, evaluate, parse
from weylconn.fields import (
    DeckMap,
    FloatArray,
    MetricField,
    OneFormField,
    QuotientSpec,
    as_point,
)

if TYPE_CHECKING:
    from weylconn.connection import ConnectionField

DEFAULT_STEP = 1e-3
DEFAULT_SUBINTERVALS = 10_000
MIN_PIECE_SUBINTERVALS = 64


@dataclass(frozen=True)
class CurvePiece:
    """Smooth piece of a curve on the parameter interval [s0, s1]."""

    s0: float
    s1: float
    position: Callable[[float], FloatArray]
    velocity: Callable[[float], FloatArray]

    def sample(self, grid: FloatArray) -> tuple[FloatArray, FloatArray]:
        """Return positions and velocities at every parameter of grid."""
        positions = np.array([self.position(s) for s in grid])
        velocities = np.array([self.velocity(s) for s in grid])
        return positions, velocities


class Curve(metaclass=abc.ABCMeta):
    """Piecewise smooth curve on the cover, oriented by increasing parameter.

    Attributes:
        deck: The deck map carrying the start to the end, for loops that close on
            the quotient.

    """

    deck: DeckMap | None = None

    @property
    @abc.abstractmethod
    def dim(self) -> int:
        """Dimension of the cover."""

    @abc.abstractmethod
    def pieces(self) -> tuple[CurvePiece, ...]:
        """Return the smooth pieces in order."""

    @property
    def start(self) -> FloatArray:
        """First point of the curve."""
        first = self.pieces()[0]
        return first.position(first.s0)

    @property
    def end(self) -> FloatArray:
        """Last point of the curve."""
        last = self.pieces()[-1]
        return last.position(last.s1)

    def reversed(self) -> Curve:
        """Return the same curve traversed backwards."""
        return _ReversedCurve(self)


class _ReversedCurve(Curve):
    def __init__(self, curve: Curve):
        self._curve = curve
        self.deck = curve.deck.inverse() if curve.deck is not None else None

    @property
    def dim(self) -> int:
        return self._curve.dim

    def pieces(self) -> tuple[CurvePiece, ...]:
        result = []
        for piece in reversed(self._curve.pieces()):
            total = piece.s0 + piece.s1
            result.append(
                CurvePiece(
                    piece.s0,
                    piece.s1,
                    lambda s, p=piece, t=total: p.position(t - s),
                    lambda s, p=piece, t=total: -p.velocity(t - s),
                )
            )
        return tuple(result)


class Segment(Curve):
    """Straight segment s -> a + s (b - a), s in [0, 1]."""

    def __init__(
        self,
        start: Sequence[float],
        end: Sequence[float],
        deck: DeckMap | None = None,
    ):
        """Construct the segment from start to end."""
        self.a = np.asarray(start, dtype=float)
        self.b = as_point(end, self.a.shape[0])
        self.deck = deck

    @property
    def dim(self) -> int:
        """Dimension of the cover."""
        return self.a.shape[0]

    @property
    def is_degenerate(self) -> bool:
        """True for a zero-length segment."""
        return bool(np.array_equal(self.a, self.b))

    def pieces(self) -> tuple[CurvePiece, ...]:
        """Return the single piece."""
        delta = self.b - self.a
        return (
            CurvePiece(0.0, 1.0, lambda s: self.a + s * delta, lambda s: delta),
        )


class PolylineCurve(Curve):
    """Polyline through vertices, piece i on [i, i + 1]."""

    def __init__(
        self, vertices: Sequence[Sequence[float]], deck: DeckMap | None = None
    ):
        """Construct the polyline.

        Raises:
            InvalidParameterError: If fewer than two vertices are given.

        """
        points = np.asarray(vertices, dtype=float)
        if points.ndim != 2 or points.shape[0] < 2:
            raise InvalidParameterError("A polyline needs at least two vertices")
        self.vertices = points
        self.deck = deck

    @property
    def dim(self) -> int:
        """Dimension of the cover."""
        return self.vertices.shape[1]

    def pieces(self) -> tuple[CurvePiece, ...]:
        """Return one linear piece per edge."""
        result = []
        for index, (a, b) in enumerate(itertools.pairwise(self.vertices)):
            delta = b - a
            result.append(
                CurvePiece(
                    float(index),
                    float(index + 1),
                    lambda s, a=a, d=delta, i=index: a + (s - i) * d,
                    lambda s, d=delta: d,
                )
            )
        return tuple(result)


class ExpressionCurve(Curve):
    """Curve whose coordinates are expressions in the parameter s."""

    def __init__(
        self,
        components: Sequence[ScalarExpr],
        s0: float,
        s1: float,
        binds: Bindings | None = None,
        deck: DeckMap | None = None,
    ):
        """Construct the curve over [s0, s1] with exact tangents from jets."""
        if s1 <= s0:
            raise InvalidParameterError("Curve parameter range must be increasing")
        self.components = tuple(components)
        self.s0 = float(s0)
        self.s1 = float(s1)
        self.binds = binds or Bindings()
        self.deck = deck

    @classmethod
    def from_strings(
        cls,
        texts: Sequence[str],
        s0: float,
        s1: float,
        params: Sequence[str] = (),
        binds: Bindings | None = None,
        deck: DeckMap | None = None,
    ) -> ExpressionCurve:
        """Parse the coordinate expressions over the parameter s."""
        return cls(
            [parse(text, ("s",), params) for text in texts], s0, s1, binds, deck
        )

    @property
    def dim(self) -> int:
        """Dimension of the cover."""
        return len(self.components)

    def _position(self, s: float) -> FloatArray:
        return np.array([evaluate(e, (s,), self.binds) for e in self.components])

    def _velocity(self, s: float) -> FloatArray:
        return np.array(
            [eval_jet2(e, (s,), self.binds).grad[0] for e in self.components]
        )

    def pieces(self) -> tuple[CurvePiece, ...]:
        """Return the single smooth piece."""
        return (CurvePiece(self.s0, self.s1, self._position, self._velocity),)


def _piece_subintervals(pieces: Sequence[CurvePiece], total: int) -> list[int]:
    if len(pieces) == 1:
        return [total]
    span = sum(piece.s1 - piece.s0 for piece in pieces)
    counts = []
    for piece in pieces:
        count = round(total * (piece.s1 - piece.s0) / span)
        counts.append(max(MIN_PIECE_SUBINTERVALS, count + (-count) % 4))
    return counts


def line_integral(
    psi: OneFormField,
    curve: Curve,
    binds: Bindings,
    *,
    subintervals: int = DEFAULT_SUBINTERVALS,
) -> float:
    """Integrate a 1-form along a curve with composite Simpson quadrature.

    The Richardson estimate |S_N - S_{N/2}| / 15 must stay below 1e-9 times
    max(1, |S|).

    Raises:
        QuadratureError: If the error estimate misses the target.

    """
    if subintervals < 4 or subintervals % 4:
        raise InvalidParameterError("Subinterval count must be a multiple of 4")
    if curve.dim != psi.dim:
        raise DimensionMismatchError(
            f"Curve dimension {curve.dim} differs from 1-form dimension {psi.dim}"
        )
    total = 0.0
    error = 0.0
    pieces = curve.pieces()
    counts = _piece_subintervals(pieces, subintervals)
    for piece, count in zip(pieces, counts, strict=True):
        grid = np.linspace(piece.s0, piece.s1, count + 1)
        positions, velocities = piece.sample(grid)
        values = np.einsum("mi,mi->m", psi.values_many(positions, binds), velocities)
        width = (piece.s1 - piece.s0) / count
        fine = _simpson(values, width)
        coarse = _simpson(values[::2], 2 * width)
        total += fine
        error += abs(fine - coarse) / 15.0
    if error > TOL_QUADRATURE * max(1.0, abs(total)):
        raise QuadratureError(
            f"Line integral error estimate {error:.3e} exceeds target for value "
            f"{total:.12g}"
        )
    return total


def _simpson(values: FloatArray, width: float) -> float:
    return float(
        width
        / 3.0
        * (
            values[0]
            + values[-1]
            + 4.0 * np.sum(values[1:-1:2])
            + 2.0 * np.sum(values[2:-1:2])
        )
    )


def generator_loop(
    spec: QuotientSpec, index: int, base: Sequence[float] | None = None
) -> Segment:
    """Return the straight segment from base to its image under a generator.

    The segment projects to a closed loop on the quotient. For the identity
    generator the segment has zero length and ``is_degenerate`` is set.
    """
    phi = spec.generator(index)
    start = spec.basepoint if base is None else as_point(base, spec.dim)
    return Segment(start, phi(start), deck=phi)


def word_loop(
    spec: QuotientSpec, word: Sequence[int], base: Sequence[float] | None = None
) -> Segment:
    """Return the straight loop of a generator word, the first letter acting first."""
    phi = spec.word_map(word)
    start = spec.basepoint if base is None else as_point(base, spec.dim)
    return Segment(start, phi(start), deck=phi)


def periods(
    psi: OneFormField,
    spec: QuotientSpec,
    binds: Bindings,
    base: Sequence[float] | None = None,
) -> FloatArray:
    """Return the line integral of psi over every generator loop."""
    return np.array(
        [
            line_integral(psi, generator_loop(spec, index, base), binds)
            for index in range(len(spec.generators))
        ]
    )


class ExactnessVerdict(str, Enum):
    """Whether the connection is the Levi-Civita connection of a global metric."""

    GLOBALLY_METRIC = "GloballyMetric"
    LOCALLY_METRIC_ONLY = "LocallyMetricOnly"


class Classification(NamedTuple):
    """Verdict of the exactness classifier with the periods it was based on."""

    verdict: ExactnessVerdict
    periods: FloatArray
    tol: float


def classify_exactness(periods: Sequence[float], tol: float = 1e-8) -> Classification:
    """Classify periods: GloballyMetric iff every |period| < tol.

    Assumes the generator loops span the first homology of the quotient.
    """
    values = np.asarray(periods, dtype=float)
    if np.max(np.abs(values), initial=0.0) < tol:
        return Classification(ExactnessVerdict.GLOBALLY_METRIC, values, tol)
    return Classification(ExactnessVerdict.LOCALLY_METRIC_ONLY, values, tol)


class _CurveField:
    """Matrices K[l, i] = Γ^l_{ik} γ'^k at every quarter step of a curve piece."""

    def __init__(
        self, conn: ConnectionField, piece: CurvePiece, binds: Bindings, steps: int
    ):
        self.quarter = (piece.s1 - piece.s0) / (4 * steps)
        positions, velocities = piece.sample(
            piece.s0 + self.quarter * np.arange(4 * steps + 1)
        )
        gamma = conn.christoffel_many(positions, binds)
        self.matrices = np.einsum("mlik,mk->mli", gamma, velocities)


def _chain(matrices: FloatArray) -> FloatArray:
    """Return matrices[0] @ matrices[1] @ ... @ matrices[-1] by pairwise products."""
    while matrices.shape[0] > 1:
        if matrices.shape[0] % 2:
            matrices = np.concatenate([matrices, np.eye(matrices.shape[-1])[None]])
        matrices = matrices[0::2] @ matrices[1::2]
    return matrices[0]


def _rk4_map(
    k: FloatArray, quarters: int, quarter: float, *, right: bool
) -> FloatArray:
    """Return the RK4 solution map of Y' = K Y, or of Y' = Y K when right is set.

    k holds K at every quarter step and one RK4 step spans the given number of
    quarters. For the linear equation each RK4 step is a matrix; the map is their
    ordered product.
    """
    h = quarters * quarter
    start = k[:-1:quarters]
    middle = k[quarters // 2 :: quarters]
    end = k[quarters::quarters]
    identity = np.eye(k.shape[-1])

    def stage(coefficient: FloatArray, previous: FloatArray, factor: float):
        shifted = identity + factor * previous
        return shifted @ coefficient if right else coefficient @ shifted

    a1 = start
    a2 = stage(middle, a1, 0.5 * h)
    a3 = stage(middle, a2, 0.5 * h)
    a4 = stage(end, a3, h)
    steps = identity + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return _chain(steps) if right else _chain(steps[::-1])


def _gated_transport(
    conn: ConnectionField,
    curve: Curve,
    binds: Bindings,
    step: float,
    apply: Callable[[FloatArray], FloatArray],
    *,
    right: bool,
) -> FloatArray:
    if curve.dim != conn.dim:
        raise DimensionMismatchError(
            f"Curve dimension {curve.dim} differs from connection dimension {conn.dim}"
        )
    if step <= 0:
        raise InvalidParameterError("RK4 step must be positive")
    sign = 1.0 if right else -1.0
    coarse = fine = np.eye(conn.dim)
    for piece in curve.pieces():
        steps = max(1, math.ceil((piece.s1 - piece.s0) / step))
        sampler = _CurveField(conn, piece, binds, steps)
        k = sign * sampler.matrices
        piece_coarse = _rk4_map(k, 4, sampler.quarter, right=right)
        piece_fine = _rk4_map(k, 2, sampler.quarter, right=right)
        if right:
            coarse, fine = coarse @ piece_coarse, fine @ piece_fine
        else:
            coarse, fine = piece_coarse @ coarse, piece_fine @ fine
    coarse, fine = apply(coarse), apply(fine)
    change = float(np.max(np.abs(coarse - fine)))
    scale = max(1.0, float(np.max(np.abs(fine))))
    if change > TOL_TRANSPORT_GATE * scale:
        raise ConvergenceError(
            f"Halving the RK4 step changed the transport by {change:.3e}"
        )
    return fine


def transport_vector(
    conn: ConnectionField,
    curve: Curve,
    v0: Sequence[float],
    binds: Bindings,
    *,
    step: float = DEFAULT_STEP,
) -> FloatArray:
    """Parallel transport a vector: dV^k/ds = -Γ^k_{ij} γ'^i V^j.

    Raises:
        ConvergenceError: If the step-halving gate fails.

    """
    vector = as_point(v0, conn.dim)
    return _gated_transport(conn, curve, binds, step, lambda m: m @ vector, right=False)


def transport_bilinear(
    conn: ConnectionField,
    curve: Curve,
    b0: FloatArray,
    binds: Bindings,
    *,
    step: float = DEFAULT_STEP,
) -> FloatArray:
    """Parallel transport a symmetric bilinear form along a curve.

    The form is carried as W^T B0 W with W' = W K, W(0) = I, which solves
    B' = K^T B + B K. The result is symmetrized, so it is exactly symmetric.

    Raises:
        ConvergenceError: If the step-halving gate fails.

    """
    n = conn.dim
    form = np.asarray(b0, dtype=float)
    if form.shape != (n, n):
        raise DimensionMismatchError(f"Bilinear form must be {n}x{n}")

    def apply(w: FloatArray) -> FloatArray:
        moved = w.T @ form @ w
        return 0.5 * (moved + moved.T)

    return _gated_transport(conn, curve, binds, step, apply, right=True)


class HolonomyOutcome(str, Enum):
    """Whether the transported form came back as a positive multiple."""

    POSITIVE_MULTIPLE = "positive_multiple"
    NOT_POSITIVE_MULTIPLE = "not_positive_multiple"


@dataclass(frozen=True)
class HolonomyScale:
    """Least-squares fit of the transported form against the initial one.

    Attributes:
        outcome: POSITIVE_MULTIPLE when the fit residual is small and c > 0.
        scale: The fitted scalar c.
        fit_residual: |B1 - c B0| / |B0| in Frobenius norm.
        initial: The form B0 at the start of the loop.
        transported: The transported form pulled back to the start.
        period: The integral of psi along the loop, if psi is known.

    """

    outcome: HolonomyOutcome
    scale: float
    fit_residual: float
    initial: FloatArray = field(repr=False)
    transported: FloatArray = field(repr=False)
    period: float | None = None

    @property
    def expected(self) -> float | None:
        """Scale predicted by the period, exp(-period)."""
        return None if self.period is None else math.exp(-self.period)


def pull_back_loop_form(loop: Curve, form: FloatArray) -> FloatArray:
    """Pull a form at the end of a loop back to its start through its deck map."""
    if loop.deck is None:
        return form
    return loop.deck.pullback_bilinear(form)


def holonomy_scale(
    conn: ConnectionField,
    h: MetricField,
    psi: OneFormField | None,
    loop: Curve,
    binds: Bindings,
    *,
    step: float = DEFAULT_STEP,
    initial: FloatArray | None = None,
    subintervals: int = DEFAULT_SUBINTERVALS,
) -> HolonomyScale:
    """Transport the local parallel metric around a loop and fit its scale.

    The initial form defaults to h at the start of the loop, where the gauge is
    normalized to 1.
    """
    b0 = h.matrix(loop.start, binds) if initial is None else np.asarray(initial)
    b1 = pull_back_loop_form(loop, transport_bilinear(conn, loop, b0, binds, step=step))
    norm = float(np.sum(b0 * b0))
    scale = float(np.sum(b1 * b0)) / norm
    residual = float(np.linalg.norm(b1 - scale * b0) / math.sqrt(norm))
    outcome = HolonomyOutcome.POSITIVE_MULTIPLE
    if residual > TOL_FIT_RESIDUAL or scale <= 0:
        outcome = HolonomyOutcome.NOT_POSITIVE_MULTIPLE
    period = None
    if psi is not None:
        period = line_integral(psi, loop, binds, subintervals=subintervals)
    return HolonomyScale(outcome, scale, residual, b0, b1, period)


class CocycleResult(NamedTuple):
    """Comparison of a composite loop's scale with the product of its letters."""

    word: tuple[int, ...]
    composite: float
    product: float
    residual: float
    period: float | None = None


def cocycle_check(
    conn: ConnectionField,
    h: MetricField,
    psi: OneFormField,
    spec: QuotientSpec,
    word: Sequence[int],
    binds: Bindings,
    *,
    step: float = DEFAULT_STEP,
    initial: FloatArray | None = None,
    subintervals: int = DEFAULT_SUBINTERVALS,
    known: Mapping[int, HolonomyScale] | None = None,
) -> CocycleResult:
    """Compare the scale of a word loop with the product of its generator scales.

    Generator holonomies given in known are reused and the others are computed once
    per distinct letter. The period of the word loop is the sum of the periods of
    its letters, so no quadrature is run for it.
    """
    letters = dict(known or {})
    for index in word:
        if index not in letters:
            letters[index] = holonomy_scale(
                conn,
                h,
                psi,
                generator_loop(spec, index),
                binds,
                step=step,
                initial=initial,
                subintervals=subintervals,
            )
    composite = holonomy_scale(
        conn, h, None, word_loop(spec, word), binds, step=step, initial=initial
    )
    product = math.prod(letters[index].scale for index in word)
    period = None
    if all(letters[index].period is not None for index in word):
        period = math.fsum(letters[index].period for index in word)
    return CocycleResult(
        tuple(word),
        composite.scale,
        product,
        abs(composite.scale - product) / abs(product),
        period,
    )


class CausalFlip(NamedTuple):
    """Vector whose quadratic form changes sign between two forms."""

    vector: FloatArray
    before: float
    after: float


def causal_flip(b0: FloatArray, b1: FloatArray) -> CausalFlip | None:
    """Look for a vector that is timelike for one form and spacelike for the other.

    Candidates are the coordinate basis vectors and the eigenvectors of both forms.
    """
    n = b0.shape[0]
    candidates = [
        *np.eye(n),
        *np.linalg.eigh(b0)[1].T,
        *np.linalg.eigh(0.5 * (b1 + b1.T))[1].T,
    ]
    for v in candidates:
        before = float(v @ b0 @ v)
        after = float(v @ b1 @ v)
        if min(abs(before), abs(after)) > TOL_EIGEN_ZERO and before * after < 0:
            return CausalFlip(np.asarray(v), before, after)
    return None


@dataclass(frozen=True)
class GeneratorHolonomy:
    """Holonomy data of one generator loop."""

    index: int
    label: str
    period: float | None
    holonomy: HolonomyScale
    flip: CausalFlip | None


@dataclass(frozen=True)
class HolonomyReport:
    """Periods, verdict, per-generator scales and cocycle residuals of a quotient."""

    classification: Classification | None
    generators: tuple[GeneratorHolonomy, ...]
    cocycles: tuple[CocycleResult, ...]


def holonomy_report(
    conn: ConnectionField,
    h: MetricField,
    psi: OneFormField | None,
    spec: QuotientSpec,
    binds: Bindings,
    words: Sequence[Sequence[int]] | None = None,
    *,
    step: float = DEFAULT_STEP,
    exactness_tol: float = 1e-8,
    initial: FloatArray | None = None,
    subintervals: int = DEFAULT_SUBINTERVALS,
) -> HolonomyReport:
    """Assemble the holonomy data of every generator and of the given words.

    Words default to all words of length two. Without psi no classification is made
    and no cocycles are computed.
    """
    options = {"step": step, "initial": initial, "subintervals": subintervals}
    generators = []
    for index in range(len(spec.generators)):
        scale = holonomy_scale(
            conn, h, psi, generator_loop(spec, index), binds, **options
        )
        generators.append(
            GeneratorHolonomy(
                index,
                spec.labels[index],
                scale.period,
                scale,
                causal_flip(scale.initial, scale.transported),
            )
        )
    if psi is None:
        return HolonomyReport(None, tuple(generators), ())
    classification = classify_exactness(
        [item.period for item in generators], exactness_tol
    )
    if words is None:
        words = list(itertools.product(range(len(spec.generators)), repeat=2))
    known = {item.index: item.holonomy for item in generators}
    cocycles = [
        cocycle_check(
            conn,
            h,
            psi,
            spec,
            word,
            binds,
            step=step,
            initial=initial,
            subintervals=subintervals,
            known=known,
        )
        for word in words
    ]
    return HolonomyReport(classification, tuple(generators), tuple(cocycles))


class TrajectorySample(NamedTuple):
    """Point of a geodesic: parameter, position and velocity."""

    s: float
    position: FloatArray
    velocity: FloatArray


def _geodesic_run(
    conn: ConnectionField,
    y0: FloatArray,
    steps: int,
    h: float,
    binds: Bindings,
    stride: int,
) -> list[TrajectorySample]:
    n = conn.dim

    def rhs(y: FloatArray) -> FloatArray:
        x, v = y[:n], y[n:]
        gamma = conn.christoffel(x, binds)
        return np.concatenate([v, -np.einsum("kij,i,j->k", gamma, v, v)])

    y = y0
    trajectory = [TrajectorySample(0.0, y[:n].copy(), y[n:].copy())]
    for index in range(1, steps + 1):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y[:n])) > BLOW_UP_MAGNITUDE:
            raise GeodesicBlowUpError(
                f"Geodesic left every bounded region at s = {index * h:.6g}",
                trajectory,
            )
        if index % stride == 0 or index == steps:
            trajectory.append(TrajectorySample(index * h, y[:n].copy(), y[n:].copy()))
    return trajectory


def geodesic(
    conn: ConnectionField,
    x0: Sequence[float],
    v0: Sequence[float],
    s_max: float,
    binds: Bindings,
    *,
    step: float = DEFAULT_STEP,
    stride: int = 10,
) -> list[TrajectorySample]:
    """Integrate x'' + Γ(x', x') = 0 from (x0, v0) up to s_max.

    The trajectory keeps one sample every stride steps plus the endpoint.

    Raises:
        GeodesicBlowUpError: If a coordinate exceeds 1e12; carries the samples
            computed so far.
        ConvergenceError: If halving the step moves the endpoint by more than 1e-7.

    """
    if s_max <= 0:
        raise InvalidParameterError("s_max must be positive")
    if step <= 0 or stride < 1:
        raise InvalidParameterError("Step must be positive and stride at least 1")
    n = conn.dim
    y0 = np.concatenate([as_point(x0, n), as_point(v0, n)])
    steps = max(1, math.ceil(s_max / step))
    h = s_max / steps
    trajectory = _geodesic_run(conn, y0, steps, h, binds, stride)
    check = _geodesic_run(conn, y0, 2 * steps, h / 2, binds, 2 * steps)[-1]
    last = trajectory[-1]
    end = np.concatenate([last.position, last.velocity])
    fine = np.concatenate([check.position, check.velocity])
    change = float(np.max(np.abs(end - fine)))
    if change > TOL_GEODESIC_GATE * max(1.0, float(np.max(np.abs(end)))):
        raise ConvergenceError(
            f"Halving the RK4 step moved the geodesic endpoint by {change:.3e}"
        )
    return trajectory


def write_trajectory_csv(
    trajectory: Sequence[TrajectorySample], coords: Sequence[str], path: Path | str
) -> None:
    """Write a trajectory as CSV with columns s, coordinates, velocity components."""
    with open(path, "w", newline="", encoding="utf-8") as stream:
        writer = csv.writer(stream)
        writer.writerow(["s", *coords, *(f"v_{name}" for name in coords)])
        for sample in trajectory:
            writer.writerow(
                [
                    repr(float(sample.s)),
                    *(repr(float(x)) for x in sample.position),
                    *(repr(float(v)) for v in sample.velocity),
                ]
            )
