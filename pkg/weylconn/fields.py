"""Metric fields, 1-form fields and quotients of the cover by affine deck maps."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import NamedTuple, Protocol

import numpy as np
import numpy.typing as npt

from weylconn.config import TOL_EIGEN_ZERO, TOL_SINGULAR_DET
from weylconn.exceptions import (
    DegenerateDeckMapError,
    DimensionMismatchError,
    DomainError,
    InvalidParameterError,
    SignatureMismatchError,
    SingularMetricError,
)
from weylconn.expr import (
    Bindings,
    ScalarExpr,
    eval_jet2,
    eval_jet2_many,
    evaluate,
    evaluate_many,
    parse,
)

FloatArray = npt.NDArray[np.float64]


def as_point(values: Sequence[float] | FloatArray, dim: int) -> FloatArray:
    """Return values as a float vector of the given dimension.

    Raises:
        DimensionMismatchError: If the number of values differs from dim.

    """
    point = np.asarray(values, dtype=float)
    if point.shape != (dim,):
        raise DimensionMismatchError(
            f"Expected {dim} coordinates, got shape {point.shape}"
        )
    return point


def as_points(values: Sequence[Sequence[float]] | FloatArray, dim: int) -> FloatArray:
    """Return values as an (m, dim) float array of points.

    Raises:
        DimensionMismatchError: If the array does not have dim columns.

    """
    points = np.asarray(values, dtype=float)
    if points.ndim != 2 or points.shape[1] != dim:
        raise DimensionMismatchError(
            f"Expected points with {dim} coordinates, got shape {points.shape}"
        )
    return points


class MetricJets(NamedTuple):
    """Value and coordinate derivatives of a symmetric bilinear form.

    ``first[k, i, j]`` is the derivative of the (i, j) entry along coordinate k and
    ``second[k, m, i, j]`` the mixed second derivative along k and m.
    Stacked jets carry a leading point axis.
    """

    value: FloatArray
    first: FloatArray
    second: FloatArray


class MetricSource(Protocol):
    """Anything whose jets describe a metric on the cover."""

    coords: tuple[str, ...]

    @property
    def dim(self) -> int:
        """Number of coordinates."""

    def matrix(self, pt: FloatArray, binds: Bindings) -> FloatArray:
        """Return the evaluated matrix at pt."""

    def jets(self, pt: FloatArray, binds: Bindings) -> MetricJets:
        """Return value, first and second derivatives at pt."""

    def jets_many(self, points: FloatArray, binds: Bindings) -> MetricJets:
        """Return the jets at every row of points, stacked along a leading axis."""


def _check_exprs(exprs: Sequence[ScalarExpr], coords: tuple[str, ...]) -> None:
    for e in exprs:
        if e.coords != coords:
            raise DimensionMismatchError(
                f"Expression '{e.text}' is declared over {e.coords}, not {coords}"
            )


@dataclass(frozen=True)
class MetricField:
    """Symmetric matrix of expressions with a declared signature.

    Attributes:
        coords: Coordinate names.
        params: Parameter names the components may reference.
        components: The n x n components. Mirrored entries are the same object.
        signature: Declared (negative, positive) eigenvalue counts.
        projects_to_quotient: Whether the form is expected to be invariant under the
            deck maps of the enclosing quotient.

    """

    coords: tuple[str, ...]
    params: tuple[str, ...]
    components: tuple[tuple[ScalarExpr, ...], ...]
    signature: tuple[int, int]
    projects_to_quotient: bool = True

    def __post_init__(self):
        """Check shape, symmetry and declared signature."""
        n = len(self.coords)
        if len(self.components) != n or any(len(row) != n for row in self.components):
            raise DimensionMismatchError(f"Metric components must be {n}x{n}")
        for i in range(n):
            for j in range(i):
                if self.components[i][j] is not self.components[j][i]:
                    raise InvalidParameterError(
                        f"Metric entries ({i},{j}) and ({j},{i}) differ"
                    )
        _check_exprs([e for row in self.components for e in row], self.coords)
        if sum(self.signature) != n or min(self.signature) < 0:
            raise InvalidParameterError(
                f"Signature {self.signature} does not fit dimension {n}"
            )

    @classmethod
    def from_strings(
        cls,
        rows: Sequence[Sequence[str | None]],
        coords: Sequence[str],
        params: Sequence[str] = (),
        *,
        signature: tuple[int, int],
        projects_to_quotient: bool = True,
    ) -> MetricField:
        """Parse a metric from expression strings.

        Rows either hold all n entries or only the upper triangle, row i then holding
        the n - i entries from the diagonal on. Entries below the diagonal may be
        None; when given they must print like their mirrored entry.

        Raises:
            DimensionMismatchError: If the rows do not describe an n x n matrix.
            InvalidParameterError: If a lower entry differs from the upper one.

        """
        coords = tuple(coords)
        params = tuple(params)
        n = len(coords)
        if len(rows) != n:
            raise DimensionMismatchError(f"Metric needs {n} rows, got {len(rows)}")
        upper: list[list[ScalarExpr | None]] = [[None] * n for _ in range(n)]
        for i, row in enumerate(rows):
            if len(row) == n:
                entries = list(row)
            elif len(row) == n - i:
                entries = [None] * i + list(row)
            else:
                raise DimensionMismatchError(
                    f"Metric row {i} has {len(row)} entries, expected {n} or {n - i}"
                )
            for j, text in enumerate(entries):
                if text is None or j < i:
                    continue
                upper[i][j] = parse(text, coords, params)
        for i, row in enumerate(rows):
            if len(row) != n:
                continue
            for j in range(i):
                text = row[j]
                if text is not None and parse(text, coords, params) != upper[j][i]:
                    raise InvalidParameterError(
                        f"Metric entry ({i},{j}) '{text}' does not match "
                        f"entry ({j},{i})"
                    )
        components = [[upper[min(i, j)][max(i, j)] for j in range(n)] for i in range(n)]
        if any(e is None for row in components for e in row):
            raise DimensionMismatchError("Metric has missing entries")
        return cls(
            coords,
            params,
            tuple(tuple(row) for row in components),
            tuple(signature),
            projects_to_quotient,
        )

    @property
    def dim(self) -> int:
        """Number of coordinates."""
        return len(self.coords)

    def texts(self) -> list[list[str]]:
        """Return the canonical text of every entry."""
        return [[e.text for e in row] for row in self.components]

    def scaled(self, factor: str, *, params: Sequence[str] = ()) -> MetricField:
        """Return the metric multiplied by a scalar expression.

        Args:
            factor: Expression text of the conformal factor.
            params: Extra parameter names the factor may reference.

        """
        all_params = tuple(dict.fromkeys([*self.params, *params]))
        n = self.dim
        rows = [
            [f"({factor})*({self.components[i][j].text})" for j in range(i, n)]
            for i in range(n)
        ]
        return MetricField.from_strings(
            rows,
            self.coords,
            all_params,
            signature=self.signature,
            projects_to_quotient=self.projects_to_quotient,
        )

    def matrix(self, pt: FloatArray, binds: Bindings) -> FloatArray:
        """Evaluate the components at pt without any check."""
        n = self.dim
        result = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                result[i, j] = result[j, i] = evaluate(
                    self.components[i][j], pt, binds
                )
        return result

    def jets(self, pt: FloatArray, binds: Bindings) -> MetricJets:
        """Evaluate value, gradient and Hessian of every component at pt."""
        n = self.dim
        value = np.empty((n, n))
        first = np.empty((n, n, n))
        second = np.empty((n, n, n, n))
        cache: dict[int, object] = {}
        for i in range(n):
            for j in range(i, n):
                e = self.components[i][j]
                jet = cache.get(id(e))
                if jet is None:
                    jet = cache[id(e)] = eval_jet2(e, pt, binds)
                value[i, j] = value[j, i] = jet.value
                first[:, i, j] = first[:, j, i] = jet.grad
                second[:, :, i, j] = second[:, :, j, i] = jet.hess
        return MetricJets(value, first, second)

    def jets_many(self, points: FloatArray, binds: Bindings) -> MetricJets:
        """Evaluate the jets at every row of points in one pass per component."""
        points = as_points(points, self.dim)
        m, n = points.shape
        value = np.empty((m, n, n))
        first = np.empty((m, n, n, n))
        second = np.empty((m, n, n, n, n))
        cache: dict[int, object] = {}
        for i in range(n):
            for j in range(i, n):
                e = self.components[i][j]
                jet = cache.get(id(e))
                if jet is None:
                    jet = cache[id(e)] = eval_jet2_many(e, points, binds)
                value[:, i, j] = value[:, j, i] = jet.value
                first[:, :, i, j] = first[:, :, j, i] = jet.grad
                second[:, :, :, i, j] = second[:, :, :, j, i] = jet.hess
        return MetricJets(value, first, second)


class FormJets(NamedTuple):
    """Value and derivatives of a 1-form; ``first[m, i]`` differentiates entry i."""

    value: FloatArray
    first: FloatArray


@dataclass(frozen=True)
class OneFormField:
    """Covector field Ψ_i plus optional exact terms dlog α.

    Attributes:
        coords: Coordinate names.
        params: Parameter names the components may reference.
        components: One expression per coordinate.
        exact_terms: Expressions α whose logarithmic differentials are added.

    """

    coords: tuple[str, ...]
    params: tuple[str, ...]
    components: tuple[ScalarExpr, ...]
    exact_terms: tuple[ScalarExpr, ...] = ()

    def __post_init__(self):
        """Check that every expression lives on the same chart."""
        if len(self.components) != len(self.coords):
            raise DimensionMismatchError(
                f"1-form needs {len(self.coords)} components, "
                f"got {len(self.components)}"
            )
        _check_exprs([*self.components, *self.exact_terms], self.coords)

    @classmethod
    def from_strings(
        cls,
        components: Sequence[str],
        coords: Sequence[str],
        params: Sequence[str] = (),
        *,
        dlog: Sequence[str] = (),
    ) -> OneFormField:
        """Parse a 1-form from its component texts and optional dlog terms."""
        coords = tuple(coords)
        params = tuple(params)
        return cls(
            coords,
            params,
            tuple(parse(text, coords, params) for text in components),
            tuple(parse(text, coords, params) for text in dlog),
        )

    @classmethod
    def zero(cls, coords: Sequence[str], params: Sequence[str] = ()) -> OneFormField:
        """Return the vanishing 1-form."""
        return cls.from_strings(["0"] * len(coords), coords, params)

    @property
    def dim(self) -> int:
        """Number of coordinates."""
        return len(self.coords)

    def plus_dlog(self, alpha: str, *, params: Sequence[str] = ()) -> OneFormField:
        """Return the form with dlog α added."""
        all_params = tuple(dict.fromkeys([*self.params, *params]))
        return OneFormField(
            self.coords,
            all_params,
            tuple(parse(e.text, self.coords, all_params) for e in self.components),
            tuple(
                parse(e.text, self.coords, all_params)
                for e in (*self.exact_terms, parse(alpha, self.coords, all_params))
            ),
        )

    def values(self, pt: FloatArray, binds: Bindings) -> FloatArray:
        """Evaluate the covector at pt."""
        result = np.array([evaluate(e, pt, binds) for e in self.components])
        for alpha in self.exact_terms:
            jet = eval_jet2(alpha, pt, binds)
            if jet.value == 0.0:
                raise DomainError(f"dlog of '{alpha.text}' where it vanishes")
            result = result + jet.grad / jet.value
        return result

    def jets(self, pt: FloatArray, binds: Bindings) -> FormJets:
        """Evaluate the covector and its first derivatives at pt."""
        n = self.dim
        value = np.empty(n)
        first = np.empty((n, n))
        for i, e in enumerate(self.components):
            jet = eval_jet2(e, pt, binds)
            value[i] = jet.value
            first[:, i] = jet.grad
        for alpha in self.exact_terms:
            jet = eval_jet2(alpha, pt, binds)
            if jet.value == 0.0:
                raise DomainError(f"dlog of '{alpha.text}' where it vanishes")
            value += jet.grad / jet.value
            first += jet.hess / jet.value - np.outer(jet.grad, jet.grad) / jet.value**2
        return FormJets(value, first)

    def values_many(self, points: FloatArray, binds: Bindings) -> FloatArray:
        """Evaluate the covector at every row of points, returning (m, n)."""
        points = as_points(points, self.dim)
        result = np.stack(
            [evaluate_many(e, points, binds) for e in self.components], axis=-1
        )
        for alpha in self.exact_terms:
            jet = eval_jet2_many(alpha, points, binds)
            if np.any(jet.value == 0.0):
                raise DomainError(f"dlog of '{alpha.text}' where it vanishes")
            result = result + jet.grad / jet.value[:, None]
        return result

    def jets_many(self, points: FloatArray, binds: Bindings) -> FormJets:
        """Evaluate the covector and its derivatives at every row of points."""
        points = as_points(points, self.dim)
        m, n = points.shape
        value = np.empty((m, n))
        first = np.empty((m, n, n))
        for i, e in enumerate(self.components):
            jet = eval_jet2_many(e, points, binds)
            value[:, i] = jet.value
            first[:, :, i] = jet.grad
        for alpha in self.exact_terms:
            jet = eval_jet2_many(alpha, points, binds)
            if np.any(jet.value == 0.0):
                raise DomainError(f"dlog of '{alpha.text}' where it vanishes")
            scale = jet.value[:, None, None]
            value += jet.grad / jet.value[:, None]
            first += (
                jet.hess / scale
                - jet.grad[:, :, None] * jet.grad[:, None, :] / scale**2
            )
        return FormJets(value, first)


@dataclass(frozen=True, eq=False)
class DeckMap:
    """Affine map x -> A x + b of the cover.

    Attributes:
        linear: The invertible matrix A.
        translation: The vector b.
        label: Optional human-readable name.

    """

    linear: FloatArray
    translation: FloatArray
    label: str = ""
    inverse_linear: FloatArray = field(init=False, repr=False)

    def __post_init__(self):
        """Validate shapes, reject singular linear parts and cache the inverse."""
        linear = np.array(self.linear, dtype=float)
        translation = np.array(self.translation, dtype=float)
        n = translation.shape[0] if translation.ndim == 1 else -1
        if linear.shape != (n, n):
            raise DimensionMismatchError(
                f"Deck map with translation of shape {translation.shape} "
                f"needs a square linear part, got {linear.shape}"
            )
        if abs(np.linalg.det(linear)) < TOL_SINGULAR_DET:
            raise DegenerateDeckMapError(
                f"Deck map {self.label or linear.tolist()} is not invertible"
            )
        inverse = np.linalg.inv(linear)
        for array in (linear, translation, inverse):
            array.setflags(write=False)
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "translation", translation)
        object.__setattr__(self, "inverse_linear", inverse)

    @classmethod
    def identity(cls, dim: int) -> DeckMap:
        """Return the identity map."""
        return cls(np.eye(dim), np.zeros(dim), "id")

    @classmethod
    def shift(cls, offset: Sequence[float], label: str = "") -> DeckMap:
        """Return the pure translation by offset."""
        return cls(np.eye(len(offset)), np.asarray(offset, dtype=float), label)

    @property
    def dim(self) -> int:
        """Dimension of the cover."""
        return self.translation.shape[0]

    def __call__(self, pt: FloatArray) -> FloatArray:
        """Map a point."""
        return self.linear @ pt + self.translation

    def inverse(self) -> DeckMap:
        """Return the inverse map."""
        label = f"{self.label}^-1" if self.label else ""
        return DeckMap(
            self.inverse_linear, -self.inverse_linear @ self.translation, label
        )

    def then(self, other: DeckMap) -> DeckMap:
        """Return the composition applying self first and other second."""
        label = "*".join(item for item in (self.label, other.label) if item)
        return DeckMap(
            other.linear @ self.linear,
            other.linear @ self.translation + other.translation,
            label,
        )

    def is_identity(self, tol: float = 0.0) -> bool:
        """Return True if the map moves no point by more than tol."""
        return bool(
            np.max(np.abs(self.linear - np.eye(self.dim))) <= tol
            and np.max(np.abs(self.translation), initial=0.0) <= tol
        )

    def pushforward_vector(self, v: FloatArray) -> FloatArray:
        """Push a tangent vector forward."""
        return self.linear @ v

    def pullback_covector(self, w: FloatArray) -> FloatArray:
        """Pull back a covector given at the image point."""
        return self.linear.T @ w

    def pullback_bilinear(self, b: FloatArray) -> FloatArray:
        """Pull back a bilinear form given at the image point."""
        return self.linear.T @ b @ self.linear


@dataclass(frozen=True, eq=False)
class QuotientSpec:
    """Quotient of the cover by the group generated by affine deck maps."""

    coords: tuple[str, ...]
    generators: tuple[DeckMap, ...]
    basepoint: FloatArray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        """Check dimensions and fill default generator labels."""
        n = len(self.coords)
        object.__setattr__(self, "basepoint", as_point(self.basepoint, n))
        for index, gen in enumerate(self.generators):
            if gen.dim != n:
                raise DimensionMismatchError(
                    f"Generator {index} acts on dimension {gen.dim}, expected {n}"
                )
        labels = tuple(self.labels) or tuple(
            gen.label or f"g{index}" for index, gen in enumerate(self.generators)
        )
        if len(labels) != len(self.generators):
            raise InvalidParameterError("One label per generator is required")
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        """Dimension of the cover."""
        return len(self.coords)

    def generator(self, index: int) -> DeckMap:
        """Return a generator by index.

        Raises:
            InvalidParameterError: If the index is out of range.

        """
        if not 0 <= index < len(self.generators):
            raise InvalidParameterError(
                f"Generator index {index} out of range 0..{len(self.generators) - 1}"
            )
        return self.generators[index]

    def word_map(self, word: Sequence[int]) -> DeckMap:
        """Compose the generators of a word, the first letter acting first."""
        if not word:
            raise InvalidParameterError("Generator word must not be empty")
        result = self.generator(word[0])
        for index in word[1:]:
            result = result.then(self.generator(index))
        return result

    def word_label(self, word: Sequence[int]) -> str:
        """Return the labels of a word joined by commas."""
        return ",".join(self.labels[index] for index in word)


@dataclass(frozen=True)
class SampleBox:
    """Axis-aligned box of the cover used for seeded sampling."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        """Check that the bounds match and are ordered."""
        if len(self.lower) != len(self.upper):
            raise DimensionMismatchError("Sample box bounds differ in dimension")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper, strict=True)):
            raise InvalidParameterError("Sample box lower bound exceeds upper bound")

    @classmethod
    def around(cls, center: Sequence[float], half_width: float = 1.0) -> SampleBox:
        """Return the cube of the given half width around center."""
        return cls(
            tuple(float(c) - half_width for c in center),
            tuple(float(c) + half_width for c in center),
        )

    @property
    def dim(self) -> int:
        """Number of coordinates."""
        return len(self.lower)


def sample_points(box: SampleBox, count: int, seed: int) -> FloatArray:
    """Draw count points uniformly from box with a seeded generator.

    Returns:
        FloatArray: Array of shape (count, dim); same seed, same points.

    """
    rng = np.random.default_rng(seed)
    return rng.uniform(box.lower, box.upper, size=(count, box.dim))


def signature_of(matrix: FloatArray) -> tuple[int, int]:
    """Return the (negative, positive) eigenvalue counts of a symmetric matrix.

    Raises:
        SingularMetricError: If an eigenvalue is zero within the zero threshold.

    """
    eigenvalues = np.linalg.eigvalsh(matrix)
    scale = max(1.0, float(np.max(np.abs(eigenvalues))))
    if np.any(np.abs(eigenvalues) < TOL_EIGEN_ZERO * scale):
        raise SingularMetricError(f"Degenerate form with eigenvalues {eigenvalues}")
    return int(np.sum(eigenvalues < 0)), int(np.sum(eigenvalues > 0))


def check_invertible(matrix: FloatArray) -> None:
    """Reject matrices whose determinant is small relative to their row norms.

    A stack of matrices is rejected as soon as one of them is.

    Raises:
        SingularMetricError: If |det| < 1e-12 times the Hadamard bound.

    """
    bound = np.prod(np.linalg.norm(matrix, axis=-1), axis=-1)
    if np.any(bound == 0.0) or np.any(
        np.abs(np.linalg.det(matrix)) < TOL_SINGULAR_DET * bound
    ):
        raise SingularMetricError("Metric is singular")


def metric_at(h: MetricField, pt: Sequence[float], binds: Bindings) -> FloatArray:
    """Evaluate a metric and check it is invertible with its declared signature.

    Raises:
        SingularMetricError: If the matrix is singular at pt.
        SignatureMismatchError: If the eigenvalue signs differ from the signature.

    """
    point = as_point(pt, h.dim)
    matrix = h.matrix(point, binds)
    try:
        check_invertible(matrix)
        signature = signature_of(matrix)
    except SingularMetricError as e:
        raise SingularMetricError(f"Metric is singular at {point.tolist()}") from e
    if signature != tuple(h.signature):
        raise SignatureMismatchError(
            f"Metric has signature {signature} at {point.tolist()}, "
            f"declared {tuple(h.signature)}"
        )
    return matrix


def inverse_metric_at(
    h: MetricField, pt: Sequence[float], binds: Bindings
) -> FloatArray:
    """Return the inverse of metric_at, symmetrized."""
    inverse = np.linalg.inv(metric_at(h, pt, binds))
    return 0.5 * (inverse + inverse.T)


def closedness_residual(
    w: OneFormField, pt: Sequence[float], binds: Bindings
) -> FloatArray:
    """Return the exterior derivative (dw)_ij = ∂_i w_j - ∂_j w_i at pt."""
    first = w.jets(as_point(pt, w.dim), binds).first
    return first - first.T


def deck_invariance_residual(
    target: MetricField | OneFormField,
    phi: DeckMap,
    pt: Sequence[float],
    binds: Bindings,
) -> float:
    """Return the max-norm of the pullback of a field by phi minus the field.

    Args:
        target: A metric or 1-form field.
        phi: The deck map.
        pt: The point of the cover.
        binds: Parameter values.

    """
    point = as_point(pt, target.dim)
    image = phi(point)
    if isinstance(target, MetricField):
        pulled = phi.pullback_bilinear(target.matrix(image, binds))
        own = target.matrix(point, binds)
    else:
        pulled = phi.pullback_covector(target.values(image, binds))
        own = target.values(point, binds)
    return float(np.max(np.abs(pulled - own)))
