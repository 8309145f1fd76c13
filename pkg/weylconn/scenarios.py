"""Built-in scenarios, scenario files and their preflight checks.

Three scenarios are shipped:

- ``rw-klein``: flat Robertson-Walker metric on R x K with the Klein bottle K
  generated by (x, y, z) shifts, the y-shift flipping z, and the closed form
  Ψ = -a dx - b dy + dlog α.
- ``rw-torus``: the same data with three pure translations.
- ``deg-cylinder``: the product metric g1 + g2 on a cylinder identified under
  θ -> θ + π, locally but not globally metric, without a Weyl pair.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from weylconn.config import TOL_CLOSEDNESS, TOL_INVARIANCE
from weylconn.connection import ConnectionField, levi_civita, weyl_connection
from weylconn.exceptions import (
    InvalidParameterError,
    InvalidScenarioError,
    NumericalError,
    ScenarioFileError,
    UnknownIdentifierError,
)
from weylconn.expr import Bindings, ScalarExpr, evaluate, parse
from weylconn.fields import (
    DeckMap,
    MetricField,
    OneFormField,
    QuotientSpec,
    SampleBox,
    closedness_residual,
    deck_invariance_residual,
    metric_at,
    sample_points,
)
from weylconn.schemas import ScenarioFile
from weylconn.transport import HolonomyOutcome

RW_COORDS = ("t", "x", "y", "z")
RW_PARAMS = ("p", "q", "r", "a", "b")
SLICE_COORDS = ("x", "y", "z")
CYLINDER_COORDS = ("t", "theta", "x", "y")
PREFLIGHT_POINTS = 20


class GoldenTag(str, Enum):
    """Provenance of a golden value."""

    PUBLISHED = "published"
    DERIVED = "derived"
    TRIVIAL = "trivial"


@dataclass(frozen=True)
class GoldenChristoffel:
    """Expected Γ^k_{ij} as an expression over the scenario chart."""

    k: int
    i: int
    j: int
    value: ScalarExpr
    tag: GoldenTag
    citation: str


@dataclass(frozen=True)
class GoldenPeriod:
    """Expected period of Ψ along a generator loop."""

    generator: int
    value: ScalarExpr
    tag: GoldenTag
    citation: str


@dataclass(frozen=True)
class GoldenHolonomy:
    """Expected outcome of transporting the local metric around a generator."""

    generator: int
    outcome: HolonomyOutcome
    causal_flip: bool
    tag: GoldenTag
    citation: str


@dataclass(frozen=True)
class GoldenParallel:
    """Bilinear form expected to be parallel for the scenario connection."""

    form: MetricField
    tag: GoldenTag
    citation: str


@dataclass(frozen=True, eq=False)
class Scenario:
    """Executable scenario: quotient, metric, optional Weyl form and golden data.

    Attributes:
        name: Scenario name.
        spec: The quotient description.
        h: The metric of the cover.
        psi: The closed 1-form, None when the connection has no Weyl pair.
        binds: Default parameter values.
        box: Fundamental box used for sampling.
        seed: Default sampling seed, if the scenario fixes one.
        local_metric: A local parallel metric whose Levi-Civita connection is the
            scenario connection on the cover.
        spatial_slice: The spatial slice scenario, if any.
        expected_failures: Names of checks predicted to fail.

    """

    name: str
    spec: QuotientSpec
    h: MetricField
    psi: OneFormField | None
    binds: Bindings
    box: SampleBox
    seed: int | None = None
    local_metric: MetricField | None = None
    spatial_slice: Scenario | None = None
    golden_christoffel: tuple[GoldenChristoffel, ...] = ()
    golden_periods: tuple[GoldenPeriod, ...] = ()
    golden_holonomy: tuple[GoldenHolonomy, ...] = ()
    golden_parallel: tuple[GoldenParallel, ...] = ()
    expected_failures: frozenset[str] = field(default_factory=frozenset)

    @cached_property
    def connection(self) -> ConnectionField:
        """Weyl connection of (h, psi), or Levi-Civita of h without psi."""
        if self.psi is None:
            return levi_civita(self.h)
        return weyl_connection(self.h, self.psi)

    @property
    def coords(self) -> tuple[str, ...]:
        """Coordinate names."""
        return self.spec.coords

    @property
    def dim(self) -> int:
        """Dimension of the cover."""
        return self.spec.dim

    def samples(self, count: int, seed: int | None = None) -> np.ndarray:
        """Return seeded sample points of the fundamental box."""
        if seed is None:
            seed = 0 if self.seed is None else self.seed
        return sample_points(self.box, count, seed)

    def golden_christoffel_at(self, pt: np.ndarray) -> np.ndarray | None:
        """Return the golden Christoffel array at pt, zero outside the table."""
        if not self.golden_christoffel:
            return None
        n = self.dim
        gamma = np.zeros((n, n, n))
        for entry in self.golden_christoffel:
            value = evaluate(entry.value, pt, self.binds)
            gamma[entry.k, entry.i, entry.j] = gamma[entry.k, entry.j, entry.i] = value
        return gamma


def preflight(scenario: Scenario, count: int = PREFLIGHT_POINTS) -> None:
    """Check signature, closedness and deck invariance at sampled points.

    Raises:
        InvalidScenarioError: Naming the failing check and point.

    """
    binds = scenario.binds
    for pt in scenario.samples(count):
        where = f"at {pt.tolist()}"
        try:
            metric_at(scenario.h, pt, binds)
        except NumericalError as e:
            raise InvalidScenarioError(f"Check 'signature' failed {where}: {e}") from e
        if scenario.psi is not None:
            residual = float(
                np.max(np.abs(closedness_residual(scenario.psi, pt, binds)))
            )
            if residual > TOL_CLOSEDNESS:
                raise InvalidScenarioError(
                    f"Check 'closedness' failed {where}: residual {residual:.3e}"
                )
        for index, phi in enumerate(scenario.spec.generators):
            label = scenario.spec.labels[index]
            if scenario.psi is not None:
                residual = deck_invariance_residual(scenario.psi, phi, pt, binds)
                if residual > TOL_INVARIANCE:
                    raise InvalidScenarioError(
                        f"Check 'psi_invariance[{label}]' failed {where}: "
                        f"residual {residual:.3e}"
                    )
            if scenario.h.projects_to_quotient:
                residual = deck_invariance_residual(scenario.h, phi, pt, binds)
                if residual > TOL_INVARIANCE * max(
                    1.0, float(np.max(np.abs(scenario.h.matrix(pt, binds))))
                ):
                    raise InvalidScenarioError(
                        f"Check 'h_invariance[{label}]' failed {where}: "
                        f"residual {residual:.3e}"
                    )


def _check_positive(
    e: ScalarExpr, points: np.ndarray, binds: Bindings, check: str
) -> None:
    for pt in points:
        value = evaluate(e, pt, binds)
        if not value > 0:
            raise InvalidScenarioError(
                f"Check '{check}' failed at {pt.tolist()}: '{e.text}' = {value!r}"
            )


def _check_invariant(
    e: ScalarExpr, spec: QuotientSpec, points: np.ndarray, binds: Bindings
) -> None:
    for pt in points:
        value = evaluate(e, pt, binds)
        for label, phi in zip(spec.labels, spec.generators, strict=True):
            moved = evaluate(e, phi(pt), binds)
            if abs(moved - value) > TOL_INVARIANCE * max(1.0, abs(value)):
                raise InvalidScenarioError(
                    f"Check 'alpha_invariance[{label}]' failed at {pt.tolist()}: "
                    f"'{e.text}' changes from {value!r} to {moved!r}"
                )


def _interval(length: float) -> tuple[float, float]:
    return (0.0, length) if length > 0 else (length, 0.0)


def _slice_table(coords: tuple[str, ...], params: tuple[str, ...]):
    x, y, z = 0, 1, 2
    citation = "Christoffel table of the spatial slice"
    entries = [
        (x, x, x, "a/2"),
        (y, x, y, "a/2"),
        (z, x, z, "a/2"),
        (x, x, y, "b/2"),
        (y, y, y, "b/2"),
        (z, y, z, "b/2"),
        (x, y, y, "-a/2"),
        (x, z, z, "-a/2"),
        (y, x, x, "-b/2"),
        (y, z, z, "-b/2"),
    ]
    return tuple(
        GoldenChristoffel(
            k, i, j, parse(text, coords, params), GoldenTag.PUBLISHED, citation
        )
        for k, i, j, text in entries
    )


def _rw_scenario(
    name: str,
    flip_z: bool,
    p: float,
    q: float,
    r: float,
    a: float,
    b: float,
    S_expr: str,
    alpha_expr: str,
    t0: float,
) -> Scenario:
    if 0.0 in (p, q, r):
        raise InvalidParameterError("Identification lengths p, q, r must be non-zero")
    binds = Bindings(p=p, q=q, r=r, a=a, b=b)
    scale = parse(S_expr, RW_COORDS, RW_PARAMS)
    alpha = parse(alpha_expr, RW_COORDS, RW_PARAMS)
    h = MetricField.from_strings(
        [
            ["-1", "0", "0", "0"],
            [f"({scale.text})^2", "0", "0"],
            [f"({scale.text})^2", "0"],
            [f"({scale.text})^2"],
        ],
        RW_COORDS,
        RW_PARAMS,
        signature=(1, 3),
    )
    dlog = [alpha.text] if alpha.depends_on_coords else []
    psi = OneFormField.from_strings(
        ["0", "-a", "-b", "0"], RW_COORDS, RW_PARAMS, dlog=dlog
    )
    y_linear = np.diag([1.0, 1.0, 1.0, -1.0 if flip_z else 1.0])
    spec = QuotientSpec(
        RW_COORDS,
        (
            DeckMap.shift([0.0, p, 0.0, 0.0], "x"),
            DeckMap(y_linear, np.array([0.0, 0.0, q, 0.0]), "y"),
            DeckMap.shift([0.0, 0.0, 0.0, r], "z"),
        ),
        np.zeros(4),
    )
    bounds = [(-1.0, 1.0), _interval(p), _interval(q), _interval(r)]
    box = SampleBox(tuple(lo for lo, _ in bounds), tuple(hi for _, hi in bounds))
    golden_periods = tuple(
        GoldenPeriod(
            index,
            parse(text, RW_COORDS, RW_PARAMS),
            GoldenTag.DERIVED,
            "periods of the closed part -a dx - b dy",
        )
        for index, text in enumerate(["-a*p", "-b*q", "0"])
    )
    golden_holonomy = tuple(
        GoldenHolonomy(
            index,
            HolonomyOutcome.POSITIVE_MULTIPLE,
            False,
            GoldenTag.DERIVED,
            "scale exp(-period) of the local parallel metric",
        )
        for index in range(3)
    )
    scenario = Scenario(
        name=name,
        spec=spec,
        h=h,
        psi=psi,
        binds=binds,
        box=box,
        local_metric=h.scaled(f"exp(a*x + b*y)/({alpha.text})"),
        spatial_slice=_rw_slice(name, flip_z, binds, scale, alpha_expr, t0, box),
        golden_periods=golden_periods,
        golden_holonomy=golden_holonomy,
    )
    samples = scenario.samples(PREFLIGHT_POINTS)
    _check_positive(scale, samples, binds, "S_positive")
    _check_positive(alpha, samples, binds, "alpha_positive")
    _check_invariant(alpha, spec, samples, binds)
    preflight(scenario)
    return scenario


def _rw_slice(
    name: str,
    flip_z: bool,
    binds: Bindings,
    scale: ScalarExpr,
    alpha_expr: str,
    t0: float,
    box: SampleBox,
) -> Scenario | None:
    try:
        alpha = parse(alpha_expr, SLICE_COORDS, RW_PARAMS)
    except UnknownIdentifierError:
        return None
    factor = evaluate(scale, (t0, 0.0, 0.0, 0.0), binds) ** 2
    h = MetricField.from_strings(
        [[repr(factor), "0", "0"], [repr(factor), "0"], [repr(factor)]],
        SLICE_COORDS,
        RW_PARAMS,
        signature=(0, 3),
    )
    dlog = [alpha.text] if alpha.depends_on_coords else []
    psi = OneFormField.from_strings(
        ["-a", "-b", "0"], SLICE_COORDS, RW_PARAMS, dlog=dlog
    )
    spec = QuotientSpec(
        SLICE_COORDS,
        (
            DeckMap.shift([binds["p"], 0.0, 0.0], "x"),
            DeckMap(
                np.diag([1.0, 1.0, -1.0 if flip_z else 1.0]),
                np.array([0.0, binds["q"], 0.0]),
                "y",
            ),
            DeckMap.shift([0.0, 0.0, binds["r"]], "z"),
        ),
        np.zeros(3),
    )
    golden = () if alpha.depends_on_coords else _slice_table(SLICE_COORDS, RW_PARAMS)
    return Scenario(
        name=f"{name}-slice",
        spec=spec,
        h=h,
        psi=psi,
        binds=binds,
        box=SampleBox(box.lower[1:], box.upper[1:]),
        local_metric=h.scaled(f"exp(a*x + b*y)/({alpha.text})"),
        golden_christoffel=golden,
    )


def build_rw_klein(
    p: float = 1.0,
    q: float = 1.0,
    r: float = 1.0,
    a: float = 1.0,
    b: float = 2.0,
    S_expr: str = "1",
    alpha_expr: str = "1",
    t0: float = 0.0,
) -> Scenario:
    """Build the Robertson-Walker scenario on R x K.

    Args:
        p: Period of the x identification.
        q: Period of the y identification, which also flips z.
        r: Period of the z identification.
        a: Coefficient of -dx in Ψ.
        b: Coefficient of -dy in Ψ.
        S_expr: Scale factor S(t).
        alpha_expr: Positive deck-invariant α whose dlog is added to Ψ.
        t0: Time of the spatial slice.

    Raises:
        InvalidParameterError: If p, q or r is zero.
        InvalidScenarioError: If S or α is not positive or α is not deck-invariant.

    """
    return _rw_scenario("rw-klein", True, p, q, r, a, b, S_expr, alpha_expr, t0)


def build_rw_torus(
    p: float = 1.0,
    q: float = 1.0,
    r: float = 1.0,
    a: float = 1.0,
    b: float = 2.0,
    S_expr: str = "1",
    alpha_expr: str = "1",
    t0: float = 0.0,
) -> Scenario:
    """Build the Robertson-Walker scenario on R x T^3 (no z flip)."""
    return _rw_scenario("rw-torus", False, p, q, r, a, b, S_expr, alpha_expr, t0)


def parallel_family_member(a: float, b1: float, b2: float, b3: float) -> MetricField:
    """Return a g1 + b1 dx^2 + 2 b2 dx dy + b3 dy^2 on the cylinder chart.

    Raises:
        InvalidParameterError: Unless a != 0, b1 > 0 and b1 b3 - b2^2 > 0.

    """
    if a == 0 or b1 <= 0 or b1 * b3 - b2 * b2 <= 0:
        raise InvalidParameterError(
            f"Family member ({a}, {b1}, {b2}, {b3}) needs a != 0, b1 > 0 "
            "and b1*b3 - b2^2 > 0"
        )
    return MetricField.from_strings(
        [
            [f"{a!r}*(-cos(theta))", f"{a!r}*sin(theta)", "0", "0"],
            [f"{a!r}*cos(theta)", "0", "0"],
            [repr(float(b1)), repr(float(b2))],
            [repr(float(b3))],
        ],
        CYLINDER_COORDS,
        signature=(1, 3),
        projects_to_quotient=False,
    )


def build_deg_cylinder() -> Scenario:
    """Build the degenerate cylinder scenario with h = g1 + g2 on the cover."""
    h = MetricField.from_strings(
        [
            ["-cos(theta)", "sin(theta)", "0", "0"],
            ["cos(theta)", "0", "0"],
            ["1", "0"],
            ["1"],
        ],
        CYLINDER_COORDS,
        signature=(1, 3),
        projects_to_quotient=False,
    )
    spec = QuotientSpec(
        CYLINDER_COORDS,
        (DeckMap.shift([0.0, math.pi, 0.0, 0.0], "theta"),),
        np.zeros(4),
    )
    t, theta = 0, 1
    citation = "Christoffel table of g1"
    table = [
        (theta, theta, theta, "0.5*sin(theta)*cos(theta)"),
        (theta, t, t, "-0.5*sin(theta)*cos(theta)"),
        (t, t, theta, "-0.5*sin(theta)*cos(theta)"),
        (t, t, t, "-0.5*sin(theta)^2"),
        (theta, t, theta, "0.5*sin(theta)^2"),
        (t, theta, theta, "-(cos(theta)^2 + 0.5*sin(theta)^2)"),
    ]
    golden = tuple(
        GoldenChristoffel(
            k, i, j, parse(text, CYLINDER_COORDS), GoldenTag.PUBLISHED, citation
        )
        for k, i, j, text in table
    )
    scenario = Scenario(
        name="deg-cylinder",
        spec=spec,
        h=h,
        psi=None,
        binds=Bindings(),
        box=SampleBox((-1.0, 0.0, -1.0, -1.0), (1.0, math.pi, 1.0, 1.0)),
        local_metric=h,
        golden_christoffel=golden,
        golden_holonomy=(
            GoldenHolonomy(
                0,
                HolonomyOutcome.NOT_POSITIVE_MULTIPLE,
                True,
                GoldenTag.PUBLISHED,
                "g1 changes sign under theta -> theta + pi",
            ),
        ),
        golden_parallel=(
            GoldenParallel(
                parallel_family_member(1.0, 1.0, 0.0, 1.0),
                GoldenTag.PUBLISHED,
                "family a g1 + b1 dx^2 + 2 b2 dx dy + b3 dy^2",
            ),
        ),
        expected_failures=frozenset({"h_invariance"}),
    )
    preflight(scenario)
    return scenario


BUILTIN_SCENARIOS: dict[str, Callable[..., Scenario]] = {
    "rw-klein": build_rw_klein,
    "rw-torus": build_rw_torus,
    "deg-cylinder": build_deg_cylinder,
}
BUILTIN_PARAMETERS: dict[str, tuple[str, ...]] = {
    "rw-klein": (*RW_PARAMS, "t0"),
    "rw-torus": (*RW_PARAMS, "t0"),
    "deg-cylinder": (),
}


def load_scenario_file(
    path: Path | str, overrides: Mapping[str, float] | None = None
) -> Scenario:
    """Read a JSON scenario file and run its preflight checks.

    Args:
        path: The file path.
        overrides: Parameter values replacing the ones in the file.

    Raises:
        ScenarioFileError: If the file cannot be read or does not match the schema.
        InvalidScenarioError: If a preflight check fails.

    """
    try:
        document = ScenarioFile.model_validate_json(Path(path).read_bytes())
    except OSError as e:
        raise ScenarioFileError(f"Cannot read scenario file '{path}': {e}") from e
    except ValidationError as e:
        errors = "; ".join(
            f"{'.'.join(str(item) for item in err['loc'])}: {err['msg']}"
            for err in e.errors()
        )
        raise ScenarioFileError(f"Invalid scenario file '{path}': {errors}") from e
    parameters = dict(document.parameters)
    for name, value in (overrides or {}).items():
        if name not in parameters:
            raise InvalidParameterError(f"Unknown parameter '{name}'")
        parameters[name] = value
    coords = tuple(document.coordinates)
    params = tuple(parameters)
    h = MetricField.from_strings(
        document.metric,
        coords,
        params,
        signature=document.signature,
        projects_to_quotient=document.projects_to_quotient,
    )
    psi = None
    if document.psi is not None:
        psi = OneFormField.from_strings(
            document.psi, coords, params, dlog=document.psi_dlog
        )
    spec = QuotientSpec(
        coords,
        tuple(
            DeckMap(np.array(gen.matrix), np.array(gen.translation), gen.label)
            for gen in document.generators
        ),
        np.array(document.basepoint),
    )
    if document.sample_box is None:
        box = SampleBox.around(document.basepoint)
    else:
        lower, upper = document.sample_box.lower, document.sample_box.upper
        box = SampleBox(tuple(lower), tuple(upper))
    scenario = Scenario(
        name=document.name,
        spec=spec,
        h=h,
        psi=psi,
        binds=Bindings(parameters),
        box=box,
        seed=document.seed,
        expected_failures=frozenset(document.expected_failures),
    )
    preflight(scenario)
    return scenario


def get_scenario(
    name_or_path: str, overrides: Mapping[str, float] | None = None
) -> Scenario:
    """Resolve a built-in scenario name, or else a scenario file path.

    Raises:
        InvalidParameterError: If an override names an unknown parameter.
        ScenarioFileError: If the name is not built-in and the file is unusable.

    """
    overrides = dict(overrides or {})
    builder = BUILTIN_SCENARIOS.get(name_or_path)
    if builder is None:
        return load_scenario_file(name_or_path, overrides)
    allowed = BUILTIN_PARAMETERS[name_or_path]
    unknown = sorted(set(overrides) - set(allowed))
    if unknown:
        raise InvalidParameterError(
            f"Unknown parameters for {name_or_path}: {', '.join(unknown)}"
        )
    return builder(**overrides)

