"""Command line entry point.

Exit codes: 0 when every check passes, 1 when a numeric check fails and 2 on input
errors or when a computation cannot be carried out.
"""

import argparse
import math
import sys
from collections.abc import Sequence
from logging import Logger
from pathlib import Path

import numpy as np

from weylconn.config import (
    TOL_BIANCHI,
    TOL_CHRISTOFFEL_PRINT,
    TOL_CLOSEDNESS,
    TOL_COCYCLE,
    TOL_EINSTEIN_GAUGE,
    TOL_EQUIVARIANCE,
    TOL_FIT_RESIDUAL,
    TOL_GEODESIC_GATE,
    TOL_GOLDEN_CHRISTOFFEL,
    TOL_HOLONOMY_SCALE,
    TOL_INVARIANCE,
    TOL_NABLA_H,
    TOL_PARALLEL,
    Settings,
    get_level,
    get_settings,
)
from weylconn.connection import (
    deck_equivariance_residual,
    nabla_h_residual,
    parallel_residual,
)
from weylconn.curvature import bianchi_residual, curvature_tensors, ricci_asymmetry
from weylconn.exceptions import (
    ClassificationUnavailableError,
    InputError,
    NumericalError,
    WeylConnError,
)
from weylconn.expr import evaluate
from weylconn.fields import (
    closedness_residual,
    deck_invariance_residual,
    metric_at,
)
from weylconn.logger import get_logger
from weylconn.scenarios import Scenario, get_scenario
from weylconn.schemas import CheckResult, Report, ReportSection
from weylconn.transport import (
    HolonomyOutcome,
    Segment,
    causal_flip,
    generator_loop,
    geodesic,
    holonomy_report,
    holonomy_scale,
    line_integral,
    transport_vector,
    word_loop,
    write_trajectory_csv,
)
from weylconn.utils import (
    christoffel_label,
    parse_assignments,
    parse_real_list,
    split_camel_case,
)

GAUGE_RESCALES = (0.5, 2.0, 10.0)


def _max(values) -> float:
    return float(max(values, default=0.0))


def _floats(array) -> list:
    return np.asarray(array, dtype=float).tolist()


def _scaled_invariance(h, phi, pt, binds) -> float:
    residual = deck_invariance_residual(h, phi, pt, binds)
    return residual / max(1.0, float(np.max(np.abs(h.matrix(pt, binds)))))


def _golden_christoffel_check(scenario: Scenario, points) -> CheckResult | None:
    if not scenario.golden_christoffel:
        return None
    conn = scenario.connection
    deviation = _max(
        float(
            np.max(
                np.abs(
                    conn.christoffel(pt, scenario.binds)
                    - scenario.golden_christoffel_at(pt)
                )
            )
        )
        for pt in points
    )
    return CheckResult(
        name=f"golden_christoffel[{scenario.name}]",
        value=deviation,
        tolerance=TOL_GOLDEN_CHRISTOFFEL,
    )


def cmd_verify(
    scenario: Scenario, *, seed: int, points: int, logger: Logger
) -> ReportSection:
    """Run closedness, invariance, defining-equation and equivariance checks."""
    logger.info("Verifying scenario %s at %d points", scenario.name, points)
    binds = scenario.binds
    samples = scenario.samples(points, seed)
    conn = scenario.connection
    spec = scenario.spec
    checks = []
    failures = []
    for pt in samples:
        try:
            metric_at(scenario.h, pt, binds)
        except NumericalError as e:
            failures.append(e.message)
    checks.append(
        CheckResult(
            name="signature",
            value=float(len(failures)),
            tolerance=0.5,
            detail=failures[0] if failures else "",
        )
    )
    if failures:
        logger.warning(
            "Metric is unusable at %d of %d sample points", len(failures), points
        )
        return ReportSection(title="verify", checks=checks)
    if scenario.psi is not None:
        psi = scenario.psi
        checks.append(
            CheckResult(
                name="closedness",
                value=_max(
                    float(np.max(np.abs(closedness_residual(psi, pt, binds))))
                    for pt in samples
                ),
                tolerance=TOL_CLOSEDNESS,
            )
        )
        for label, phi in zip(spec.labels, spec.generators, strict=True):
            checks.append(
                CheckResult(
                    name=f"psi_invariance[{label}]",
                    value=_max(
                        deck_invariance_residual(psi, phi, pt, binds) for pt in samples
                    ),
                    tolerance=TOL_INVARIANCE,
                )
            )
    for label, phi in zip(spec.labels, spec.generators, strict=True):
        checks.append(
            CheckResult(
                name=f"h_invariance[{label}]",
                value=_max(
                    _scaled_invariance(scenario.h, phi, pt, binds) for pt in samples
                ),
                tolerance=TOL_INVARIANCE,
                expected_failure="h_invariance" in scenario.expected_failures,
                detail="" if scenario.h.projects_to_quotient else "cover metric only",
            )
        )
    if scenario.psi is not None:
        checks.append(
            CheckResult(
                name="nabla_h",
                value=_max(
                    nabla_h_residual(conn, scenario.h, scenario.psi, pt, binds)
                    for pt in samples
                ),
                tolerance=TOL_NABLA_H,
            )
        )
    for label, phi in zip(spec.labels, spec.generators, strict=True):
        checks.append(
            CheckResult(
                name=f"equivariance[{label}]",
                value=_max(
                    deck_equivariance_residual(conn, phi, pt, binds) for pt in samples
                ),
                tolerance=TOL_EQUIVARIANCE,
            )
        )
    for index, golden in enumerate(scenario.golden_parallel):
        checks.append(
            CheckResult(
                name=f"parallel_form[{index}]",
                value=_max(
                    parallel_residual(conn, golden.form, pt, binds) for pt in samples
                ),
                tolerance=TOL_PARALLEL,
                detail=golden.citation,
            )
        )
    for target in (scenario, scenario.spatial_slice):
        if target is None:
            continue
        check = _golden_christoffel_check(target, target.samples(points, seed))
        if check is not None:
            checks.append(check)
    expected = {check.name for check in checks if check.expected_failure}
    for check in checks:
        if not check.ok:
            logger.warning("Check %s failed with value %g", check.name, check.value)
    if expected:
        logger.info("Checks predicted to fail: %s", ", ".join(sorted(expected)))
    return ReportSection(title="verify", checks=checks)


def cmd_classify(
    scenario: Scenario, *, settings: Settings, logger: Logger
) -> ReportSection:
    """Compute periods, verdict, holonomy scales and cocycle residuals.

    Raises:
        ClassificationUnavailableError: If the scenario has no Weyl pair.

    """
    if scenario.psi is None:
        raise ClassificationUnavailableError(
            f"Scenario {scenario.name} has no (h, psi) pair; "
            "use the transport command for its holonomy"
        )
    logger.info("Classifying scenario %s", scenario.name)
    binds = scenario.binds
    report = holonomy_report(
        scenario.connection,
        scenario.h,
        scenario.psi,
        scenario.spec,
        binds,
        step=settings.RK4_STEP,
        exactness_tol=settings.EXACTNESS_TOL,
        subintervals=settings.QUADRATURE_SUBINTERVALS,
    )
    classification = report.classification
    checks = []
    for golden in scenario.golden_periods:
        period = report.generators[golden.generator].period
        expected = evaluate(golden.value, scenario.spec.basepoint, scenario.binds)
        checks.append(
            CheckResult(
                name=f"period[{scenario.spec.labels[golden.generator]}]",
                value=abs(period - expected),
                tolerance=1e-8,
                detail=f"expected {expected:.12g}",
            )
        )
    for item in report.generators:
        checks.append(
            CheckResult(
                name=f"fit_residual[{item.label}]",
                value=item.holonomy.fit_residual,
                tolerance=TOL_FIT_RESIDUAL,
            )
        )
        expected = item.holonomy.expected
        checks.append(
            CheckResult(
                name=f"scale_law[{item.label}]",
                value=abs(item.holonomy.scale - expected) / expected,
                tolerance=TOL_HOLONOMY_SCALE,
                detail=f"c = {item.holonomy.scale:.9g}, exp(-period) = {expected:.9g}",
            )
        )
    for cocycle in report.cocycles:
        checks.append(
            CheckResult(
                name=f"cocycle[{scenario.spec.word_label(cocycle.word)}]",
                value=cocycle.residual,
                tolerance=TOL_COCYCLE,
            )
        )
    data = {
        "periods": _floats(classification.periods),
        "verdict": classification.verdict.value,
        "scales": [item.holonomy.scale for item in report.generators],
    }
    return ReportSection(title="classify", checks=checks, data=data)


def cmd_christoffel(
    scenario: Scenario, point: Sequence[float] | None, *, use_slice: bool = False
) -> ReportSection:
    """List the Christoffel symbols above the print threshold at a point.

    Raises:
        InputError: If the slice is requested for a scenario without one.

    """
    target = scenario
    if use_slice:
        if scenario.spatial_slice is None:
            raise InputError(f"Scenario {scenario.name} has no spatial slice")
        target = scenario.spatial_slice
    pt = target.spec.basepoint if point is None else np.asarray(point, dtype=float)
    gamma = target.connection.christoffel(pt, target.binds)
    n = target.dim
    entries = {
        christoffel_label(target.coords, k, i, j): float(gamma[k, i, j])
        for k in range(n)
        for i in range(n)
        for j in range(i, n)
        if abs(gamma[k, i, j]) > TOL_CHRISTOFFEL_PRINT
    }
    data = {"point": _floats(pt)}
    data["christoffel"] = entries or "no nonzero Christoffel symbols"
    checks = []
    check = _golden_christoffel_check(target, [pt])
    if check is not None:
        checks.append(check)
    return ReportSection(title=f"christoffel {target.name}", checks=checks, data=data)


def parse_loop(scenario: Scenario, text: str) -> Segment:
    """Parse 'gen:<i>' or 'word:<i>,<j>,...' into a loop from the basepoint.

    Raises:
        InputError: If the syntax is not recognized.

    """
    kind, _, rest = text.partition(":")
    try:
        indices = [int(item) for item in rest.split(",")]
    except ValueError as e:
        raise InputError(f"Invalid loop '{text}'") from e
    if kind == "gen" and len(indices) == 1:
        return generator_loop(scenario.spec, indices[0])
    if kind == "word":
        return word_loop(scenario.spec, indices)
    raise InputError(f"Invalid loop '{text}', use gen:<i> or word:<i>,<j>,...")


def cmd_transport(
    scenario: Scenario,
    loop_text: str,
    object_text: str,
    *,
    settings: Settings,
    logger: Logger,
) -> ReportSection:
    """Transport the metric or a vector around a loop of the quotient."""
    loop = parse_loop(scenario, loop_text)
    binds = scenario.binds
    conn = scenario.connection
    psi = scenario.psi
    logger.info("Transporting %s along %s", object_text, loop_text)
    checks = []
    data = {"loop": loop_text, "start": _floats(loop.start), "end": _floats(loop.end)}
    if object_text == "metric":
        result = holonomy_scale(
            conn,
            scenario.h,
            psi,
            loop,
            binds,
            step=settings.RK4_STEP,
            subintervals=settings.QUADRATURE_SUBINTERVALS,
        )
        flip = causal_flip(result.initial, result.transported)
        data.update(
            {
                "outcome": result.outcome.value,
                "scale": result.scale,
                "fit_residual": result.fit_residual,
                "initial": _floats(result.initial),
                "transported": _floats(result.transported),
                "causal_structure_ambiguous": flip is not None,
            }
        )
        if flip is not None:
            data["flip_vector"] = _floats(flip.vector)
            data["flip_values"] = [flip.before, flip.after]
        if result.period is not None:
            data["period"] = result.period
            if result.outcome is HolonomyOutcome.POSITIVE_MULTIPLE:
                checks.append(
                    CheckResult(
                        name="scale_law",
                        value=abs(result.scale - result.expected) / result.expected,
                        tolerance=TOL_HOLONOMY_SCALE,
                    )
                )
        for golden in scenario.golden_holonomy:
            if loop_text != f"gen:{golden.generator}":
                continue
            checks.append(
                CheckResult(
                    name="golden_outcome",
                    value=float(result.outcome is golden.outcome),
                    tolerance=0.5,
                    comparison=">",
                    detail=f"expected {golden.outcome.value}; {golden.citation}",
                )
            )
            checks.append(
                CheckResult(
                    name="golden_causal_flip",
                    value=float((flip is not None) == golden.causal_flip),
                    tolerance=0.5,
                    comparison=">",
                )
            )
        return ReportSection(title="transport metric", checks=checks, data=data)
    kind, _, values = object_text.partition(":")
    if kind != "vector":
        raise InputError(
            f"Invalid object '{object_text}', use metric or vector:<v1>,...,<vn>"
        )
    v0 = np.asarray(parse_real_list(values, expected=scenario.dim))
    v1 = transport_vector(conn, loop, v0, binds, step=settings.RK4_STEP)
    if loop.deck is not None:
        v1 = loop.deck.inverse_linear @ v1
    h0 = metric_at(scenario.h, loop.start, binds)
    before = float(v0 @ h0 @ v0)
    after = float(v1 @ h0 @ v1)
    data.update(
        {"initial": _floats(v0), "transported": _floats(v1), "norms": [before, after]}
    )
    if psi is not None and abs(before) > TOL_FIT_RESIDUAL:
        period = line_integral(
            psi, loop, binds, subintervals=settings.QUADRATURE_SUBINTERVALS
        )
        expected = math.exp(period)
        data["period"] = period
        checks.append(
            CheckResult(
                name="norm_ratio",
                value=abs(after / before - expected) / expected,
                tolerance=TOL_HOLONOMY_SCALE,
                detail=f"expected exp(period) = {expected:.9g}",
            )
        )
    return ReportSection(title="transport vector", checks=checks, data=data)


def cmd_geodesic(
    scenario: Scenario,
    x0: Sequence[float],
    v0: Sequence[float],
    s_max: float,
    *,
    settings: Settings,
    logger: Logger,
    csv_path: Path | None = None,
) -> ReportSection:
    """Integrate a geodesic and check the conservation of its local norm."""
    logger.info("Integrating geodesic up to s = %g", s_max)
    binds = scenario.binds
    trajectory = geodesic(
        scenario.connection,
        x0,
        v0,
        s_max,
        binds,
        step=settings.RK4_STEP,
        stride=settings.TRAJECTORY_STRIDE,
    )
    if csv_path is not None:
        write_trajectory_csv(trajectory, scenario.coords, csv_path)
        logger.info("Trajectory written to %s", csv_path)
    first, last = trajectory[0], trajectory[-1]
    data = {
        "samples": len(trajectory),
        "end_position": _floats(last.position),
        "end_velocity": _floats(last.velocity),
    }
    checks = []
    if scenario.local_metric is not None:
        metric = scenario.local_metric
        v_first, v_last = first.velocity, last.velocity
        before = float(v_first @ metric.matrix(first.position, binds) @ v_first)
        after = float(v_last @ metric.matrix(last.position, binds) @ v_last)
        checks.append(
            CheckResult(
                name="local_norm_drift",
                value=abs(after - before) / max(1.0, abs(before)),
                tolerance=TOL_GEODESIC_GATE,
            )
        )
    return ReportSection(title="geodesic", checks=checks, data=data)


def cmd_curvature(
    scenario: Scenario,
    point: Sequence[float] | None,
    gauge: float,
    *,
    rescale_check: bool = False,
) -> ReportSection:
    """Compute curvature tensors at a point in the gauge μ."""
    pt = scenario.spec.basepoint if point is None else np.asarray(point, dtype=float)
    conn = scenario.connection
    tensors = curvature_tensors(
        conn, scenario.h, scenario.psi, gauge, pt, scenario.binds
    )
    data = {
        "point": _floats(pt),
        "gauge": tensors.mu,
        "scalar": tensors.scalar,
        "ricci": _floats(tensors.ricci),
        "einstein": _floats(tensors.einstein),
    }
    checks = [
        CheckResult(
            name="bianchi",
            value=bianchi_residual(tensors.riemann),
            tolerance=TOL_BIANCHI,
        ),
        CheckResult(
            name="ricci_symmetry",
            value=ricci_asymmetry(tensors.ricci),
            tolerance=TOL_BIANCHI,
        ),
    ]
    if rescale_check:
        for factor in GAUGE_RESCALES:
            other = curvature_tensors(
                conn, scenario.h, scenario.psi, factor * gauge, pt, scenario.binds
            )
            checks.append(
                CheckResult(
                    name=f"einstein_gauge[{factor:g}]",
                    value=float(np.max(np.abs(other.einstein - tensors.einstein))),
                    tolerance=TOL_EINSTEIN_GAUGE,
                )
            )
    return ReportSection(title="curvature", checks=checks, data=data)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer: '{text}'") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser with one subcommand per operation."""
    parser = argparse.ArgumentParser(
        prog="weylconn",
        description="Construct and verify locally metric connections on quotients.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--scenario", required=True, help="Built-in name or JSON scenario file"
    )
    common.add_argument("--seed", type=int, default=None, help="Sampling seed")
    common.add_argument(
        "--param",
        action="append",
        default=[],
        metavar="NAME=VALUE",
        help="Override a scenario parameter",
    )
    common.add_argument(
        "--points", type=_positive_int, default=None, help="Sample count"
    )
    common.add_argument("--out", type=Path, default=None, help="JSON report path")
    common.add_argument("--log-level", default=None, help="Logging level")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("verify", parents=[common], help="Run the sampled checks")
    commands.add_parser("classify", parents=[common], help="Periods and holonomy")
    christoffel = commands.add_parser(
        "christoffel", parents=[common], help="Christoffel symbols at a point"
    )
    christoffel.add_argument("--point", default=None, help="Comma-separated point")
    christoffel.add_argument(
        "--slice", action="store_true", help="Use the spatial slice"
    )
    transport = commands.add_parser(
        "transport", parents=[common], help="Parallel transport around a loop"
    )
    transport.add_argument("--loop", default="gen:0", help="gen:<i> or word:<i>,...")
    transport.add_argument(
        "--object", default="metric", help="metric or vector:<v1>,...,<vn>"
    )
    geodesic_parser = commands.add_parser(
        "geodesic", parents=[common], help="Integrate a geodesic"
    )
    geodesic_parser.add_argument("--x0", required=True, help="Initial point")
    geodesic_parser.add_argument("--v0", required=True, help="Initial velocity")
    geodesic_parser.add_argument("--smax", type=float, default=1.0, help="Final s")
    geodesic_parser.add_argument("--csv", type=Path, default=None, help="CSV path")
    curvature = commands.add_parser(
        "curvature", parents=[common], help="Curvature tensors at a point"
    )
    curvature.add_argument("--point", default=None, help="Comma-separated point")
    curvature.add_argument("--gauge", type=float, default=1.0, help="Gauge value μ")
    curvature.add_argument(
        "--rescale-check", action="store_true", help="Compare rescaled gauges"
    )
    commands.add_parser("report", parents=[common], help="Run every command")
    return parser


def _point(text: str | None, dim: int) -> list[float] | None:
    return None if text is None else parse_real_list(text, expected=dim)


def run(args: argparse.Namespace, settings: Settings, logger: Logger) -> Report:
    """Execute the parsed command and return its report."""
    scenario = get_scenario(args.scenario, parse_assignments(args.param))
    seed = args.seed
    if seed is None:
        seed = settings.SEED if scenario.seed is None else scenario.seed
    points = settings.SAMPLE_POINTS if args.points is None else args.points
    logger.debug("Scenario %s loaded with seed %d", scenario.name, seed)
    match args.command:
        case "verify":
            sections = [cmd_verify(scenario, seed=seed, points=points, logger=logger)]
        case "classify":
            sections = [cmd_classify(scenario, settings=settings, logger=logger)]
        case "christoffel":
            target = scenario.spatial_slice if args.slice else None
            dim = scenario.dim if target is None else target.dim
            sections = [
                cmd_christoffel(
                    scenario, _point(args.point, dim), use_slice=args.slice
                )
            ]
        case "transport":
            sections = [
                cmd_transport(
                    scenario, args.loop, args.object, settings=settings, logger=logger
                )
            ]
        case "geodesic":
            sections = [
                cmd_geodesic(
                    scenario,
                    parse_real_list(args.x0, expected=scenario.dim),
                    parse_real_list(args.v0, expected=scenario.dim),
                    args.smax,
                    settings=settings,
                    logger=logger,
                    csv_path=args.csv,
                )
            ]
        case "curvature":
            sections = [
                cmd_curvature(
                    scenario,
                    _point(args.point, scenario.dim),
                    args.gauge,
                    rescale_check=args.rescale_check,
                )
            ]
        case _:
            sections = cmd_report(
                scenario, seed=seed, points=points, settings=settings, logger=logger
            )
    return Report(
        project=settings.PROJECT_NAME,
        command=args.command,
        scenario=scenario.name,
        seed=seed,
        bindings=scenario.binds.as_dict(),
        sections=sections,
    )


def cmd_report(
    scenario: Scenario,
    *,
    seed: int,
    points: int,
    settings: Settings,
    logger: Logger,
) -> list[ReportSection]:
    """Run verify, classify, christoffel and curvature into one document."""
    sections = [cmd_verify(scenario, seed=seed, points=points, logger=logger)]
    if scenario.psi is not None:
        sections.append(cmd_classify(scenario, settings=settings, logger=logger))
    sections.append(cmd_christoffel(scenario, None))
    if scenario.spatial_slice is not None:
        sections.append(cmd_christoffel(scenario, None, use_slice=True))
    sections.append(cmd_curvature(scenario, None, 1.0, rescale_check=True))
    return sections


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run the command, print the report and return the exit code."""
    args = build_parser().parse_args(argv)
    settings = get_settings()
    if args.log_level is not None:
        try:
            level = get_level(args.log_level)
        except KeyError:
            print(f"Input Error: Unknown log level '{args.log_level}'", file=sys.stderr)
            return 2
        settings = settings.model_copy(update={"LOG_LEVEL": level})
    logger = get_logger(settings)
    try:
        report = run(args, settings, logger)
    except WeylConnError as e:
        logger.error("%s failed: %s", args.command, e.message)
        print(f"{split_camel_case(type(e).__name__)}: {e.message}", file=sys.stderr)
        return 2
    sys.stdout.write(report.to_text())
    if args.out is not None:
        args.out.write_text(report.to_json() + "\n", encoding="utf-8")
        logger.info("Report written to %s", args.out)
    return report.exit_code
