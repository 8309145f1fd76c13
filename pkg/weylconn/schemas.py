"""Pydantic schemas of scenario files and reports."""

import math
from typing import Annotated, Literal

from pydantic import BaseModel, Field, JsonValue, computed_field, model_validator
from typing_extensions import Self


class GeneratorEntry(BaseModel):
    """Affine deck generator x -> matrix @ x + translation."""

    matrix: Annotated[
        list[list[float]], Field(description="Linear part, one row per coordinate")
    ]
    translation: Annotated[list[float], Field(description="Translation vector")]
    label: Annotated[str, Field(default="", description="Generator name")]


class SampleBoxEntry(BaseModel):
    """Axis-aligned box used to draw the sampled points."""

    lower: Annotated[list[float], Field(description="Lower bound per coordinate")]
    upper: Annotated[list[float], Field(description="Upper bound per coordinate")]


class ScenarioFile(BaseModel):
    """Schema of a user scenario stored as UTF-8 JSON."""

    name: Annotated[str, Field(default="custom", description="Scenario name")]
    dimension: Annotated[int, Field(ge=1, description="Dimension of the cover")]
    coordinates: Annotated[list[str], Field(description="Coordinate names")]
    parameters: Annotated[
        dict[str, float],
        Field(default_factory=dict, description="Parameter names and values"),
    ]
    metric: Annotated[
        list[list[str | None]],
        Field(
            description="Metric components as expressions. Each row holds either "
            "all entries or the upper triangle from the diagonal on."
        ),
    ]
    signature: Annotated[
        tuple[int, int],
        Field(description="Number of negative and positive eigenvalues"),
    ]
    projects_to_quotient: Annotated[
        bool,
        Field(
            default=True,
            description="Whether the metric is invariant under the generators",
        ),
    ]
    psi: Annotated[
        list[str] | None,
        Field(default=None, description="Components of the closed 1-form"),
    ]
    psi_dlog: Annotated[
        list[str],
        Field(
            default_factory=list,
            description="Expressions whose logarithmic differential is added to psi",
        ),
    ]
    generators: Annotated[
        list[GeneratorEntry],
        Field(default_factory=list, description="Deck generators of the quotient"),
    ]
    basepoint: Annotated[list[float], Field(description="Basepoint of the loops")]
    sample_box: Annotated[
        SampleBoxEntry | None,
        Field(
            default=None,
            description="Sampling box. Defaults to the unit cube around the basepoint",
        ),
    ]
    seed: Annotated[
        int | None, Field(default=None, description="Default sampling seed")
    ]
    expected_failures: Annotated[
        list[str],
        Field(
            default_factory=list,
            description="Names of the checks predicted to fail for this scenario",
        ),
    ]

    @model_validator(mode="after")
    def verify_dimensions(self) -> Self:
        """Check that every list matches the declared dimension.

        Raises:
            ValueError: If a length differs from the dimension.

        Returns:
            Self: Returns the current instance for method chaining.

        """
        n = self.dimension
        lengths = {
            "coordinates": len(self.coordinates),
            "metric rows": len(self.metric),
            "basepoint": len(self.basepoint),
        }
        if self.psi is not None:
            lengths["psi"] = len(self.psi)
        if self.sample_box is not None:
            lengths["sample_box.lower"] = len(self.sample_box.lower)
            lengths["sample_box.upper"] = len(self.sample_box.upper)
        for index, gen in enumerate(self.generators):
            lengths[f"generators[{index}].translation"] = len(gen.translation)
            lengths[f"generators[{index}].matrix"] = len(gen.matrix)
            for row, values in enumerate(gen.matrix):
                lengths[f"generators[{index}].matrix[{row}]"] = len(values)
        for key, length in lengths.items():
            if length != n:
                raise ValueError(f"{key} has length {length}, expected {n}")
        if sum(self.signature) != n:
            raise ValueError(f"Signature {self.signature} does not sum to {n}")
        return self


class CheckResult(BaseModel):
    """Numeric claim paired with its tolerance."""

    name: Annotated[str, Field(description="Check name")]
    value: Annotated[float, Field(description="Measured value")]
    tolerance: Annotated[float, Field(description="Threshold of the check")]
    comparison: Annotated[
        Literal["<", ">"],
        Field(default="<", description="Whether value must be below or above"),
    ]
    expected_failure: Annotated[
        bool,
        Field(default=False, description="The check is predicted to fail"),
    ]
    detail: Annotated[str, Field(default="", description="Free-form context")]

    @computed_field
    @property
    def passed(self) -> bool:
        """Return whether the value satisfies the comparison."""
        if math.isnan(self.value):
            return False
        if self.comparison == "<":
            return self.value < self.tolerance
        return self.value > self.tolerance

    @computed_field
    @property
    def ok(self) -> bool:
        """Return True if the check passed, or failed as expected."""
        return self.passed != self.expected_failure


class ReportSection(BaseModel):
    """Results of one command."""

    title: Annotated[str, Field(description="Section title")]
    checks: Annotated[
        list[CheckResult], Field(default_factory=list, description="Checks")
    ]
    data: Annotated[
        dict[str, JsonValue],
        Field(default_factory=dict, description="Computed values without checks"),
    ]


class Report(BaseModel):
    """Document produced by a command, mirrored as JSON and as text."""

    project: Annotated[str, Field(description="Producer name")]
    command: Annotated[str, Field(description="Executed command")]
    scenario: Annotated[str, Field(description="Scenario name")]
    seed: Annotated[int, Field(description="Sampling seed")]
    bindings: Annotated[
        dict[str, float], Field(default_factory=dict, description="Parameter values")
    ]
    sections: Annotated[
        list[ReportSection], Field(default_factory=list, description="Sections")
    ]

    @computed_field
    @property
    def exit_code(self) -> int:
        """Return 0 when every check is ok and 1 otherwise."""
        ok = all(check.ok for section in self.sections for check in section.checks)
        return 0 if ok else 1

    def to_json(self) -> str:
        """Return the deterministic JSON mirror."""
        return self.model_dump_json(indent=2)

    def to_text(self) -> str:
        """Render the report as plain text."""
        bindings = ", ".join(f"{k}={v:g}" for k, v in self.bindings.items())
        lines = [
            f"{self.project} {self.command} --scenario {self.scenario} "
            f"--seed {self.seed}",
        ]
        if bindings:
            lines.append(f"parameters: {bindings}")
        for section in self.sections:
            lines.extend(["", f"== {section.title} =="])
            for key, value in section.data.items():
                lines.append(f"{key}: {_format_value(value)}")
            for check in section.checks:
                status = "PASS" if check.passed else "FAIL"
                if check.expected_failure:
                    status += " (unexpected pass)" if check.passed else " (expected)"
                line = (
                    f"[{status}] {check.name}: {check.value:.6e} "
                    f"{check.comparison} {check.tolerance:.1e}"
                )
                if check.detail:
                    line += f"  {check.detail}"
                lines.append(line)
        lines.extend(["", "result: " + ("ok" if self.exit_code == 0 else "FAILED")])
        return "\n".join(lines) + "\n"


def _format_value(value: JsonValue) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    if isinstance(value, list):
        return "[" + ", ".join(_format_value(item) for item in value) + "]"
    if isinstance(value, dict):
        items = ", ".join(f"{k}: {_format_value(v)}" for k, v in value.items())
        return "{" + items + "}"
    return str(value)
