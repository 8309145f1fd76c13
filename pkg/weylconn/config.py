"""Module with the configuration parameters and the tolerance table."""

import logging
from enum import Enum
from functools import lru_cache
from typing import Annotated

from pydantic import BeforeValidator, Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict
from typing_extensions import Self

# Tolerance table. Every numerical threshold used by checks lives here.
TOL_NABLA_H = 1e-9
TOL_EQUIVARIANCE = 1e-10
TOL_INVARIANCE = 1e-10
TOL_CLOSEDNESS = 1e-10
TOL_CLOSEDNESS_ABORT = 1e-8
TOL_TRANSPORT_GATE = 1e-8
TOL_GEODESIC_GATE = 1e-7
TOL_HOLONOMY_SCALE = 1e-6
TOL_FIT_RESIDUAL = 1e-4
TOL_COCYCLE = 1e-5
TOL_BIANCHI = 1e-8
TOL_EINSTEIN_GAUGE = 1e-9
TOL_GOLDEN_CHRISTOFFEL = 1e-10
TOL_PARALLEL = 1e-9
TOL_QUADRATURE = 1e-9
TOL_SINGULAR_DET = 1e-12
TOL_EIGEN_ZERO = 1e-10
TOL_CHRISTOFFEL_PRINT = 1e-12
BLOW_UP_MAGNITUDE = 1e12


class LogLevelEnum(int, Enum):
    """Enumeration of supported logging levels."""

    DEBUG = logging.DEBUG
    INFO = logging.INFO
    WARNING = logging.WARNING
    ERROR = logging.ERROR
    CRITICAL = logging.CRITICAL


def get_level(value: int | str | LogLevelEnum) -> int:
    """Convert a string, integer, or LogLevelEnum value to a logging level integer.

    Args:
        value: The log level as a string (case-insensitive), integer, or LogLevelEnum.

    Returns:
        int: The corresponding logging level integer.

    """
    if isinstance(value, str):
        return LogLevelEnum.__getitem__(value.upper())
    return value


class Settings(BaseSettings):
    """Model with the numerical and logging settings of weylconn."""

    PROJECT_NAME: Annotated[
        str, Field(default="weylconn", description="Name shown in reports and logs")
    ]
    LOG_LEVEL: Annotated[
        LogLevelEnum,
        Field(default=LogLevelEnum.WARNING, description="Logs level"),
        BeforeValidator(get_level),
    ]
    SAMPLE_POINTS: Annotated[
        int,
        Field(
            default=100,
            ge=1,
            description="Number of seeded random points used by sampled checks",
        ),
    ]
    SEED: Annotated[
        int, Field(default=0, description="Default seed of the sampling generator")
    ]
    RK4_STEP: Annotated[
        float,
        Field(
            default=1e-3,
            description="Fixed RK4 step in curve parameter for transports and "
            "geodesics",
        ),
    ]
    QUADRATURE_SUBINTERVALS: Annotated[
        int,
        Field(
            default=10_000,
            description="Composite Simpson subintervals for line integrals. "
            "Must be a multiple of 4.",
        ),
    ]
    TRAJECTORY_STRIDE: Annotated[
        int,
        Field(
            default=10,
            ge=1,
            description="Keep one geodesic sample every this many RK4 steps",
        ),
    ]
    EXACTNESS_TOL: Annotated[
        float,
        Field(
            default=1e-8,
            gt=0,
            description="Periods below this magnitude count as zero when "
            "classifying exactness",
        ),
    ]

    model_config = SettingsConfigDict(env_prefix="WEYLCONN_", env_file=".env")

    @model_validator(mode="after")
    def verify_integration_parameters(self) -> Self:
        """Validate the integrator and quadrature parameters.

        Raises:
            ValueError: If the RK4 step is not positive or the Simpson subinterval
            count is not a positive multiple of 4.

        Returns:
            Self: Returns the current instance for method chaining.

        """
        if self.RK4_STEP <= 0:
            raise ValueError("RK4 step must be positive.")
        if self.QUADRATURE_SUBINTERVALS < 4 or self.QUADRATURE_SUBINTERVALS % 4:
            raise ValueError(
                "Quadrature subintervals must be a positive multiple of 4."
            )
        return self


@lru_cache
def get_settings() -> Settings:
    """Retrieve cached settings."""
    return Settings()
