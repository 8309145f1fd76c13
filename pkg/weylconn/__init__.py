"""Locally metric connections on quotient spaces.

Build a Weyl connection from a metric and a closed 1-form, verify its defining
equations on a cover, and compute periods, holonomy scales, geodesics and curvature.
"""

from weylconn.connection import (
    ExplicitConnection,
    LeviCivitaConnection,
    WeylConnection,
    explicit_connection,
    levi_civita,
    weyl_connection,
)
from weylconn.expr import Bindings, evaluate, parse
from weylconn.fields import DeckMap, MetricField, OneFormField, QuotientSpec
from weylconn.scenarios import Scenario, get_scenario

__version__ = "0.1.0"

__all__ = [
    "Bindings",
    "DeckMap",
    "ExplicitConnection",
    "LeviCivitaConnection",
    "MetricField",
    "OneFormField",
    "QuotientSpec",
    "Scenario",
    "WeylConnection",
    "evaluate",
    "explicit_connection",
    "get_scenario",
    "levi_civita",
    "parse",
    "weyl_connection",
]
