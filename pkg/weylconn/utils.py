"""Utility functions to parse command line values and render labels."""

import re
from collections.abc import Iterable

from weylconn.exceptions import InputError


def parse_real_list(text: str, *, expected: int | None = None) -> list[float]:
    """Parse a comma-separated list of reals.

    Args:
        text: The list, e.g. "0,1.5,-2e-3".
        expected: If given, the number of values the list must contain.

    Returns:
        list[float]: The parsed values in the given order.

    Raises:
        InputError: If a value is not a real number or the count is wrong.

    """
    try:
        values = [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise InputError(f"Invalid list of reals: '{text}'") from e
    if expected is not None and len(values) != expected:
        raise InputError(f"Expected {expected} comma-separated reals, got '{text}'")
    return values


def parse_assignments(items: Iterable[str]) -> dict[str, float]:
    """Parse 'name=value' items into a dictionary of reals.

    Args:
        items: The assignments, e.g. ["a=1", "b=-0.5"].

    Returns:
        dict[str, float]: Parameter names mapped to their values.

    Raises:
        InputError: If an item has no '=' or its value is not a real number.

    """
    values: dict[str, float] = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep or not name.strip():
            raise InputError(f"Invalid parameter assignment '{item}'")
        try:
            values[name.strip()] = float(value)
        except ValueError as e:
            raise InputError(f"Invalid value in assignment '{item}'") from e
    return values


def split_camel_case(text: str) -> str:
    """Split a camel case string into words separated by spaces.

    Args:
        text: The camel case string to split.

    Returns:
        str: The string with spaces inserted between camel case words.

    """
    matches = re.finditer(
        r".+?(?:(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z0-9])(?=[A-Z][a-z])|$)", text
    )
    return " ".join([m.group(0) for m in matches])


def christoffel_label(coords: tuple[str, ...], k: int, i: int, j: int) -> str:
    """Return the label 'Gamma^k_{i j}' using coordinate names."""
    return f"Gamma^{coords[k]}_{{{coords[i]} {coords[j]}}}"
