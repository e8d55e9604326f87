"""Round-trip exact text formatting for numeric output."""
from __future__ import annotations

import json
import math
from typing import Any

import numpy as np


def format_float(value: float) -> str:
    """17 significant digits, enough to recover any 64-bit float exactly."""

    return f"{float(value):.17g}"


def _encode(value: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    closing = " " * (indent * level)
    if isinstance(value, (bool, np.bool_)) or value is None:
        return json.dumps(None if value is None else bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value) if math.isfinite(value) else "null"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [
            f"{pad}{json.dumps(str(key))}: {_encode(item, indent, level + 1)}" for key, item in value.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + closing + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        values = list(value)
        if not values:
            return "[]"
        if all(not isinstance(item, (dict, list, tuple, np.ndarray)) for item in values):
            return "[" + ", ".join(_encode(item, indent, level + 1) for item in values) + "]"
        items = [pad + _encode(item, indent, level + 1) for item in values]
        return "[\n" + ",\n".join(items) + "\n" + closing + "]"
    raise TypeError(f"cannot encode {type(value).__name__} as JSON")


def precise_json(payload: Any, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits."""

    return _encode(payload, indent, 0) + "\n"


__all__ = ["format_float", "precise_json"]
