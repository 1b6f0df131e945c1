"""Canonical JSON rendering: stable key order and 17-significant-digit floats.

Reports must be byte-identical across runs, so floats are never left to
``repr`` (shortest round-trip) and numpy scalars/arrays are normalised first.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np


def _float(x: float) -> str:
    if math.isnan(x):
        return '"NaN"'
    if math.isinf(x):
        return '"Infinity"' if x > 0 else '"-Infinity"'
    if x == 0.0:
        return "0.0"
    return format(x, ".17g")


def to_plain(obj: Any) -> Any:
    """Convert numpy containers and scalars to builtin Python types."""
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    return obj


def _render(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_render(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        # numeric leaves stay on one line so matrices remain readable
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_render(v, indent, level) for v in obj) + "]"
        items = [pad + _render(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    return _render(to_plain(obj), indent, 0) + "\n"


def line_of(text: str | None, key: str) -> int | None:
    """1-based line of the first occurrence of ``"key"`` in ``text``."""
    if not text:
        return None
    idx = text.find(f'"{key}"')
    if idx < 0:
        return None
    return text.count("\n", 0, idx) + 1


def loads(text: str, what: str = "document") -> Any:
    from .errors import SchemaError

    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed JSON in {what}: {exc.msg}", line=exc.lineno) from None
