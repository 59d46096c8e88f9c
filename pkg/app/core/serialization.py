"""Deterministic JSON and CSV text output for reports and trajectories."""
import json
import math
from enum import Enum
from typing import Any, Iterable, List, Sequence

import numpy as np
from pydantic import BaseModel


def format_float(x: float) -> str:
    """17 significant digits; non-finite values become null"""
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def to_plain(obj: Any) -> Any:
    """Convert models, enums and numpy values into plain Python containers"""
    if isinstance(obj, BaseModel):
        return to_plain(obj.model_dump(mode="python", by_alias=True))
    if isinstance(obj, Enum):
        return obj.value
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


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        # numeric rows stay on one line
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) or v is None for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """Byte-stable JSON text: insertion-ordered keys, fixed float formatting"""
    return _encode(to_plain(obj), indent, 0) + "\n"


def csv_lines(header: Sequence[str], rows: Iterable[Sequence[float]]) -> List[str]:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_float(v) for v in row))
    return lines
