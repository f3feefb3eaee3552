"""Deterministic JSON/CSV writers with 17-significant-digit floats."""

import json
import math

import numpy as np


def _fmt(x):
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    # keep floats recognisable as floats after a round trip
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def dumps(obj, indent=None, _level=0):
    """Serialize ``obj`` to JSON, writing every float with 17 significant digits."""
    pad = "" if indent is None else "\n" + " " * (indent * (_level + 1))
    end = "" if indent is None else "\n" + " " * (indent * _level)
    sep = ", " if indent is None else ","
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [pad + json.dumps(str(k)) + ": " + dumps(v, indent, _level + 1) for k, v in obj.items()]
        return "{" + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        # numeric arrays are kept on one line
        return "[" + ", ".join(dumps(v, None, _level + 1) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj)
    if obj is None:
        return "null"
    return json.dumps(obj)


def write_csv(header, columns):
    """Return CSV text for equal-length columns; numeric cells use 17 digits."""
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(c if isinstance(c, str) else _fmt(c) for c in row))
    return "\n".join(lines) + "\n"


def read_csv(text):
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header = [h.strip() for h in lines[0].split(",")]
    cols = {h: [] for h in header}
    for ln in lines[1:]:
        for h, c in zip(header, ln.split(",")):
            c = c.strip()
            try:
                cols[h].append(float(c))
            except ValueError:
                cols[h].append(c)
    return cols
