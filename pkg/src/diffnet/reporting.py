"""Output serialization: canonical CSV and JSON writers.

Floats are rendered with %.17g so files round-trip exactly and reruns of
the same configuration produce byte-identical output. The JSON writer is
deliberately hand-rolled: the stdlib encoder formats floats with repr,
which is also exact but does not give us a single canonical style shared
with the CSV files.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .errors import ConfigError

__all__ = [
    "format_float",
    "write_csv",
    "dumps_json",
    "write_json",
    "matrix_to_json",
    "theory_report_to_dict",
    "to_db",
]


def format_float(x) -> str:
    """Canonical float rendering used by every writer."""
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        raise ConfigError(f"non-finite value {x!r} cannot be serialized")
    return "%.17g" % x


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    text = str(value)
    if any(ch in text for ch in (",", '"', "\n")):
        text = '"' + text.replace('"', '""') + '"'
    return text


def write_csv(path, header, rows) -> None:
    """Write a CSV file with a header line and %.17g float cells."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _json_fragment(value, parts, indent, level) -> None:
    pad = " " * (indent * (level + 1))
    close_pad = " " * (indent * level)
    if value is None:
        parts.append("null")
    elif isinstance(value, (bool, np.bool_)):
        parts.append("true" if value else "false")
    elif isinstance(value, (int, np.integer)):
        parts.append(str(int(value)))
    elif isinstance(value, (float, np.floating)):
        parts.append(format_float(value))
    elif isinstance(value, str):
        parts.append(_json_string(value))
    elif isinstance(value, dict):
        keys = sorted(value, key=str)
        if not keys:
            parts.append("{}")
            return
        parts.append("{\n")
        for i, key in enumerate(keys):
            parts.append(pad + _json_string(str(key)) + ": ")
            _json_fragment(value[key], parts, indent, level + 1)
            parts.append(",\n" if i + 1 < len(keys) else "\n")
        parts.append(close_pad + "}")
    elif isinstance(value, (list, tuple, np.ndarray)):
        items = list(np.asarray(value).tolist()) if isinstance(value, np.ndarray) else list(value)
        if not items:
            parts.append("[]")
            return
        parts.append("[\n")
        for i, item in enumerate(items):
            parts.append(pad)
            _json_fragment(item, parts, indent, level + 1)
            parts.append(",\n" if i + 1 < len(items) else "\n")
        parts.append(close_pad + "]")
    else:
        raise ConfigError(f"cannot serialize value of type {type(value).__name__}")


_ESCAPES = {
    '"': '\\"', "\\": "\\\\", "\n": "\\n", "\r": "\\r", "\t": "\\t",
    "\b": "\\b", "\f": "\\f",
}


def _json_string(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch in _ESCAPES:
            out.append(_ESCAPES[ch])
        elif ord(ch) < 0x20:
            out.append("\\u%04x" % ord(ch))
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def dumps_json(value, indent: int = 2) -> str:
    """Serialize to JSON with sorted object keys and %.17g floats."""
    parts = []
    _json_fragment(value, parts, indent, 0)
    return "".join(parts) + "\n"


def write_json(path, value) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_json(value))


def matrix_to_json(mat) -> dict:
    """Matrix wire format: shape plus the row-major flattened entries."""
    arr = np.asarray(mat, dtype=np.float64)
    return {
        "shape": [int(s) for s in arr.shape],
        "data": [float(x) for x in arr.reshape(-1)],
    }


def to_db(x) -> float | None:
    """10 log10 of a positive linear value, None for zero or negative."""
    x = float(x)
    if x <= 0.0:
        return None
    return 10.0 * math.log10(x)


def theory_report_to_dict(report) -> dict:
    """Flatten a TheoryReport into the JSON wire layout."""
    deltas = {
        f"{m},{n}": matrix_to_json(val) for (m, n), val in report.deltas.items()
    }
    return {
        "mu_max": report.mu_max,
        "dim": report.dim,
        "group_sizes": [int(s) for s in report.group_sizes],
        "group_clusters": [int(c) for c in report.group_clusters],
        "theta_cov": matrix_to_json(report.theta_cov),
        "phi_cov": matrix_to_json(report.phi_cov),
        "pi_cov": matrix_to_json(report.pi_cov),
        "deltas": deltas,
        "normalized_msd_per_group": [float(x) for x in report.normalized_msd_per_group],
        "normalized_msd_total": report.normalized_msd_total,
        "normalized_msd_total_db": to_db(report.normalized_msd_total),
        "predicted_msd_total": report.mu_max * report.normalized_msd_total,
        "predicted_msd_total_db": to_db(report.mu_max * report.normalized_msd_total),
        "msd_per_agent_by_group": [float(x) for x in report.msd_per_agent_by_group],
        "msd_per_agent_by_group_db": [
            to_db(x) for x in report.msd_per_agent_by_group
        ],
        "consistency_gap": report.consistency_gap,
        "low_dim": {
            "hbar": matrix_to_json(report.low_dim.hbar),
            "d_mat": matrix_to_json(report.low_dim.d_mat),
            "rbar": matrix_to_json(report.low_dim.rbar),
            "q_dt": matrix_to_json(report.low_dim.q_dt),
        },
    }
