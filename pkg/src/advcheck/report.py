"""Report serialization: canonical JSON plus per-curve CSV files.

Reports are written with sorted keys and fixed separators so that two runs
with the same seed produce byte-identical files once timing fields are
stripped.
"""

from __future__ import annotations

import json
import math
import os

TIMING_KEYS = {"runtime_seconds"}


def _jsonable(obj):
    """Recursively coerce numpy scalars/arrays and non-finite floats."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def report_json(report, strip_timing=False):
    payload = _jsonable(report)
    if strip_timing:
        payload = strip_timing_fields(payload)
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), indent=None)


def strip_timing_fields(payload):
    if isinstance(payload, dict):
        return {
            k: strip_timing_fields(v) for k, v in payload.items() if k not in TIMING_KEYS
        }
    if isinstance(payload, list):
        return [strip_timing_fields(v) for v in payload]
    return payload


def curve_csv(points):
    """CSV rows ``epsilon,accuracy,success,n`` for one curve."""
    lines = ["epsilon,accuracy,success,n"]
    for p in points:
        lines.append(f"{p['epsilon']:.10g},{p['accuracy']:.10g},{p['success']:.10g},{p['n']}")
    return "\n".join(lines) + "\n"


def emit_report(report, out_dir):
    """Write report.json plus curve_<i>.csv files; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    report_path = os.path.join(out_dir, "report.json")
    with open(report_path, "w") as fh:
        fh.write(report_json(report) + "\n")
    paths.append(report_path)
    for i, curve in enumerate(report.get("curves", []) or []):
        csv_path = os.path.join(out_dir, f"curve_{i}.csv")
        with open(csv_path, "w") as fh:
            fh.write(curve_csv(curve["points"]))
        paths.append(csv_path)
    return paths


def load_report(path):
    with open(path) as fh:
        return json.load(fh)
