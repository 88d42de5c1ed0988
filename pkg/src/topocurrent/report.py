"""JSON and CSV reports.

Report layout (``schema = "topocurrent-report/1"``)::

    {
      "schema": "topocurrent-report/1",
      "command": "hall",
      "config": {...validated config, every field...},
      "results": [ RESULT, ... ],
      "status": "ok" | "UNCONVERGED" | "FAILED" | "error",
      "exit_code": 0 | 1
    }

Each RESULT carries exactly the keys in :data:`RESULT_KEYS`.  ``seconds`` is
``null`` unless the config sets ``timing``, so reports are byte-identical
across repeated runs.  Non-finite floats are written as the strings
``"inf"``, ``"-inf"`` and ``"nan"``.

Per-result ``status`` is ``ok``, ``UNCONVERGED`` (trace test failed),
``FAILED`` (a pass/fail check such as verify-filter failed) or ``error``
(``error`` then holds ``code``, ``type`` and ``message``).  The report
status is the worst of these and ``exit_code`` is 0 only for ``ok``.

The CSV report has one row per result with the columns in
:data:`CSV_COLUMNS`, in that order.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .chains import ChainError
from .filters import FilterError
from .lattice import GeometryError
from .manybody import ChargeViolationError, DegenerateGroundStateError, DimensionError
from .quadratic import AmplitudeError, GaplessError

__all__ = [
    "SCHEMA",
    "RESULT_KEYS",
    "CSV_COLUMNS",
    "ERROR_CODES",
    "error_code",
    "result_record",
    "error_record",
    "build_report",
    "dumps_json",
    "dumps_csv",
    "write_report",
]

SCHEMA = "topocurrent-report/1"

RESULT_KEYS = ("quantity", "value", "integer_distance", "cutoff", "trace", "converged",
               "tolerance", "status", "filter", "model_hash", "seconds", "extra", "error")

CSV_COLUMNS = ("quantity", "value", "integer_distance", "cutoff", "converged", "tolerance",
               "status", "filter_delta", "filter_interpolation", "model_hash", "seconds",
               "error_code")

# exception class -> machine-readable code, most specific first
ERROR_CODES = (
    (FilterError, "filter_invalid"),
    (GaplessError, "gapless"),
    (GeometryError, "geometry"),
    (ChargeViolationError, "charge_violation"),
    (DimensionError, "dimension_cap"),
    (DegenerateGroundStateError, "degenerate_ground_state"),
    (AmplitudeError, "amplitude_vanishes"),
    (ChainError, "chain"),
    (ValueError, "invalid_input"),
)


def error_code(exc: BaseException) -> str:
    for cls, code in ERROR_CODES:
        if isinstance(exc, cls):
            return code
    return "internal"


def _clean(x):
    """Plain JSON types with deterministic float handling."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": _clean(x.real), "im": _clean(x.imag)}
    if x is None or isinstance(x, str):
        return x
    return str(x)


def result_record(res, tolerance: float, timing: bool = False, status: str | None = None) -> dict:
    """Report entry for a :class:`~topocurrent.transport.TransportResult`.

    ``tolerance`` is the convergence floor used for the trace test.
    """
    if status is None:
        status = "ok" if res.converged else "UNCONVERGED"
    rec = {
        "quantity": res.quantity,
        "value": res.value,
        "integer_distance": res.integer_distance,
        "cutoff": res.cutoff,
        "trace": [[r, v] for r, v in res.trace],
        "converged": bool(res.converged),
        "tolerance": tolerance,
        "status": status,
        "filter": res.filter,
        "model_hash": res.model_hash,
        "seconds": res.seconds if timing else None,
        "extra": res.extra,
        "error": None,
    }
    return _clean(rec)


def error_record(quantity: str, exc: BaseException, cutoff=None, tolerance=None) -> dict:
    rec = dict.fromkeys(RESULT_KEYS)
    rec.update(quantity=quantity, cutoff=cutoff, tolerance=tolerance, trace=[], converged=False,
               status="error", extra={},
               error={"code": error_code(exc), "type": type(exc).__name__, "message": str(exc)})
    return _clean(rec)


def build_report(command: str, config_echo: dict, results: list[dict]) -> dict:
    statuses = {r["status"] for r in results}
    status = next((s for s in ("error", "FAILED", "UNCONVERGED") if s in statuses), "ok")
    return {"schema": SCHEMA, "command": command, "config": _clean(config_echo),
            "results": results, "status": status, "exit_code": 0 if status == "ok" else 1}


def dumps_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def dumps_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report["results"]:
        f = r.get("filter") or {}
        err = r.get("error") or {}
        row = {
            **{k: r.get(k) for k in CSV_COLUMNS},
            "filter_delta": f.get("delta"),
            "filter_interpolation": f.get("interpolation"),
            "error_code": err.get("code"),
        }
        w.writerow([_cell(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_report(report: dict, json_path, csv_path) -> None:
    """Write both files; each path has a single writer (the caller)."""
    for path, text in ((json_path, dumps_json(report)), (csv_path, dumps_csv(report))):
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
