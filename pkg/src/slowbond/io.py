"""File formats: RFC-4180 CSV, UTF-8 JSON manifests and content hashes."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from slowbond.errors import UsageError

__all__ = ["write_csv", "write_json", "read_json", "content_hash", "format_value"]


def format_value(v):
    """Cell text. Floats use ``repr`` so that values round-trip exactly."""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_value(v) for v in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def read_json(path) -> dict:
    p = Path(path)
    try:
        with open(p, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"no such file: {p}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{p} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{p} must hold a JSON object")
    return data


def content_hash(obj) -> str:
    """``sha256:<hex>`` of the canonical JSON encoding of ``obj``."""
    blob = json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":")).encode("utf-8")
    return "sha256:" + hashlib.sha256(blob).hexdigest()
