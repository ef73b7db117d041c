"""Deterministic JSON reports and CSV tables."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(v[k]) for k in sorted(v, key=str)}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": _clean(v.real), "im": _clean(v.imag)}
    if hasattr(v, "value") and hasattr(v, "name") and not isinstance(v, (str, bytes)):
        return v.value
    return v


def canonical_json(payload: dict) -> str:
    return json.dumps(_clean(payload), sort_keys=True, indent=2, ensure_ascii=False)


def report_hash(payload: dict) -> str:
    body = {k: v for k, v in payload.items() if k not in ("timestamp", "timing", "report_hash")}
    return hashlib.sha256(canonical_json(body).encode()).hexdigest()[:16]


def build_report(command: str, body: dict, config_hash: str, seeds: list[int],
                 timestamp: str | None = None) -> dict:
    payload = {"command": command, "config_hash": config_hash, "seeds": list(seeds),
               "version": __version__, **body}
    payload = _clean(payload)
    payload["report_hash"] = report_hash(payload)
    payload["timestamp"] = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat()
    return payload


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(payload) + "\n", encoding="utf-8")
    return path


def write_csv(path: str | Path, header: list[str], rows: Iterable) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
