"""Atomic file output and the on-disk formats shared by the commands."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

SCHEMA_DIR = Path(__file__).parent / "schemas"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write_text(path, dumps_json(obj))


def write_jsonl(path, records) -> Path:
    lines = [json.dumps(_plain(r), sort_keys=True, separators=(",", ":")) for r in records]
    return atomic_write_text(path, "".join(line + "\n" for line in lines))


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    return atomic_write_text(path, csv_text(header, rows))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def load_schema(name: str) -> dict:
    return read_json(SCHEMA_DIR / f"{name}.schema.json")


ACC_COLUMNS = ("accuracy", "acc")
FLOPS_COLUMNS = ("flops",)


def read_evaluation_csv(path):
    """(acc, flops) arrays from a CSV with an accuracy and a flops column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip().lower() for f in (reader.fieldnames or [])]
        acc_col = next((c for c in ACC_COLUMNS if c in fields), None)
        flops_col = next((c for c in FLOPS_COLUMNS if c in fields), None)
        if acc_col is None or flops_col is None:
            raise ValueError(f"{path}: need an 'accuracy' (or 'acc') and a 'flops' column, got {fields}")
        acc, flops = [], []
        for lineno, row in enumerate(reader, start=2):
            row = {k.strip().lower(): v for k, v in row.items() if k is not None}
            try:
                acc.append(float(row[acc_col]))
                flops.append(float(row[flops_col]))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed row {row}") from exc
    return np.array(acc), np.array(flops)
