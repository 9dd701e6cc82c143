"""Tabular output (CSV/JSON) and run manifests, written atomically."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

from . import __version__

FORMATS = ("csv", "json")


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return format(value, ".17g")
    if isinstance(value, Fraction):
        return str(value)
    return str(value)


def _json_cell(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, float):
        # 17 significant digits, same text as the CSV cell
        return float(format(value, ".17g"))
    return value


@dataclass
class OutputTable:
    columns: list
    rows: list = field(default_factory=list)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values, table has {len(self.columns)} columns")
        self.rows.append(tuple(values))

    def column(self, name):
        j = self.columns.index(name)
        return [row[j] for row in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_cell(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        records = [{c: _json_cell(v) for c, v in zip(self.columns, row)} for row in self.rows]
        return json.dumps({"columns": self.columns, "rows": records}, indent=2) + "\n"

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")


def parse_csv(text: str):
    """Rows as dicts of floats where a cell parses as one, else the raw string."""
    reader = csv.DictReader(io.StringIO(text))
    out = []
    for rec in reader:
        parsed = {}
        for key, cell in rec.items():
            try:
                parsed[key] = float(cell) if cell not in ("", "true", "false") else cell
            except ValueError:
                parsed[key] = cell
        out.append(parsed)
    return out


@dataclass
class RunManifest:
    command: str
    parameters: dict
    seed: int | None
    version: str = __version__
    duration_s: float = 0.0
    output_sha256: str = ""
    output_path: str | None = None
    figure_path: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n"


def digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def atomic_write(path, data: str | bytes):
    """Write via a temporary file in the target directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def manifest_path(out_path) -> Path:
    out_path = Path(out_path)
    return out_path.with_name(out_path.name + ".manifest.json")


def figure_path(out_path) -> Path:
    return Path(out_path).with_suffix(".png")
