"""Self-describing tabular datasets with CSV and JSON serialization."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

SCHEMA_PREFIX = "kpolab"
META_MARK = "# meta: "


@dataclass(frozen=True)
class Column:
    name: str
    unit: str = ""
    description: str = ""


@dataclass
class Dataset:
    """Rows of one analysis plus the metadata needed to reproduce them.

    ``metadata`` always carries the config hash and seed; ``extras`` holds
    nested results (markers, reports, summaries) that do not fit the table.
    """

    schema: str
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        i = [c.name for c in self.columns].index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        header = {"schema": self.schema, "columns": [vars(c) for c in self.columns],
                  "metadata": self.metadata, "extras": self.extras}
        buf.write(META_MARK + json.dumps(_jsonable(header), sort_keys=True, allow_nan=False) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([c.name for c in self.columns])
        for row in self.rows:
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"schema": self.schema, "columns": [vars(c) for c in self.columns],
               "rows": [list(r) for r in self.rows], "metadata": self.metadata, "extras": self.extras}
        return json.dumps(_jsonable(doc), sort_keys=True, indent=1, allow_nan=False) + "\n"

    def dumps(self, fmt: str) -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        raise ValueError(f"unknown format {fmt!r}")


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format_float(v)
    return "" if v is None else str(v)


def format_float(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _parse_cell(text: str):
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def loads_csv(text: str) -> Dataset:
    lines = text.split("\n")
    if not lines or not lines[0].startswith(META_MARK):
        raise ValueError("missing metadata line")
    head = json.loads(lines[0][len(META_MARK):])
    reader = csv.reader(io.StringIO("\n".join(lines[1:])))
    names = next(reader)
    cols = [Column(**c) for c in head["columns"]]
    if [c.name for c in cols] != names:
        raise ValueError("column header does not match metadata")
    rows = [tuple(_parse_cell(v) for v in r) for r in reader if r]
    return Dataset(head["schema"], cols, rows, head["metadata"], head["extras"])


def loads_json(text: str) -> Dataset:
    doc = json.loads(text)
    cols = [Column(**c) for c in doc["columns"]]
    return Dataset(doc["schema"], cols, [tuple(r) for r in doc["rows"]], doc["metadata"], doc["extras"])


def load(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return loads_csv(text) if text.startswith(META_MARK) else loads_json(text)
