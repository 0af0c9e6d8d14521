"""Long-format panel ingestion and machine-readable report output.

Input files are delimiter-separated text with a header naming ``unit``,
``time``, ``value`` and optionally ``treated``. Each row is one cell; cells
absent from the file are unobserved. Units are ordered by first appearance
and times by natural sort (numeric when every time id parses as a number).
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import re
import tempfile

import numpy as np

from .errors import (
    DuplicateCell,
    MixedTreatmentSchema,
    OutOfRange,
    ParseError,
)
from .panel import ObservedPanel
from .treatment import TreatmentPanel

REQUIRED_COLUMNS = ("unit", "time", "value")


def _natural_key(s: str):
    return tuple(
        int(chunk) if chunk.isdigit() else chunk
        for chunk in re.split(r"(\d+)", s)
        if chunk != ""
    )


def _sort_times(time_ids):
    try:
        return sorted(time_ids, key=float)
    except ValueError:
        return sorted(time_ids, key=_natural_key)


def load_panel(path, delimiter: str = ","):
    """Read a long-format file into an ObservedPanel or TreatmentPanel.

    The presence of a ``treated`` header column selects the treatment
    schema, which requires a value and a 0/1 indicator for every cell of
    the unit x time cross product. Without it, listed cells are observed
    (rows with an empty value field are allowed and mark the cell as
    explicitly unobserved).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "empty file") from None
        header = [h.strip().lower() for h in header]
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise ParseError(1, f"missing required column {col!r}")
        idx = {col: header.index(col) for col in header}
        has_treated = "treated" in idx
        cells = {}
        unit_order = []
        time_seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row or all(f.strip() == "" for f in row):
                continue
            if len(row) != len(header):
                raise ParseError(lineno, f"expected {len(header)} fields, got {len(row)}")
            unit = row[idx["unit"]].strip()
            time = row[idx["time"]].strip()
            if unit == "" or time == "":
                raise ParseError(lineno, "unit and time ids must be nonempty")
            raw_value = row[idx["value"]].strip()
            value = None
            if raw_value != "":
                try:
                    value = float(raw_value)
                except ValueError:
                    raise ParseError(lineno, f"bad value {raw_value!r}") from None
            treated = None
            if has_treated:
                raw_treated = row[idx["treated"]].strip()
                if raw_treated == "":
                    raise MixedTreatmentSchema(
                        f"line {lineno}: treated column present but empty"
                    )
                if raw_treated not in ("0", "1"):
                    raise ParseError(lineno, f"treated must be 0 or 1, got {raw_treated!r}")
                if value is None:
                    raise MixedTreatmentSchema(
                        f"line {lineno}: treated cell ({unit!r}, {time!r}) has no value"
                    )
                treated = int(raw_treated)
            if (unit, time) in cells:
                raise DuplicateCell(unit, time)
            cells[(unit, time)] = (value, treated)
            if unit not in unit_order:
                unit_order.append(unit)
            time_seen.add(time)
    if not cells:
        raise ParseError(2, "file contains no data rows")
    time_order = _sort_times(time_seen)
    unit_pos = {u: i for i, u in enumerate(unit_order)}
    time_pos = {t: j for j, t in enumerate(time_order)}
    n, t = len(unit_order), len(time_order)
    values = np.zeros((n, t))
    if has_treated:
        treat = np.zeros((n, t))
        if len(cells) != n * t:
            raise MixedTreatmentSchema(
                f"treatment schema needs the full {n}x{t} grid, got {len(cells)} cells"
            )
        for (u, tm), (value, treated) in cells.items():
            values[unit_pos[u], time_pos[tm]] = value
            treat[unit_pos[u], time_pos[tm]] = treated
        return TreatmentPanel(
            values, treat, unit_ids=tuple(unit_order), time_ids=tuple(time_order)
        )
    mask = np.zeros((n, t))
    for (u, tm), (value, _) in cells.items():
        if value is not None:
            values[unit_pos[u], time_pos[tm]] = value
            mask[unit_pos[u], time_pos[tm]] = 1.0
    return ObservedPanel(
        values, mask, unit_ids=tuple(unit_order), time_ids=tuple(time_order)
    )


def _labels(panel):
    units = panel.unit_ids or tuple(f"u{i}" for i in range(panel.values.shape[0]))
    times = panel.time_ids or tuple(f"t{j}" for j in range(panel.values.shape[1]))
    return units, times


def save_panel(panel: ObservedPanel, path, delimiter: str = ",") -> None:
    """Write the observed cells back out in long format."""
    units, times = _labels(panel)
    rows = [("unit", "time", "value")]
    for i, u in enumerate(units):
        for j, tm in enumerate(times):
            if panel.mask[i, j] == 1.0:
                rows.append((u, tm, repr(float(panel.values[i, j]))))
    _atomic_write_text(
        path, "".join(delimiter.join(r) + "\n" for r in rows)
    )


def save_completed(
    m_hat: np.ndarray, panel: ObservedPanel, path, delimiter: str = ","
) -> None:
    """Write the completed matrix, flagging cells that were imputed."""
    units, times = _labels(panel)
    lines = [delimiter.join(("unit", "time", "value", "imputed"))]
    for i, u in enumerate(units):
        for j, tm in enumerate(times):
            imputed = "0" if panel.mask[i, j] == 1.0 else "1"
            lines.append(delimiter.join((u, tm, repr(float(m_hat[i, j])), imputed)))
    _atomic_write_text(path, "".join(line + "\n" for line in lines))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write_text(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report: dict, path, fmt: str = "json") -> None:
    """Serialize a report deterministically (json) or as delimited rows (csv).

    JSON uses sorted keys and Python's shortest round-trip float text, so
    identical inputs produce identical bytes.
    """
    if fmt == "json":
        _atomic_write_text(path, json.dumps(report, sort_keys=True, indent=2) + "\n")
    elif fmt == "csv":
        _atomic_write_text(path, _report_csv(report))
    else:
        raise OutOfRange(f"unknown report format {fmt!r}")


def _flatten(prefix, obj, out):
    if isinstance(obj, dict):
        for key in sorted(obj):
            _flatten(f"{prefix}.{key}" if prefix else str(key), obj[key], out)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            _flatten(f"{prefix}[{i}]", item, out)
    else:
        out.append((prefix, obj))


def _report_csv(report: dict) -> str:
    rows = report.get("rows")
    buf = []
    if isinstance(rows, list) and rows and isinstance(rows[0], dict):
        # tabular payload: one csv row per entry, metadata as comments
        meta = {k: v for k, v in report.items() if k != "rows"}
        flat = []
        _flatten("", meta, flat)
        for key, value in flat:
            buf.append(f"# {key}={_text(value)}")
        fields = list(rows[0].keys())
        buf.append(",".join(fields))
        for row in rows:
            buf.append(",".join(_text(row.get(f)) for f in fields))
    else:
        flat = []
        _flatten("", report, flat)
        buf.append("key,value")
        for key, value in flat:
            buf.append(f"{key},{_text(value)}")
    return "".join(line + "\n" for line in buf)


def _text(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)
