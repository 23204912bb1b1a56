# -*- coding: utf-8 -*-
# Grid and artifact dumper
# See the accompanying LICENSE file.
# (C) 2016 VRT Systems
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:

"""
Generic dumper of `Grid`. The mode can be `MODE_JSON`, `MODE_CSV` or
`MODE_TEXT` (aligned columns, for people).

Every JSON produced here is canonical: sorted keys, fixed indentation,
floats in their shortest round-trip form, NaN written as `null`. A rerun with
the same inputs writes the same bytes.
"""
import csv
import io
import json
import math
from typing import Any, Dict, List

import numpy as np

from .grid import Grid
from .sortabledict import SortableDict

MODE_JSON = "json"
MODE_CSV = "csv"
MODE_TEXT = "text"

_SUFFIX_TO_MODE = {".json": MODE_JSON, ".csv": MODE_CSV, ".txt": MODE_TEXT}


def suffix_to_mode(ext: str) -> str:
    """
    Args:
        ext: File suffix, like `.csv`
    Returns:
        The mode, `MODE_JSON` for an unknown suffix
    """
    return _SUFFIX_TO_MODE.get(ext.lower(), MODE_JSON)


def to_plain(value: Any) -> Any:
    """Convert numpy values, tuples, dicts and NaN into plain JSON values."""
    if isinstance(value, (SortableDict, dict)):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return None if math.isnan(value) or math.isinf(value) else value
    return value


def dump_json(value: Any) -> str:
    """Canonical JSON text, ending with a new line."""
    return json.dumps(to_plain(value), sort_keys=True, indent=2, allow_nan=False) + "\n"


def dump_scalar(value: Any, mode: str = MODE_JSON) -> str:
    """
    Dump one value.
    Args:
        value: The value
        mode: The format
    """
    value = to_plain(value)
    if mode == MODE_JSON:
        return json.dumps(value, sort_keys=True)
    if mode in (MODE_CSV, MODE_TEXT):
        if value is None:
            return ""
        if isinstance(value, float):
            return "%.4f" % value if mode == MODE_TEXT else repr(value)
        return str(value)
    raise NotImplementedError('Format not implemented: %s' % mode)


def _grid_header(grid: Grid) -> Dict[str, Any]:
    return {
        "meta": dict(grid.metadata),
        "cols": [dict(name=name, **meta) for name, meta in grid.column.items()],
    }


def _dump_json_grid(grid: Grid) -> str:
    return dump_json(dict(_grid_header(grid), rows=list(grid)))


def dump_header(grid: Grid) -> str:
    """
    The metadata and the columns of a grid, as JSON. Written next to a CSV
    dump, which has no room for them.
    """
    return dump_json(_grid_header(grid))


def _dump_csv_grid(grid: Grid) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    names = list(grid.column.keys())
    writer.writerow(names)
    for row in grid:
        writer.writerow([dump_scalar(row.get(name), MODE_CSV) for name in names])
    return buffer.getvalue()


def _dump_text_grid(grid: Grid) -> str:
    names = list(grid.column.keys())
    cells = [names] + [[dump_scalar(row.get(name), MODE_TEXT) for name in names] for row in grid]
    widths = [max(len(line[i]) for line in cells) for i in range(len(names))]
    lines = []  # type: List[str]
    for number, line in enumerate(cells):
        lines.append("  ".join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip())
        if number == 0:
            lines.append("  ".join("-" * width for width in widths))
    return "\n".join(lines) + "\n"


def dump(grid: Grid, mode: str = MODE_JSON) -> str:
    """
    Dump a grid in the specified format.
    Args:
        grid: The grid to dump.
        mode: The format. Must be MODE_JSON, MODE_CSV or MODE_TEXT
    """
    if mode == MODE_JSON:
        return _dump_json_grid(grid)
    if mode == MODE_CSV:
        return _dump_csv_grid(grid)
    if mode == MODE_TEXT:
        return _dump_text_grid(grid)
    raise NotImplementedError('Format not implemented: %s' % mode)

