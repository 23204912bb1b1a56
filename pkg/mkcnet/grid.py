# -*- coding: utf-8 -*-
# Result grid
# See the accompanying LICENSE file.
# (C) 2016 VRT Systems
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:

"""
Tabular results in memory: metrics per variant and seed, features per sample.
It's like a list of dict, with metadata and ordered columns.
"""
import logging
from collections.abc import MutableSequence  # pylint: disable=no-name-in-module
from typing import Any, Dict, Iterable, List, Sequence, Union

from .sortabledict import SortableDict

log = logging.getLogger(__name__)

Row = Dict[str, Any]


class Grid(MutableSequence):  # pylint: disable=too-many-ancestors
    """A grid is a series of rows sharing ordered columns, with a header of
    metadata (the run configuration, the seed, ...).

    - Access a row by position: `grid[1]`, a sub-grid by slice: `grid[2:4]`
    - Values of a column: `grid.column_values("auc")`
    - Size of grid: `len(grid)`

    Args:
        metadata: Header values
        columns: Column names, or a dict column name -> column metadata
    """

    __slots__ = "metadata", "column", "_row"

    def __init__(self,
                 metadata: Union[None, Dict[str, Any], SortableDict] = None,
                 columns: Union[None, Sequence[str], Dict[str, Dict[str, Any]]] = None):
        super().__init__()
        self.metadata = SortableDict(metadata)
        self.column = SortableDict()
        if columns is not None:
            if isinstance(columns, dict):
                for name, meta in columns.items():
                    self.column[name] = dict(meta)
            else:
                for name in columns:
                    self.column[name] = {}
        self._row = []  # type: List[Row]

    def __repr__(self) -> str:  # pragma: no cover
        return "Grid(columns=%s, rows=%d)" % (list(self.column.keys()), len(self._row))

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return dict(self.metadata) == dict(other.metadata) \
            and list(self.column.keys()) == list(other.column.keys()) \
            and self._row == other._row

    def __getitem__(self, key: Union[int, slice]) -> Union[Row, 'Grid']:  # type: ignore
        if isinstance(key, slice):
            result = Grid(metadata=self.metadata, columns=dict(self.column))
            result.extend(self._row[key])
            return result
        return self._row[key]

    def __setitem__(self, index: int, value: Row) -> None:  # type: ignore
        self._check(value)
        self._row[index] = value

    def __delitem__(self, index: int) -> None:  # type: ignore
        del self._row[index]

    def __len__(self) -> int:
        return len(self._row)

    def _check(self, value: Row) -> None:
        if not isinstance(value, dict):
            raise TypeError("value must be a dict")
        unknown = [name for name in value if name not in self.column]
        if unknown:
            raise KeyError("unknown columns %s" % unknown)

    def insert(self, index: int, value: Row) -> None:
        self._check(value)
        self._row.insert(index, value)

    def extend(self, values: Iterable[Row]) -> None:
        for value in values:
            self.append(value)

    def column_values(self, name: str) -> List[Any]:
        """Values of a column, `None` where a row has no value."""
        if name not in self.column:
            raise KeyError(name)
        return [row.get(name) for row in self._row]

    def filter(self, **values: Any) -> 'Grid':
        """Rows whose columns equal the given values."""
        result = Grid(metadata=self.metadata, columns=dict(self.column))
        result.extend(row for row in self._row if all(row.get(k) == v for k, v in values.items()))
        return result
