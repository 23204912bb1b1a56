# -*- coding: utf-8 -*-
# Ordered dict helper class
# See the accompanying LICENSE file.
# (C) 2016 VRT Systems
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:

"""
An ordered dictionary with a value validator.

Parameter sets, gradient maps and grid columns rely on a stable key order:
every flattening, every file and every report walks the keys in insertion
order.
"""
import collections.abc as col
from typing import Callable, Any, Optional, Dict, Iterator, Union, List, Tuple, Iterable


class SortableDict(col.MutableMapping):
    """A dict-like object that keeps the insertion order of its keys."""

    __slots__ = "_values", "_order", "_validate_fn"

    def __init__(self,
                 initial: Union[None, Iterable[Tuple[Any, Any]], Dict[Any, Any]] = None,
                 validate_fn: Optional[Callable[[Any], Any]] = None):
        """
        Args:
            initial: Initial values, a dict or a list of pairs
            validate_fn: Called with every value before insertion; raise to refuse it
        """
        self._values = {}  # type: Dict[Any, Any]
        self._order = []  # type: List[Any]
        self._validate_fn = validate_fn
        super().__init__()

        if initial is not None:
            if isinstance(initial, (dict, SortableDict)):
                initial = list(initial.items())
            for (key, val) in initial:
                self[key] = val

    def __repr__(self) -> str:
        return '%s{%s}' % (self.__class__.__name__,
                           ', '.join(['%r=%r' % (k, v) for k, v in self.items()]))

    def __getitem__(self, key: Any) -> Any:
        return self._values[key]

    def __setitem__(self, key: Any, value: Any) -> None:
        self.add_item(key, value)

    def __delitem__(self, key: Any) -> None:
        del self._values[key]
        self._order.remove(key)

    def __iter__(self) -> Iterator[Any]:
        return iter(self._order)

    def __len__(self) -> int:
        return len(self._order)

    def add_item(self, key: Any, value: Any, replace: bool = True) -> 'SortableDict':
        """Add an item at the end; a replaced item keeps its position.

        Args:
            key: The key
            value: The value to insert
            replace: Accept to overwrite an existing key
        Returns:
            `self`
        Raises:
            KeyError on a duplicate key when `replace` is not set
        """
        if self._validate_fn:
            self._validate_fn(value)
        if key in self._values:
            if not replace:
                raise KeyError('%r is duplicate' % key)
        else:
            self._order.append(key)
        self._values[key] = value
        return self
