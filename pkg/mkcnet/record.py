# -*- coding: utf-8 -*-
# Computation record
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
The computation record (a "tape") of the reverse-mode differentiation.

A record is made active with a `with` block. While a record is active, every
primitive applied to a tensor that requires a gradient appends one node.
Nodes are never removed: the node list is append-only and topologically
ordered, inputs always precede outputs.

The active record is thread-local, each worker thread owns its stack.
"""
import contextlib
import logging
import threading
from typing import Any, Dict, Iterator, List, NamedTuple, Optional, Tuple

from .exception import AutodiffError

log = logging.getLogger(__name__)

_local = threading.local()


def _stack() -> List[Optional['ComputationRecord']]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def current_record() -> Optional['ComputationRecord']:
    """
    Returns:
        The record receiving new nodes, or `None`
    """
    stack = _stack()
    return stack[-1] if stack else None


@contextlib.contextmanager
def no_record() -> Iterator[None]:
    """Suspend the recording inside the block."""
    stack = _stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


class Node(NamedTuple):
    """One primitive application."""
    node_id: int
    op: Any
    inputs: Tuple[Any, ...]
    input_ids: Tuple[Optional[int], ...]
    output: Any


class ComputationRecord:
    """
    An append-only record of primitive applications.

    Args:
        second_order: Record the backward passes too, so that they can be
            differentiated again (`backward_through_backward`)
    """
    __slots__ = "second_order", "nodes", "roots", "_ids", "_positions", "_keep", "_next_id"

    def __init__(self, second_order: bool = False):
        self.second_order = second_order
        self.nodes = []  # type: List[Node]
        self.roots = []  # type: List[int]
        self._ids = {}  # type: Dict[int, int]
        self._positions = {}  # type: Dict[int, int]
        self._keep = []  # type: List[Any]
        self._next_id = 0

    def __repr__(self) -> str:
        return "ComputationRecord(second_order=%s, nodes=%d, roots=%d)" % (
            self.second_order, len(self.nodes), len(self.roots))

    def __enter__(self) -> 'ComputationRecord':
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        stack = _stack()
        if not stack or stack[-1] is not self:
            raise AutodiffError("computation records must be closed in the reverse order of opening")
        stack.pop()

    def _register(self, tensor: Any) -> int:
        key = id(tensor)
        node_id = self._ids.get(key)
        if node_id is None:
            node_id = self._next_id
            self._next_id += 1
            self._ids[key] = node_id
            self._keep.append(tensor)  # ids must stay unique while the record lives
        return node_id

    def watch(self, params: Any) -> 'ComputationRecord':
        """
        Declare parameters as roots: gradients may be asked for them.

        Args:
            params: A `ParamSet` or any mapping name -> `Tensor`
        Returns:
            `self`
        """
        for name, tensor in params.items():
            if not tensor.requires_grad:
                raise AutodiffError("parameter %r does not require a gradient" % name)
            node_id = self._register(tensor)
            if node_id not in self.roots:
                self.roots.append(node_id)
        return self

    def append(self, op: Any, inputs: Tuple[Any, ...], output: Any) -> Node:
        """
        Append the application of `op`. Called by the primitives.
        """
        input_ids = tuple(self._register(t) if t.requires_grad else None for t in inputs)
        node_id = self._register(output)
        node = Node(node_id, op, inputs, input_ids, output)
        self._positions[node_id] = len(self.nodes)
        self.nodes.append(node)
        return node

    def node_id_of(self, tensor: Any) -> Optional[int]:
        """
        Returns:
            The id of `tensor` in this record, or `None` if never seen
        """
        return self._ids.get(id(tensor))

    def is_root(self, tensor: Any) -> bool:
        node_id = self.node_id_of(tensor)
        return node_id is not None and node_id in self.roots

    def position(self, node_id: int) -> int:
        """
        Returns:
            Number of nodes up to and including the one producing `node_id`,
            0 for roots and leaves
        """
        pos = self._positions.get(node_id)
        return 0 if pos is None else pos + 1

    @contextlib.contextmanager
    def resume(self) -> Iterator['ComputationRecord']:
        """Make the record active again inside the block."""
        _stack().append(self)
        try:
            yield self
        finally:
            _stack().pop()
