# -*- coding: utf-8 -*-
# Exceptions
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
Specific exceptions for mkcnet
"""
from typing import Any, Optional


class MkcException(Exception):
    """
    Root of every error raised by mkcnet.

    Parameters:
        msg: The error message
    """

    def __init__(self, msg: str):  # pylint: disable=useless-super-delegation
        super().__init__(msg)

    @property
    def msg(self) -> str:
        return self.args[0]


class AutodiffError(MkcException):
    """Misuse of a computation record or of the differentiation entry points."""


class ShapeError(AutodiffError):
    """Operand shapes incompatible with a primitive."""

    def __init__(self, op_name: str, *shapes: Any):
        super().__init__("%s: incompatible shapes %s" % (op_name, ", ".join(str(tuple(s)) for s in shapes)))
        self.op_name = op_name
        self.shapes = shapes


class StaleRecordError(AutodiffError):
    """A meta update was asked without the pseudo update of the same batch."""


class NumericalError(MkcException):
    """A primitive produced NaN or Inf while debug checks were active."""


class OracleError(MkcException):
    """The finite-difference meta-gradient oracle refused its input."""


class ConfigError(MkcException):
    """
    Invalid configuration.

    Parameters:
        msg: The error message
        field: Dotted path of the offending field
    """

    def __init__(self, msg: str, field: Optional[str] = None):
        super().__init__("%s: %s" % (field, msg) if field else msg)
        self.field = field


class DataError(MkcException):
    """Unreadable or inconsistent dataset."""


class BlobFormatError(DataError):
    """Corrupted tensor blob."""


class CheckpointError(MkcException):
    """Checkpoint missing, corrupted or incompatible with the model."""


class NumericalAbort(MkcException):
    """
    Training stopped on a non-finite loss.

    Parameters:
        msg: The error message
        step: Global step of the failure
        report: The partial training report
    """

    def __init__(self, msg: str, step: int, report: Any = None):
        super().__init__(msg)
        self.step = step
        self.report = report
