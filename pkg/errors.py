#!/usr/bin/env python3
"""
Exception hierarchy for condensation-lab.

Every error raised on purpose by the toolkit derives from LabError so the
command line can report it and exit with a distinct code.
"""


class LabError(Exception):
    """Base class for all toolkit errors"""


class ConfigurationError(LabError):
    """Invalid distribution or configuration values"""


class UnsupportedCaseError(LabError):
    """A parameter regime the toolkit deliberately does not handle"""


class ValidationError(LabError):
    """Malformed path, tree encoding or index arguments"""


class ResourceError(LabError):
    """A table or enumeration would exceed its memory budget"""


class ConsistencyError(LabError):
    """Internal numerical inconsistency (e.g. impossible bridge prefix)"""


class RejectionExhausted(LabError):
    """Rejection sampler ran out of tries"""

    def __init__(self, n: int, tries: int):
        self.n = n
        self.tries = tries
        super().__init__(f"Rejection sampling for n={n} failed after {tries} tries")


class SizeCapExceeded(LabError):
    """Unconditioned tree grew beyond the configured cap"""

    def __init__(self, size_cap: int):
        self.size_cap = size_cap
        super().__init__(f"Tree size exceeded cap of {size_cap} vertices")


class OutOfRangeError(LabError):
    """Argument outside the supported range of an evaluator or enumerator"""


class UnknownStatisticError(LabError):
    """Oracle statistic name not recognised"""


class EmptySampleError(LabError):
    """Statistics requested on an empty sample"""
