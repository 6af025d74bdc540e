"""Exception types shared across the warehouse engine.

Every error carries a stable ``code`` (the class name) used on the wire and in
access logs, and an ``exit_code`` the CLI maps to: 1 for validation problems,
2 for I/O and corruption.
"""

from __future__ import annotations


class CdwError(Exception):
    exit_code = 1

    def __init__(self, message: str = ""):
        super().__init__(message)
        self.message = message

    @property
    def code(self) -> str:
        return type(self).__name__


# --- extraction -------------------------------------------------------------

class MissingFile(CdwError):
    exit_code = 2


class HeaderMismatch(CdwError):
    pass


class IoFailure(CdwError):
    exit_code = 2


# --- warehouse --------------------------------------------------------------

class WarehouseLocked(CdwError):
    exit_code = 2


class CorruptTable(CdwError):
    exit_code = 2


class CorruptWarehouse(CdwError):
    exit_code = 2


class UnknownLevel(CdwError):
    pass


class UnknownAttribute(CdwError):
    pass


# --- olap -------------------------------------------------------------------

class UnknownCube(CdwError):
    pass


class InvalidSpec(CdwError):
    pass


class UnknownMember(CdwError):
    pass


class AtFinestLevel(CdwError):
    pass


class AtCoarsestLevel(CdwError):
    pass


# --- reports ----------------------------------------------------------------

class InvalidPeriod(CdwError):
    pass


class UnknownCancerType(CdwError):
    pass


class UnknownDrug(CdwError):
    pass


# --- delivery ---------------------------------------------------------------

class BindFailure(CdwError):
    exit_code = 2
