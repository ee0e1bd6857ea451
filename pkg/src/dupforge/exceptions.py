"""Exception hierarchy.

Validation problems (bad input, infeasible parameters) derive from
``ValidationError`` so the CLI can map them to exit status 1; everything
else that is ours derives from ``DupforgeError``.
"""


class DupforgeError(Exception):
    pass


class ValidationError(DupforgeError):
    pass


class UnknownEntity(DupforgeError):
    pass


class OutsideLifespan(DupforgeError):
    pass


class InconsistentInput(ValidationError):
    def __init__(self, message, row_ids=()):
        super().__init__(message)
        self.row_ids = list(row_ids)


class InfeasibleConfig(ValidationError):
    pass


class UnknownPath(ValidationError):
    pass


class UnknownErrorClass(ValidationError):
    pass


class MissingProvenance(ValidationError):
    pass


class InapplicableClass(DupforgeError):
    pass


class ExhaustedRetries(DupforgeError):
    pass


class DanglingRecord(DupforgeError):
    pass


class InvalidKind(ValidationError):
    pass


class UnmappableRecord(DupforgeError):
    pass


class ConstraintDeadlock(DupforgeError):
    pass


class NoHistory(DupforgeError):
    pass
