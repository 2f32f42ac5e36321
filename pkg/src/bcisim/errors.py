"""Exception hierarchy shared by every subsystem."""


class BciSimError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(BciSimError):
    pass


class IngestionError(BciSimError):
    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class DegenerateInputError(BciSimError, ValueError):
    pass


class FramingError(BciSimError):
    """Truncated or overrun bitstream / packet."""


class IntegrityError(BciSimError):
    """CRC mismatch on an incoming frame.

    ``ptype`` is ``None`` when the header itself is corrupt, since the
    type field cannot be trusted then.
    """

    def __init__(self, message, ptype=None, header_ok=False, payload_ok=False, packet=None):
        super().__init__(message)
        self.ptype = ptype
        self.header_ok = header_ok
        self.payload_ok = payload_ok
        self.packet = packet


class CapacityError(BciSimError):
    pass


class DataExpiredError(BciSimError):
    pass


class BackpressureError(BciSimError):
    pass


class InfeasibleError(BciSimError):
    def __init__(self, message, row=None, violation=None):
        super().__init__(message)
        self.row = row
        self.violation = violation


class ScheduleViolation(BciSimError):
    def __init__(self, message, constraint=None):
        super().__init__(message)
        self.constraint = constraint


class SyncFailure(BciSimError):
    pass


class QuerySyntaxError(BciSimError):
    def __init__(self, message, line=1, column=1, token_index=None, expected=()):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column
        self.token_index = token_index
        self.expected = tuple(expected)


class PlanningError(BciSimError):
    def __init__(self, message, constraint=None):
        super().__init__(message)
        self.constraint = constraint
