"""Exception hierarchy shared by every plantbus subpackage."""


class PlantbusError(Exception):
    """Base class for all plantbus errors."""


# -- rtdb ---------------------------------------------------------------------

class InvalidName(PlantbusError, ValueError):
    pass


class DuplicateName(PlantbusError):
    pass


class UnknownVariable(PlantbusError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class NonFiniteValue(PlantbusError, ValueError):
    pass


class InvalidRange(PlantbusError, ValueError):
    pass


class DuplicateTrendKey(PlantbusError):
    pass


class SinkWriteFailure(PlantbusError, OSError):
    pass


class MalformedTrendRecord(PlantbusError, ValueError):
    def __init__(self, line_no, reason):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


# -- session codec --------------------------------------------------------------

class FrameError(PlantbusError):
    """Raised by the frame decoder."""


class NeedMoreBytes(FrameError):
    def __init__(self, needed):
        super().__init__(f"need at least {needed} bytes")
        self.needed = needed


class BadMagic(FrameError):
    pass


class BadVersion(FrameError):
    pass


class UnknownKind(FrameError):
    pass


class PayloadTooLarge(FrameError, ValueError):
    pass


# -- session runtime ------------------------------------------------------------

class SessionError(PlantbusError):
    pass


class ConnectFailure(SessionError, ConnectionError):
    pass


class DuplicateChannelId(SessionError):
    pass


class ChannelClosed(SessionError):
    pass


class Timeout(SessionError, TimeoutError):
    pass


class RemoteError(SessionError):
    """The peer's handler failed; ``remote_message`` holds its text."""

    def __init__(self, remote_message):
        super().__init__(remote_message)
        self.remote_message = remote_message


class DuplicateMethod(SessionError):
    pass


class AlreadySubscribed(SessionError):
    pass


class StreamClosed(SessionError):
    def __init__(self, message="stream is closed", emitted=None):
        super().__init__(message)
        # set by the gateway when a run is cut short
        self.emitted = emitted


class ChecksumMismatch(SessionError):
    pass


# -- topology -----------------------------------------------------------------

class ParseError(PlantbusError, ValueError):
    def __init__(self, message, line=None, column=None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


class SchemaError(PlantbusError, ValueError):
    pass


class UnvalidatedPlan(PlantbusError):
    def __init__(self, violations):
        super().__init__("plan has violations: " + "; ".join(str(v) for v in violations))
        self.violations = list(violations)


# -- gateway ------------------------------------------------------------------

class InvalidSpec(PlantbusError, ValueError):
    pass


# -- appmods ------------------------------------------------------------------

class ExprSyntaxError(PlantbusError, ValueError):
    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownIdentifier(PlantbusError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnknownInput(PlantbusError):
    pass


class EvalError(PlantbusError, ArithmeticError):
    pass


# -- harness ------------------------------------------------------------------

class BootFailure(PlantbusError):
    def __init__(self, component, reason):
        super().__init__(f"cannot boot component {component!r}: {reason}")
        self.component = component
        self.reason = reason
