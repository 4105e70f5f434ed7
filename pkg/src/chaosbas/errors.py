"""Exception types shared across the package.

Every error carries a stable machine-readable ``code`` so the HTTP layer and
the client can round-trip errors without string matching on messages.
"""


class ChaosBasError(Exception):
    """Base class for all package errors."""

    code = "Error"

    def __init__(self, detail: str = ""):
        super().__init__(detail or self.code)
        self.detail = detail or self.code


class ParseError(ChaosBasError):
    """Input document is malformed (bad JSON, wrong shape, unknown enum value)."""

    code = "ParseError"


class IntegrityError(ChaosBasError):
    """Document parsed but violates referential or structural rules."""

    code = "IntegrityError"


class NoExecutorForPlatform(ChaosBasError):
    code = "NoExecutorForPlatform"


class UnknownName(ChaosBasError):
    """Name lookup failed (DNS name, host name, or similar)."""

    code = "UnknownName"


class UncoveredRule(ChaosBasError):
    """A channel/action pair has no outcome rule: catalog and rule table disagree."""

    code = "UncoveredRule"


class BindError(ChaosBasError):
    code = "BindError"


class InvalidConfig(ChaosBasError):
    code = "InvalidConfig"


class DuplicateName(ChaosBasError):
    code = "DuplicateName"


class UnknownOperation(ChaosBasError):
    code = "UnknownOperation"


class UnknownAgent(ChaosBasError):
    code = "UnknownAgent"


class UnknownAbility(ChaosBasError):
    code = "UnknownAbility"


class UnknownLink(ChaosBasError):
    code = "UnknownLink"


class OperationFinished(ChaosBasError):
    code = "OperationFinished"


class RealTimeMode(ChaosBasError):
    """Clock advance was requested but the server runs on wall-clock time."""

    code = "RealTimeMode"


class ConnectionError(ChaosBasError):  # noqa: A001 - mirrors requests.ConnectionError
    """The BAS endpoint could not be reached."""

    code = "ConnectionError"


class ProtocolError(ChaosBasError):
    """The BAS endpoint answered with something that is not the expected JSON."""

    code = "ProtocolError"


class PollTimeout(ChaosBasError):
    """await_result gave up before the link reached a terminal status."""

    code = "PollTimeout"


class UnknownBranch(ChaosBasError):
    code = "UnknownBranch"


class StateUnavailable(ChaosBasError):
    code = "StateUnavailable"


class ValidationError(ChaosBasError):
    """Experiment input rejected; ``variable`` names the offending input."""

    code = "ValidationError"

    def __init__(self, variable: str, detail: str = ""):
        super().__init__(detail or f"invalid experiment input: {variable}")
        self.variable = variable


_BY_CODE = {
    cls.code: cls
    for cls in [
        ParseError, IntegrityError, NoExecutorForPlatform, UnknownName,
        UncoveredRule, BindError, InvalidConfig, DuplicateName,
        UnknownOperation, UnknownAgent, UnknownAbility, UnknownLink,
        OperationFinished, RealTimeMode, ConnectionError, ProtocolError,
        PollTimeout, UnknownBranch, StateUnavailable,
    ]
}


def error_for_code(code: str, detail: str = "") -> ChaosBasError:
    """Rebuild a typed error from a wire-level error code."""
    cls = _BY_CODE.get(code)
    if cls is None:
        return ChaosBasError(f"{code}: {detail}")
    return cls(detail)
