"""Exception hierarchy shared by the verifier modules."""


class VerifierError(Exception):
    """Base class for every error raised by the verifier."""


class InputError(VerifierError, ValueError):
    """A vector or matrix has the wrong shape for the network it is used with."""


class ParseError(VerifierError, ValueError):
    """A network or property file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ContractViolation(VerifierError, AssertionError):
    """An operation was called outside of its precondition."""


class SolverError(VerifierError, RuntimeError):
    """The LP engine could not finish (cycling, unbounded objective, iteration guard)."""


class RefusalError(VerifierError):
    """The request is outside what the component is willing to compute."""


class ConfigError(VerifierError, ValueError):
    """An option bundle failed validation."""
