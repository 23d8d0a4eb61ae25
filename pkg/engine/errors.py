"""
Error taxonomy for isolab

Every error carries the process exit code the CLI reports for it:
    1 - configuration error
    2 - precondition violation (the message names the violated bound)
    3 - numeric non-convergence
"""

from typing import Any, Optional, Tuple


class IsolabError(Exception):
    exit_code = 1


class ConfigError(IsolabError):
    exit_code = 1


class PreconditionError(IsolabError, ValueError):
    exit_code = 2

    def __init__(self, message: str, bound: Optional[str] = None):
        super().__init__(message if bound is None else f"{message} (violated bound: {bound})")
        self.bound = bound


class DomainError(PreconditionError):
    pass


class NoSolutionError(PreconditionError):
    pass


class DegenerateTriangleError(PreconditionError):
    pass


class InsufficientDirectionsError(PreconditionError):
    pass


class DisconnectedWedgeError(PreconditionError):
    pass


class NonConvergenceError(IsolabError):
    exit_code = 3

    def __init__(self, message: str, bracket: Optional[Tuple[Any, ...]] = None):
        if bracket is not None:
            message = f"{message}; best bracket {bracket}"
        super().__init__(message)
        self.bracket = bracket


class BlendBoundError(NonConvergenceError):
    pass
