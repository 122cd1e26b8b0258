# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Exceptions shared by the character variety laboratory."""


class Error(Exception):
    """Base class of most errors raised by this package."""

    def __repr__(self) -> str:
        """Represent the Error class."""
        return f"<{type(self).__module__}.{type(self).__name__} {self.args}>"

    @property
    def name(self) -> str:
        """Return a string representation of the module plus class."""
        return f"<{type(self).__module__}.{type(self).__name__}>"

    @property
    def message(self) -> str:
        """Return the message passed as an argument."""
        return str(self.args[0]) if self.args else ""


class DimensionError(Error, ValueError):
    """Operands have incompatible shapes."""


class NotAnAutomorphismError(Error, ValueError):
    """A matrix required to be invertible (or symplectic) over the relevant ring is not."""


class InvalidInputError(Error, ValueError):
    """Input values violate an operation's preconditions."""


class CapExceededError(Error):
    """An enumeration would exceed its configured size cap."""


class InternalError(Error, RuntimeError):
    """A self-check failed; indicates a bug rather than bad input."""
