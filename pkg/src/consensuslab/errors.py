"""Shared exception types."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class PreconditionError(ValueError):
    """A caller-side precondition was not met."""


class NumericalError(RuntimeError):
    """Integration produced a non-finite state.

    Carries the time at which the failure was detected.
    """

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t={time!r})")
        self.time = time
