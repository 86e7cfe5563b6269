"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when a parameter or configuration violates a stated bound."""


class IntegrationBlowup(RuntimeError):
    """Raised when time stepping produces non-finite values.

    ``time`` is the time of the last finite state and ``records`` holds
    whatever was collected before the failure.
    """

    def __init__(self, message, time, records=None):
        super().__init__(message)
        self.time = time
        self.records = records

    def __reduce__(self):
        return (type(self), (str(self), self.time, self.records))
