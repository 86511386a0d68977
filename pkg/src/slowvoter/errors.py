"""Exception types shared by every module of the toolkit."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(ValueError):
    """A run configuration is inconsistent, incomplete or numerically unsafe.

    Parameters
    ----------
    message : str
        Summary of the problem.
    fields : dict, optional
        Mapping from configuration field name to a field-level message.
    """

    def __init__(self, message, fields=None):
        self.fields = dict(fields or {})
        if self.fields:
            detail = "; ".join(f"{k}: {v}" for k, v in sorted(self.fields.items()))
            message = f"{message} ({detail})"
        super().__init__(message)
