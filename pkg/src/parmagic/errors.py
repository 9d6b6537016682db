"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
enumeration caps with 3.
"""


class DomainError(ValueError):
    """An argument lies outside the operation's domain."""


class ResourceError(RuntimeError):
    """An exhaustive search would exceed its configured enumeration cap."""

    def __init__(self, message: str, required: int, cap: int):
        super().__init__(f"{message}: requires {required} evaluations, cap is {cap}")
        self.required = required
        self.cap = cap


class ConfigError(ValueError):
    """An experiment configuration is inconsistent or incomplete."""
