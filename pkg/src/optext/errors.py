"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, NumericsError -> 3,
invariant violations detected by `verify` -> 4. DomainError signals a call
outside an operation's documented domain and is a plain ValueError subclass.
"""


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


class DomainError(ValueError):
    """Argument outside the documented domain of an operation."""


class NumericsError(ArithmeticError):
    """A numerical routine failed to reach its accuracy target.

    `partial` carries the best available estimate, when one exists.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
