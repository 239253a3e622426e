"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, FormatError -> 2,
NumericError -> 3. Plain ValueError/IndexError signal caller bugs
(contract violations) and are not remapped.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad band edges, Nyquist violation, window too long."""


class FormatError(ValueError):
    """Malformed dataset or checkpoint file. Messages name the byte offset."""


class NumericError(ArithmeticError):
    """Non-finite values, SVD failure, or training divergence."""
