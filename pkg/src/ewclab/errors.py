"""Exception types shared across the package."""


class EwcLabError(Exception):
    """Base class for all ewclab errors."""


class ShapeError(EwcLabError):
    """Tensor shapes are invalid or do not conform."""


class InvalidInputError(EwcLabError):
    """Argument values violate an operation's contract."""


class ConfigError(EwcLabError):
    """A configuration object or file is invalid."""


class TokenizeError(EwcLabError):
    """Input text contains a symbol not covered by the vocabulary."""


class RenderError(EwcLabError):
    """An arithmetic instance does not fit the rendering width."""


class DecodeError(EwcLabError):
    """Predicted tokens do not form a signed numeral."""


class DegenerateInputError(EwcLabError):
    """Numerically degenerate input (e.g. an all-zero affinity row)."""


class ExportError(EwcLabError):
    """Report/trace export failed; message carries the path."""
