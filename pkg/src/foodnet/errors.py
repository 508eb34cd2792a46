"""Exception hierarchy.

Every failure the package raises on purpose derives from ``FoodnetError`` so
callers (the CLI in particular) can tell expected errors from bugs.
"""


class FoodnetError(Exception):
    """Base class for all structured errors raised by this package."""


class ShapeError(FoodnetError, ValueError):
    """Tensor shapes are inconsistent with an operation's contract."""


class ConfigError(FoodnetError, ValueError):
    """A configuration value violates its documented bounds."""


class DatasetError(FoodnetError):
    """Dataset assembly or splitting failed."""


class ImageDecodeError(DatasetError):
    def __init__(self, path, reason=""):
        self.path = str(path)
        super().__init__(f"cannot decode image {self.path}" + (f": {reason}" if reason else ""))


class FormatError(FoodnetError):
    """A binary file does not follow its format."""


class BadMagicError(FormatError):
    def __init__(self, expected: bytes, found: bytes):
        self.expected = expected
        self.found = found
        super().__init__(f"bad magic: expected {expected!r}, found {found!r}")


class TruncatedFileError(FormatError):
    def __init__(self, what: str, needed: int, available: int):
        self.needed = needed
        self.available = available
        super().__init__(f"truncated file while reading {what}: needed {needed} bytes, {available} available")


class HeaderError(FormatError):
    """Header fields are mutually inconsistent (e.g. parameter shapes)."""


class LabelOverflowError(FormatError):
    def __init__(self, label: int, n_classes: int):
        self.label = label
        self.n_classes = n_classes
        super().__init__(f"label {label} out of range for {n_classes} classes")


class MetricsError(FoodnetError, ValueError):
    """A metric is undefined for the given confusion matrix or labels."""
