"""Exception types shared across the toolkit."""


class ConfigurationError(Exception):
    """A config file, plan, or call-time option is invalid or unusable."""


class ValidationError(Exception):
    """Input data violates a documented contract (ranges, references)."""


class SchemaError(ValidationError):
    """A structured document does not conform to its schema."""


class ParseError(ValidationError):
    """A document could not be parsed at all.

    ``offset`` is the byte offset of the first unparseable character when
    known, else ``None``.
    """

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class AssetError(Exception):
    """An asset (mesh, texture, HDRI) is malformed or unusable."""


class AssetIOError(AssetError, OSError):
    """An asset file is missing or unreadable."""
