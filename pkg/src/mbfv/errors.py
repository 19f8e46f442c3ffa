"""Exception types shared across the package."""


class FieldMismatchError(ValueError):
    """Operands belong to different fields."""


class ParameterError(ValueError):
    """Vault or decoder parameters are inconsistent (e.g. k >= set size)."""


class EncodingOverflowError(ValueError):
    """A feature value does not fit into the field or fused universe."""


class RecordFormatError(ValueError):
    """A serialized vault record or envelope is malformed."""


class EnvelopeError(RuntimeError):
    """Operation is not allowed in the record's current envelope state."""


class ConfigError(ValueError):
    """Codec or trial configuration is invalid."""


class InsufficientDataError(ValueError):
    """Not enough mated/non-mated samples to estimate a statistic."""


class ExtrapolationError(ValueError):
    """FAS cannot be estimated or extrapolated from the given rows."""
