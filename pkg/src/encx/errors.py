"""Exception hierarchy shared by every encx module."""


class EncxError(Exception):
    """Base class for all errors raised by encx."""


class ModelError(EncxError):
    """A model document or model object is unusable."""


class ModelSyntaxError(ModelError):
    """The document is not well-formed JSON."""


class SchemaError(ModelError):
    """Required fields are missing, unknown fields are present, or a field has the wrong type."""


class ValidationError(ModelError):
    """The document is well-formed but violates a model invariant."""


class DegenerateRow(ModelError):
    """A CPT row sums to zero and the model declares no smoothing."""


class CapacityError(EncxError):
    """Exact enumeration would exceed the configured cell budget."""


class KindError(EncxError):
    """An operation was applied to a variable of the wrong kind."""


class RejectionBudgetExceeded(EncxError):
    """Rejection sampling gave up before finding an admissible initial state."""


class EmptySampleError(EncxError):
    """A histogram was requested over zero samples."""


class SchemeMismatch(EncxError):
    """Two distributions are not defined over the same bin scheme."""


class IncompatibleModels(EncxError):
    """Models cannot be blended or aligned with each other."""
