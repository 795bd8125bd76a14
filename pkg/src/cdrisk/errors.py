"""Exception types shared across the package."""


class CdriskError(Exception):
    """Base class for every error this package raises on purpose."""


# codebook / ingest

class MalformedCodebook(CdriskError):
    """Codebook file does not parse or violates a structural rule."""


class SchemaArity(CdriskError):
    """Codebook does not declare exactly 38 features and 13 labels."""


class DuplicateId(CdriskError):
    """A feature or label id appears more than once."""


class HeaderMismatch(CdriskError):
    """CSV header is missing required columns."""


class IoError(CdriskError):
    """File could not be read or written (wraps the OS-level error)."""


class EmptySplit(CdriskError):
    """Normalizer asked to fit on an empty training split."""


class TooFewRecords(CdriskError):
    """Dataset too small to split."""


class NotCategorical(CdriskError):
    """Cohort grouping requested on a non-categorical feature."""


class UnknownFeature(CdriskError):
    """A feature, label, or disease id is not in the schema."""


# model

class DimensionMismatch(CdriskError):
    """Input vector size does not match the model."""


class LengthMismatch(CdriskError):
    """Prediction and label sequences differ in length."""


# trainer

class SingleClass(CdriskError):
    """Both classes must be present to weight or train."""


class ShapeMismatch(CdriskError):
    """Optimizer state/gradient shapes do not match the parameters."""


class NonFiniteLoss(CdriskError):
    """Training loss became NaN or infinite; run aborted."""


class BadMagic(CdriskError):
    """Checkpoint file does not start with the expected magic bytes."""


class VersionMismatch(CdriskError):
    """Checkpoint format version is not supported."""


class SchemaHashMismatch(CdriskError):
    """Checkpoint was produced against a different codebook."""


# explainer

class TooFewPoints(CdriskError):
    """k-means asked for more clusters than points."""


class TooManyFeatures(CdriskError):
    """Exact Shapley enumeration only supports small feature counts."""


class KTooLarge(CdriskError):
    """top-k requested more features than remain after exclusions."""


# interface

class MissingCheckpoint(CdriskError):
    """Service startup found no usable model checkpoints."""


class PortBusy(CdriskError):
    """Requested service port is already bound."""
