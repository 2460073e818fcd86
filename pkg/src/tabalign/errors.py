"""Exception types shared across the package."""


class TabAlignError(Exception):
    """Base class for all package errors."""


class SchemaError(TabAlignError):
    """Schema file problems or header/schema mismatch."""


class ParseError(TabAlignError):
    """A cell value that cannot be parsed under its declared column kind."""


class FormatError(TabAlignError):
    """Structurally invalid input file."""


class SplitError(TabAlignError):
    """Dataset too small to give every class a presence in the test split."""


class EpisodeError(TabAlignError):
    """A class lacks enough test rows for the requested episode."""


class EncodingError(TabAlignError):
    """Raw value outside the fitted encoder's domain."""


class MaskError(TabAlignError):
    """Separation mask cannot be sampled for this schema."""


class ViewError(TabAlignError):
    """View construction on inputs of the wrong width."""


class DimensionError(TabAlignError):
    """Matrix shapes incompatible with the layer stack."""


class LossError(TabAlignError):
    """Loss inputs violate the batch contract."""


class OptimizerError(TabAlignError):
    """Non-finite gradients or mismatched optimizer state."""


class TrainingError(TabAlignError):
    """Pretraining aborted: non-finite loss or unusable training data."""


class HeadError(TabAlignError):
    """Few-shot classification head cannot be applied."""


class AnalysisError(TabAlignError):
    """Neighborhood diagnostics asked for more neighbors than rows exist."""


class CheckpointError(TabAlignError):
    """Malformed or incompatible checkpoint file."""


class ConfigError(TabAlignError):
    """Invalid run configuration."""
