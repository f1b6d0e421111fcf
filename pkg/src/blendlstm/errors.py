"""Exception hierarchy shared by all blendlstm modules."""


class BlendlstmError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(BlendlstmError):
    """A dataset file or record violates the blendshape data contract."""


class MissingClassError(DataFormatError):
    """A subsampling quota names a source class absent from the dataset."""


class EmptyDatasetError(BlendlstmError):
    """An operation that needs at least one sample received none."""


class ShapeError(BlendlstmError):
    """Tensor or vector dimensions do not match."""


class MaskMismatchError(BlendlstmError):
    """A feature mask does not belong to the blendshape name list in use."""


class InvalidLabelError(BlendlstmError):
    """A class label is outside the expected range or not one-hot."""


class ConfigError(BlendlstmError):
    """An invalid training, architecture, or search configuration."""


class ModelFormatError(BlendlstmError):
    """Base class for model-file problems."""


class ModelVersionError(ModelFormatError):
    """The model file declares a format version this build cannot read."""


class ModelChecksumError(ModelFormatError):
    """The model file checksum does not match its contents."""


class ModelTruncatedError(ModelFormatError):
    """The model file ends before the declared payload is complete."""
