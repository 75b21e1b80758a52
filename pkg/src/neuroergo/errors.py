"""Exception hierarchy shared by all pipeline stages."""


class NeuroErgoError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(NeuroErgoError, ValueError):
    """An argument is outside its admissible range."""


class InsufficientSignalError(NeuroErgoError, ValueError):
    """The signal is too short or too weak for the requested operation."""


class DegenerateSignalError(NeuroErgoError, ValueError):
    """A signal has zero variance where variation is required."""


class DegenerateDesignError(NeuroErgoError, ValueError):
    """A GLM design matrix is rank deficient."""


class ShapeError(NeuroErgoError, ValueError):
    pass


class GraphError(NeuroErgoError, ValueError):
    pass


class InputError(NeuroErgoError, ValueError):
    """A model input is missing a modality required by the variant."""


class ValidationError(NeuroErgoError, ValueError):
    """An ingested file failed validation."""


class DivergenceError(NeuroErgoError, RuntimeError):
    pass
