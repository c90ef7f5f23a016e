"""Exception hierarchy. Every error carries a short machine-readable ``code``
that the command-line front end prints alongside the message."""


class SoftsError(Exception):
    code = "E_SOFTS"


class ShapeError(SoftsError, ValueError):
    code = "E_SHAPE"


class NonFiniteError(SoftsError, FloatingPointError):
    code = "E_NONFINITE"


class EmptyChannelError(ShapeError):
    code = "E_EMPTY_CHANNELS"


class DataFormatError(SoftsError, ValueError):
    code = "E_DATA"


class SplitError(SoftsError, ValueError):
    code = "E_SPLIT"


class ConfigError(SoftsError, ValueError):
    code = "E_CONFIG"


class CheckpointError(SoftsError):
    code = "E_CHECKPOINT"


class DivergenceError(SoftsError, FloatingPointError):
    code = "E_DIVERGED"
