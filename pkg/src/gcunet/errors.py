"""Exception hierarchy shared by every module."""


class GcunetError(Exception):
    pass


class ShapeMismatch(GcunetError, ValueError):
    pass


class InvalidShape(GcunetError, ValueError):
    pass


class InvalidAxis(GcunetError, ValueError):
    pass


class NonFiniteValue(GcunetError, ArithmeticError):
    pass


class UnknownNode(GcunetError, KeyError):
    pass


class NonScalarOutput(GcunetError, ValueError):
    pass


class LabelOutOfRange(GcunetError, ValueError):
    pass


class DataError(GcunetError):
    """Base for dataset file problems."""


class DataMissing(DataError, FileNotFoundError):
    pass


class BadMagic(DataError, ValueError):
    pass


class TruncatedFile(DataError, ValueError):
    pass


class CountMismatch(DataError, ValueError):
    pass


class ConfigError(GcunetError, ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownKey(ParseError):
    def __init__(self, key, line=None):
        self.key = key
        super().__init__(f"unknown key {key!r}", line)


class DivergedRun(GcunetError, ArithmeticError):
    def __init__(self, epoch, step, loss):
        self.epoch = epoch
        self.step = step
        self.loss = loss
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}, step {step}")
