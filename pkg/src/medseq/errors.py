"""Exception types shared across the package."""


class MedseqError(Exception):
    """Base class for all package errors."""


class ParseError(MedseqError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)


class BoundsError(MedseqError, ValueError):
    pass


class UnknownLabelError(MedseqError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ConfigError(MedseqError, ValueError):
    pass


class SizeError(MedseqError, ValueError):
    pass


class DivergenceError(MedseqError, ArithmeticError):
    def __init__(self, epoch, batch, value):
        self.epoch = epoch
        self.batch = batch
        super().__init__("non-finite loss %r at epoch %d, batch %d" % (value, epoch, batch))


class AnnotationWarning(UserWarning):
    """Recoverable inconsistency in gold annotations (overlaps, surface mismatches)."""
