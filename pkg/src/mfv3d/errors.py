"""Exception types raised across the package."""


class MfvError(Exception):
    pass


class ParseError(MfvError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyInputError(MfvError, ValueError):
    pass


class UnsupportedFormatError(MfvError, ValueError):
    pass


class DegenerateInputError(MfvError, ValueError):
    pass


class MisuseError(MfvError, RuntimeError):
    pass


class ShapeError(MfvError, ValueError):
    pass


class NoPointError(MfvError, ValueError):
    pass


class DegeneratePlaneError(MfvError, ValueError):
    def __init__(self, message, rho0=0.0):
        super().__init__(message)
        self.rho0 = rho0


class DivergenceError(MfvError, FloatingPointError):
    def __init__(self, epoch, learning_rate):
        super().__init__(f"loss became non-finite at epoch {epoch} (lr={learning_rate})")
        self.epoch = epoch
        self.learning_rate = learning_rate
