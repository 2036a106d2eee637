class DvecError(ValueError):
    """Base class for validation failures raised by this package."""


class ContainerError(DvecError):
    """A DVEC file could not be read (bad magic/version or truncated)."""


class TrainingDiverged(DvecError, ArithmeticError):
    pass
