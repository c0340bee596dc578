class VolcalError(ValueError):
    """Base class for input errors raised by volcal."""


class EmptyRegionError(VolcalError):
    """No voxel or data point is available to evaluate."""


class ShapeMismatchError(VolcalError):
    """Two inputs that must be aligned have different geometry or length."""


class DegenerateLabelsError(VolcalError):
    """Labels contain a single class, so a likelihood fit has no optimum."""


class ConstantInputError(VolcalError):
    """A correlation was requested on an input without variation."""


class ContainerError(VolcalError):
    """A volume container or manifest failed validation."""
