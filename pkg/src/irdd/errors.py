"""Exception hierarchy shared by the estimators and the CLI."""


class IrddError(Exception):
    """Base class for all package errors."""


class InvalidInputError(IrddError, ValueError):
    """Malformed data: empty samples, non-finite values, bad indicators."""


class ConfigError(IrddError, ValueError):
    """Tuning parameters outside their admissible range."""


class RangeError(IrddError, ValueError):
    """Evaluation point outside the domain of a geometric object."""


class EstimationError(IrddError):
    """The data are valid but the requested estimate is not defined."""


class InsufficientDataError(EstimationError):
    """One side of the cutoff has no observations."""

    def __init__(self, message: str, n_minus: int, n_plus: int):
        super().__init__(f"{message} (n_minus={n_minus}, n_plus={n_plus})")
        self.n_minus = n_minus
        self.n_plus = n_plus


class WeakDiscontinuityError(EstimationError):
    """The treatment-probability jump is too small to divide by."""

    def __init__(self, p_minus: float, p_plus: float):
        super().__init__(
            f"treatment probability does not jump at the cutoff: "
            f"p_minus={p_minus:.6g}, p_plus={p_plus:.6g}"
        )
        self.p_minus = p_minus
        self.p_plus = p_plus


class DegenerateWindowError(EstimationError):
    """Local regression window holds fewer than two distinct design points."""
