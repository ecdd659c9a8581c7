"""Exception types shared across the package."""


class ConvergenceError(ArithmeticError):
    """A numeric procedure could not reach its accuracy target.

    Raised for series whose tail bound cannot be pushed below target, non
    convergent quadrature, maximizers sitting on a scan boundary and similar
    failures. Precondition violations raise ``ValueError`` instead.
    """
