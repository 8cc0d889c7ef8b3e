"""Exception hierarchy shared by the solver modules.

The CLI maps ConfigError to exit code 2 and NumericsError to exit code 3.
"""


class ConfigError(ValueError):
    """Invalid run configuration or module preconditions violated."""


class DomainError(ValueError):
    """Non-finite argument passed to a special function."""


class NumericsError(RuntimeError):
    """A numerical procedure failed (overflow, non-convergence, singularity)."""


class ModelError(NumericsError):
    """A potential or initial-state callable produced a non-finite value."""


class EigenvalueSearchError(NumericsError):
    """Eigenvalue bracketing or refinement failed.

    Carries the 1-based eigenvalue index and the last bracket examined.
    """

    def __init__(self, index, bracket, message=""):
        self.index = index
        self.bracket = bracket
        text = f"eigenvalue search failed for index {index}, last bracket {bracket}"
        if message:
            text += f": {message}"
        super().__init__(text)


class EFConstructionError(NumericsError):
    """Exponentially fitted weight system could not be solved.

    Carries the scaled frequency pair (z1, z2) of the offending interval.
    """

    def __init__(self, z1, z2, message=""):
        self.z1 = z1
        self.z2 = z2
        text = f"EF rule construction failed for z1={z1}, z2={z2}"
        if message:
            text += f": {message}"
        super().__init__(text)
