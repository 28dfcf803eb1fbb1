"""Exception hierarchy shared by every module."""


class SALabError(Exception):
    pass


class DomainError(SALabError, ValueError):
    pass


class NonStochastic(SALabError, ValueError):
    pass


class ReducibleOrDegenerate(SALabError, ValueError):
    pass


class DegenerateChain(ReducibleOrDegenerate):
    pass


class NotHurwitz(SALabError, ValueError):
    pass


class SingularAstar(SALabError, ValueError):
    pass


class NumericalDivergence(SALabError, ArithmeticError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"non-finite iterate at index {index}")


class BurnInNotReached(SALabError, ValueError):
    pass


class MissingPath(SALabError, ValueError):
    pass


class ModelMismatch(SALabError, ValueError):
    pass


class InsufficientGrid(SALabError, ValueError):
    pass


class ConfigError(SALabError, ValueError):
    pass
