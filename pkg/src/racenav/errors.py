"""Exception types raised across the package."""


class RacenavError(Exception):
    pass


class DomainError(RacenavError, ValueError):
    """Argument outside the domain where a function is defined."""


class DegenerateProjectionError(RacenavError, ValueError):
    pass


class DegenerateSegmentError(RacenavError, ValueError):
    pass


class InfeasibleLimitsError(RacenavError, ValueError):
    pass


class SingularFlatnessError(RacenavError, ArithmeticError):
    """Thrust magnitude too small to recover attitude from acceleration."""


class SingularThrustError(RacenavError, ArithmeticError):
    pass


class StateError(RacenavError, ValueError):
    pass


class ShapeError(RacenavError, ValueError):
    pass


class DivergenceError(RacenavError, ArithmeticError):
    pass


class ConfigError(RacenavError):
    pass
