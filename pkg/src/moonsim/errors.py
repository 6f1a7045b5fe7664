"""Exception hierarchy shared by all moonsim modules."""


class MoonsimError(Exception):
    pass


class InvalidArgumentError(MoonsimError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateCouplingError(MoonsimError, ArithmeticError):
    """The sideband coupling vanishes (Laguerre node), so no flip time exists."""


class StiffnessError(MoonsimError, RuntimeError):
    """The adaptive integrator could not take a step above its floor."""


class ConfigError(MoonsimError):
    """A run configuration failed to parse or validate."""
