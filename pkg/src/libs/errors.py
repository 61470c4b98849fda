# src/libs/errors.py
"""Exception hierarchy shared by the simulation library and the CLI."""


class BairError(Exception):
    """Base class for every error raised by this package."""


class InstanceError(BairError, ValueError):
    """An instance description violates the model's invariants."""


class NoUniqueBestArmError(BairError, ValueError):
    """The reward vector has a tied maximum."""


class ConfigError(BairError, ValueError):
    """An experiment config or CLI argument failed validation."""


class StrategyError(BairError, RuntimeError):
    """A strategy was driven outside its interaction contract."""


class NonTerminatingStrategyError(BairError, RuntimeError):
    """A simulation hit the safety pull cap."""
