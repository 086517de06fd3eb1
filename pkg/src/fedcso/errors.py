"""Exception and warning types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates an operation's precondition (empty batch, bad shape...)."""


class UnsupportedTaskError(ValueError):
    """The requested operation is not available for this task kind."""


class InternalStateError(RuntimeError):
    """A worker or server state is missing a field the operation needs."""


class ConfigError(ValueError):
    """A run configuration is invalid."""


class DenominatorClampWarning(RuntimeWarning):
    """The AP-surrogate denominator fell below its guard and was clamped."""


class ScheduleClampWarning(RuntimeWarning):
    """A theory-prescribed hyperparameter fell outside its valid range and was clamped."""


class ConfigWarning(UserWarning):
    """A configuration is accepted but lies outside the analysed regime (e.g. beta == 0)."""
