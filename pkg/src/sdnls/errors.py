"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration: bad file, bad value, or mismatched shapes."""


class BlowUpError(RuntimeError):
    """The H^1 norm of a trajectory exceeded the blow-up guard.

    The run that raised this is invalid and must not be averaged into
    ensemble moments.
    """

    def __init__(self, norm: float, time: float | None = None):
        self.norm = float(norm)
        self.time = time
        where = f" at t={time:g}" if time is not None else ""
        super().__init__(f"H^1 norm {norm:.6g} exceeded the blow-up guard{where}")
