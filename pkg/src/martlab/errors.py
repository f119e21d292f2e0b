"""Exception types shared across martlab."""


class MartlabError(Exception):
    """Base class for martlab errors."""


class ConfigError(MartlabError):
    """A run configuration or declarative input file is invalid."""


class HorizonCapError(MartlabError):
    """Requested horizon exceeds the exact-arithmetic state-width cap."""


class EnumerationBudgetError(MartlabError):
    """Path enumeration would exceed the node budget."""


class BudgetInsufficientError(MartlabError):
    """A truncated first-passage table cannot certify the requested quantile."""


class ScheduleOverflowError(MartlabError):
    """The crossing schedule outgrew its time cap before reaching the requested depth."""

    def __init__(self, fits: int, message: str):
        super().__init__(message)
        self.fits = fits
