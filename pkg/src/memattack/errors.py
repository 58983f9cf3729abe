"""Exception hierarchy shared across the simulator."""


class MemAttackError(Exception):
    """Base class for all simulator errors."""


class MissingSettingPair(MemAttackError):
    """A CHSH setting pair has no samples."""


class DeviceAborted(MemAttackError):
    """A device refused to produce output on its scheduled abort day."""

    def __init__(self, device_id, day):
        super().__init__(f"device {device_id!r} aborted on day {day}")
        self.device_id = device_id
        self.day = day


class ShipmentRejected(MemAttackError):
    """Incoming quantum states reached a sub-laboratory sealed against input."""


class IsolationViolation(MemAttackError):
    """An isolated source was asked to carry hidden data."""


class InsufficientPresharedKey(MemAttackError):
    """The one-time pad for encrypted parameter estimation ran out."""


class ECFailure(MemAttackError):
    """Reconciled strings failed the final verification hash."""


class DimensionMismatch(MemAttackError, ValueError):
    pass


class TooLarge(MemAttackError, ValueError):
    """Exhaustive enumeration requested beyond the supported size."""


class BudgetExceeded(MemAttackError, ValueError):
    """A leak schedule needs more rounds than a day provides."""


class CampaignTooShort(MemAttackError, ValueError):
    """An abort-encoded integer does not fit in the campaign."""


class ConfigError(MemAttackError, ValueError):
    """Invalid experiment or protocol configuration."""
