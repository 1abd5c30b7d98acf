"""Exception types shared across the toolkit."""


class InputError(ValueError):
    """Malformed or out-of-range user input (files, flags, records)."""


class IdentifiabilityError(ValueError):
    """The data cannot determine the requested free parameters."""


class InfeasibleError(ValueError):
    """A target cannot be reached.

    ``bound`` carries the achievable limit in the target's own units
    (°C/s for rate targets, °C for drops and temperatures). When a device
    flow cap also applies, ``device_bound`` is the tighter limit under it.
    """

    def __init__(self, message, bound=None, segment=None, device_bound=None):
        super().__init__(message)
        self.bound = bound
        self.segment = segment
        self.device_bound = device_bound


class DeviceLimitError(InfeasibleError):
    """Target is reachable by the model but needs more flow than the device delivers."""
