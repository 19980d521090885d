"""Exception hierarchy shared by the simulator and its front ends."""


class AtomSqueezeError(Exception):
    """Base class for all simulator errors."""


class ConfigError(AtomSqueezeError, ValueError):
    """Invalid parameters, presets or configuration files."""


class BasisTooLargeError(ConfigError):
    """The configuration basis exceeds the cap of the full engine."""


class ResonanceError(AtomSqueezeError, ZeroDivisionError):
    """The Lorentzian denominator of a cavity amplitude is exactly zero."""


class DarkStateError(AtomSqueezeError):
    """No component of the state can emit a photon."""


class ConsistencyError(AtomSqueezeError, ArithmeticError):
    """Two independent evaluations of the same quantity disagree."""


class RegimeNotReachedError(AtomSqueezeError):
    """A trajectory does not contain the requested shrinking regime."""
