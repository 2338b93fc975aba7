"""Exception types shared across the simulator."""


class ConfigError(Exception):
    """Raised for inconsistent or unparseable run configuration."""


class QuotaExceeded(Exception):
    """A party asked an oracle more often than its per-round quota allows."""


class ProtocolViolation(Exception):
    """The network layer was asked to do something the model forbids."""


class InvalidChain(Exception):
    """Standalone record extraction was invoked on an invalid chain."""


class InvalidComposition(Exception):
    """Two deviations demand contradictory actions in the same step."""


class NoHonestParty(Exception):
    """Utility aggregation requires at least one honest view."""


class ViewNotHonest(Exception):
    """A coalition utility was requested from a corrupted party's view."""


class DomainError(Exception):
    """A numeric helper was called outside its domain."""
