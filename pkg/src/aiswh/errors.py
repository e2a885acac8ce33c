"""Exception types shared across the warehouse modules."""


class AiswhError(Exception):
    pass


class ConfigError(AiswhError):
    """Invalid configuration. ``violations`` lists every problem found."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DomainError(AiswhError, ValueError):
    """A coordinate or rectangle lies outside the spatial domain."""


class ValidationError(AiswhError, ValueError):
    pass


class StoreFormatError(AiswhError):
    """An on-disk artifact has an unexpected format or version."""
