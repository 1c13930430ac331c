"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration (bad field value, violated guard). CLI exit code 2."""


class NumericalIntegrityError(RuntimeError):
    """A numerical invariant was violated beyond tolerance. CLI exit code 3."""


class DegenerateStateError(NumericalIntegrityError):
    """Orbital matrix lost full column rank (state collapsed)."""


class ImpossibleOutcomeError(ValueError):
    """Requested projection outcome has (numerically) zero probability."""


class OpenShellWarning(UserWarning):
    """Fermi level is degenerate; filled momenta chosen by the documented tie-break."""
