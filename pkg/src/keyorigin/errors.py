"""Exception types shared across the toolkit."""


class KeyOriginError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(KeyOriginError):
    """Malformed input while parsing keys.

    Carries the byte offset of the offending record and a human-readable
    reason.
    """

    def __init__(self, offset: int, reason: str):
        super().__init__(f"parse error at byte {offset}: {reason}")
        self.offset = offset
        self.reason = reason


class EqualPrimes(KeyOriginError):
    """Both RSA primes are identical."""


class NotInvertible(KeyOriginError):
    """Public exponent is not invertible modulo lcm(p-1, q-1)."""


class Unsatisfiable(KeyOriginError):
    """Generation policy constraints cannot be met."""


class TooShort(KeyOriginError):
    """Input integer has fewer bits than the feature requires."""


class EmptyInput(KeyOriginError):
    """An operation that needs at least one element got none."""


class MissingProfile(KeyOriginError):
    """A grouping references a source with no estimated profile."""


class EmptyGroup(KeyOriginError):
    """A training group contains no feature vectors."""


class EmptyBatch(KeyOriginError):
    """A classification batch contains no vectors."""


class ModeMismatch(KeyOriginError):
    """Vector feature mode does not match the model's feature mode."""


class UnknownGroup(KeyOriginError):
    """A test label does not exist in the trained model."""


class DuplicateModulus(KeyOriginError):
    """Identical moduli in a batch-GCD input (they share both primes)."""


class ConfigError(KeyOriginError):
    """Invalid run configuration."""
