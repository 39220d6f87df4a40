"""Exception hierarchy shared by every layer of the toolkit."""


class EphemeraError(Exception):
    """Base class for all errors raised by ephemera."""


# -- field / sharing ---------------------------------------------------------

class DuplicateAbscissa(EphemeraError, ValueError):
    pass


class InvalidParams(EphemeraError, ValueError):
    pass


class SecretOutOfField(EphemeraError, ValueError):
    pass


class InsufficientShares(EphemeraError):
    """Fewer than the threshold number of usable shares were available."""


# -- crypto ------------------------------------------------------------------

class MalformedCiphertext(EphemeraError, ValueError):
    pass


# -- dht ---------------------------------------------------------------------

class EmptyNetwork(EphemeraError):
    pass


class ScenarioError(EphemeraError, ValueError):
    pass


# -- key server --------------------------------------------------------------

class KeyRefused(EphemeraError):
    """The key server declined to hand out a key.

    ``reason`` is the wire-level cause; expired and unknown records share
    ``"expired_or_unknown"`` so callers cannot probe which IDs are live.
    """

    reason = "refused"


class KeyExpired(KeyRefused):
    reason = "expired_or_unknown"


class UnknownKey(KeyRefused):
    reason = "expired_or_unknown"


class KeyConsumed(KeyRefused):
    reason = "consumed"


class InvalidExpiry(EphemeraError, ValueError):
    pass


class IdSpaceExhausted(EphemeraError):
    pass


class UnknownId(EphemeraError, KeyError):
    pass


class AlreadyDistributed(EphemeraError):
    pass


class NoAccessKeyRetained(EphemeraError):
    pass


class SnapshotError(EphemeraError, OSError):
    """Snapshot could not be read or written (the IoFailure case)."""


class VersionMismatch(SnapshotError):
    pass


# -- containers --------------------------------------------------------------

class MalformedVdo(EphemeraError, ValueError):
    pass
