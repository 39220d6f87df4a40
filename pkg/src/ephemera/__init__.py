"""Self-destructing data: a key-erasing server plus DHT-held secret shares."""

from .dht import DhtConfig, DhtNetwork, VirtualClock
from .ephemerizer import Ephemerizer
from .errors import EphemeraError, InsufficientShares, KeyRefused
from .protocol import decapsulate, encapsulate
from .sharing import Share, SharingParams
from .vdo import Mode, Vdo

__version__ = "0.1.0"

__all__ = [
    "DhtConfig", "DhtNetwork", "VirtualClock", "Ephemerizer", "EphemeraError",
    "InsufficientShares", "KeyRefused", "encapsulate", "decapsulate", "Share",
    "SharingParams", "Mode", "Vdo",
]
