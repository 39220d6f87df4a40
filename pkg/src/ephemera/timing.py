"""Per-component wall-clock accounting used by the bench command."""

from __future__ import annotations

import time
from collections import defaultdict
from contextlib import contextmanager, nullcontext

COMPONENTS = ("dht", "sharing", "server", "crypto")


class Timings:
    def __init__(self):
        self.totals: dict[str, float] = defaultdict(float)

    @contextmanager
    def section(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.totals[name] += time.perf_counter() - start

    def as_dict(self) -> dict[str, float]:
        return {name: self.totals.get(name, 0.0) for name in COMPONENTS}


def section(timings: Timings | None, name: str):
    return nullcontext() if timings is None else timings.section(name)
