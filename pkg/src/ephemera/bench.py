"""Encapsulation/decapsulation timing over a grid of share counts."""

from __future__ import annotations

import csv
import gc
import io
import random
import statistics
import time
from dataclasses import dataclass

from . import protocol
from .config import resolve_threshold
from .dht import DhtConfig, DhtNetwork, HOUR
from .ephemerizer import Ephemerizer
from .sharing import SharingParams
from .timing import COMPONENTS, Timings

DEFAULT_GRID = (10, 20, 50, 100, 150, 200)
DEFAULT_PAYLOAD = 10 * 1000 * 1000


@dataclass
class BenchRow:
    n: int
    k: int
    encap_time: float
    decap_time: float
    encap_parts: dict
    decap_parts: dict

    def as_csv_row(self) -> dict:
        row = {"n": self.n, "k": self.k, "encap_time": self.encap_time, "decap_time": self.decap_time}
        for name in COMPONENTS:
            row[f"encap_{name}"] = self.encap_parts.get(name, 0.0)
        for name in COMPONENTS:
            row[f"decap_{name}"] = self.decap_parts.get(name, 0.0)
        return row


def _timed(fn, *args, timings: Timings, **kwargs):
    gc_was = gc.isenabled()
    gc.disable()
    try:
        start = time.perf_counter()
        result = fn(*args, timings=timings, **kwargs)
        return result, time.perf_counter() - start
    finally:
        if gc_was:
            gc.enable()


def _one_run(n: int, k: int, payload: bytes, nodes: int, seed: int):
    net = DhtNetwork.bootstrap(DhtConfig(node_count=nodes, seed=seed))
    rng = random.Random(seed)
    server = Ephemerizer(net.clock, rng)
    params = SharingParams(n, k)
    enc_t, dec_t = Timings(), Timings()
    vdo, encap_s = _timed(protocol.encapsulate_hybrid, payload, net.now + 2 * HOUR, params,
                          server, net, rng, timings=enc_t)
    out, decap_s = _timed(protocol.decapsulate_hybrid, vdo, server, net, timings=dec_t)
    if out != payload:
        raise AssertionError("bench round trip mismatch")
    return encap_s, decap_s, enc_t.as_dict(), dec_t.as_dict()


def _median_parts(parts: list[dict]) -> dict:
    return {name: statistics.median(p.get(name, 0.0) for p in parts) for name in COMPONENTS}


def run_bench(grid=DEFAULT_GRID, *, payload_size: int = DEFAULT_PAYLOAD, percent: float = 100.0,
              repeats: int = 3, nodes: int = 200, seed: int = 0) -> list[BenchRow]:
    """Median-of-``repeats`` hybrid timings for each n in ``grid``."""
    payload = random.Random(seed).randbytes(payload_size)
    # one untimed warm-up so imports and table builds don't land on the first row
    _one_run(3, 3, payload[:1024], nodes, seed)
    rows = []
    for n in grid:
        k = resolve_threshold(n, percent=percent)
        runs = [_one_run(n, k, payload, nodes, seed + r) for r in range(repeats)]
        rows.append(BenchRow(
            n, k,
            statistics.median(r[0] for r in runs),
            statistics.median(r[1] for r in runs),
            _median_parts([r[2] for r in runs]),
            _median_parts([r[3] for r in runs]),
        ))
    return rows


def r_squared(xs, ys) -> float:
    """Coefficient of determination of the least-squares line through (xs, ys)."""
    xs, ys = list(map(float, xs)), list(map(float, ys))
    slope, intercept = statistics.linear_regression(xs, ys)
    mean = statistics.fmean(ys)
    ss_tot = sum((y - mean) ** 2 for y in ys)
    if ss_tot == 0:
        return 1.0
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    return 1.0 - ss_res / ss_tot


def fit_summary(rows: list[BenchRow]) -> dict:
    ns = [r.n for r in rows]
    return {
        "encap_r2": r_squared(ns, [r.encap_time for r in rows]),
        "decap_r2": r_squared(ns, [r.decap_time for r in rows]),
        "encap_dht_share": _share(rows, "encap"),
        "decap_dht_share": _share(rows, "decap"),
    }


def _share(rows, side) -> float:
    total = sum(getattr(r, f"{side}_time") for r in rows)
    dht = sum(getattr(r, f"{side}_parts")["dht"] for r in rows)
    return dht / total if total else 0.0


def to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    if rows:
        first = rows[0].as_csv_row()
        writer = csv.DictWriter(buf, fieldnames=list(first), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_csv_row())
    return buf.getvalue()
