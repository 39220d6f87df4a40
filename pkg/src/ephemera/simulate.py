"""Deterministic encap -> churn -> decap timelines on the simulated DHT."""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field

from . import protocol
from .config import RunConfig
from .dht import DhtConfig, DhtNetwork, Scenario
from .ephemerizer import Ephemerizer
from .errors import EphemeraError, InsufficientShares, KeyRefused, UnknownId
from .sharing import SharingParams
from .vdo import Mode


@dataclass
class PhaseOutcome:
    at: float
    action: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        status = "ok" if self.ok else "FAIL"
        text = f"t={self.at:>9.0f}s {self.action:<8} {status}"
        return f"{text}  {self.detail}" if self.detail else text


@dataclass
class SimReport:
    mode: str
    n: int
    k: int
    expires_at: float | None
    phases: list[PhaseOutcome] = field(default_factory=list)

    def to_text(self) -> str:
        head = f"mode={self.mode} n={self.n} k={self.k}"
        if self.expires_at is not None:
            head += f" T={self.expires_at:.0f}s"
        return "\n".join([head] + [p.line() for p in self.phases])

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def outcome_at(self, at: float) -> PhaseOutcome:
        for p in self.phases:
            if p.at == at and p.action == "decap":
                return p
        raise KeyError(at)


def default_checks(mode: Mode, cfg: RunConfig) -> list[float]:
    life = cfg.dht_ttl if mode is Mode.VANISH else cfg.ttl
    return [life / 2, life + 60.0]


def build_network(cfg: RunConfig, scenario: Scenario | None = None) -> DhtNetwork:
    seed = cfg.seed if scenario is None or scenario.seed is None else scenario.seed
    return DhtNetwork.bootstrap(DhtConfig(
        node_count=cfg.nodes, replication_factor=cfg.replication,
        replication_interval=cfg.replication_interval, entry_ttl=cfg.dht_ttl,
        join_rate=cfg.join_rate, leave_rate=cfg.leave_rate, seed=seed,
        time_scale=cfg.time_scale))


def _reason(exc: Exception) -> str:
    if isinstance(exc, KeyRefused):
        return f"refused: {exc.reason}"
    if isinstance(exc, UnknownId):
        return "refused: expired_or_unknown"
    if isinstance(exc, InsufficientShares):
        return f"insufficient shares: {exc}"
    return f"{type(exc).__name__}: {exc}"


class _Timeline:
    def __init__(self, mode, net, server, vdo, payload, report):
        self.mode, self.net, self.server = mode, net, server
        self.vdo, self.payload, self.report = vdo, payload, report

    def check(self):
        try:
            out = protocol.decapsulate(self.vdo, server=self.server, dht=self.net)
        except EphemeraError as exc:
            self.report.phases.append(PhaseOutcome(self.net.now, "decap", False, _reason(exc)))
            return
        same = out == self.payload
        self.report.phases.append(PhaseOutcome(self.net.now, "decap", same,
                                               "byte-identical" if same else "content mismatch"))

    def refresh(self, rng):
        try:
            if self.mode is Mode.VANISH:
                self.vdo = protocol.refresh_vanish(self.vdo, self.net, rng)
            elif self.mode is Mode.HYBRID:
                self.vdo = protocol.refresh_hybrid(self.vdo, self.server, self.net)
            else:
                self.report.phases.append(PhaseOutcome(self.net.now, "refresh", True,
                                                       "nothing to refresh"))
                return
        except EphemeraError as exc:
            self.report.phases.append(PhaseOutcome(self.net.now, "refresh", False, _reason(exc)))
            return
        self.report.phases.append(PhaseOutcome(self.net.now, "refresh", True,
                                               f"new L {self.vdo.l.hex()[:12]}..."))


def run_simulation(mode: Mode, cfg: RunConfig, *, payload: bytes = b"ephemeral payload",
                   scenario: Scenario | None = None, refresh_at=(), check_at=None,
                   net: DhtNetwork | None = None) -> SimReport:
    """Encapsulate at t0, then replay refreshes, checks and scripted churn in time order."""
    net = net or build_network(cfg, scenario)
    if scenario is not None:
        net.apply_scenario(scenario)
    rng = random.Random(cfg.seed)
    server = Ephemerizer(net.clock, rng)
    server.attach(net)
    t0 = net.now
    n, k = cfg.sharing_for(mode.label)
    params = SharingParams(n, k)
    expires_at = None if mode is Mode.VANISH else t0 + cfg.ttl
    vdo = protocol.encapsulate(mode, payload, server=server, dht=net, expires_at=expires_at,
                               params=params, rng=rng, read_once=cfg.read_once)
    report = SimReport(mode.label, n if mode is not Mode.EPHEMERIZER else 0,
                       k if mode is not Mode.EPHEMERIZER else 0, expires_at)
    report.phases.append(PhaseOutcome(t0, "encap", True, f"{len(payload)} bytes"))
    timeline = _Timeline(mode, net, server, vdo, payload, report)
    checks = default_checks(mode, cfg) if check_at is None else list(check_at)
    # refreshes at the same instant as a check run first
    for at in refresh_at:
        net.schedule(t0 + at - 1e-9, timeline.refresh, rng)
    for at in checks:
        net.schedule(t0 + at, timeline.check)
    horizon = max([0.0, *checks, *refresh_at])
    net.run_until(t0 + horizon)
    report.phases.sort(key=lambda p: p.at)
    for p in report.phases:
        p.at = round(p.at - t0, 6)
    return report
