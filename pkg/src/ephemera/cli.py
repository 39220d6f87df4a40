"""Command-line entry point.

Exit codes: 0 success, 2 usage, 3 refused or expired, 4 insufficient
shares, 5 I/O or malformed input.
"""

from __future__ import annotations

import argparse
import logging
import os
import pickle
import random
import secrets
import signal
import sys
import threading
from pathlib import Path

from . import bench, protocol, vdo as vdo_mod
from .config import RunConfig, load_config, parse_duration, parse_size
from .dht import DhtNetwork, parse_scenario
from .ephemerizer import Ephemerizer
from .errors import (
    EphemeraError,
    InsufficientShares,
    InvalidParams,
    KeyRefused,
    MalformedCiphertext,
    MalformedVdo,
    ScenarioError,
    SnapshotError,
    UnknownId,
)
from .sharing import SharingParams
from .simulate import build_network, run_simulation
from .sybil import AttackConfig, Target, run_attack
from .vdo import Mode

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_REFUSED = 3
EXIT_SHARES = 4
EXIT_IO = 5

log = logging.getLogger("ephemera")

DHT_FILE = "dht.pkl"
SERVER_FILE = "server.eph"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# -- configuration -----------------------------------------------------------

_CONFIG_FLAGS = ("n", "k", "threshold", "ttl", "nodes", "replication", "replication_interval",
                 "dht_ttl", "join_rate", "leave_rate", "hop_interval", "time_scale", "seed")


def run_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {name: getattr(args, name, None) for name in _CONFIG_FLAGS}
    if getattr(args, "read_once", False):
        overrides["read_once"] = True
    try:
        return cfg.merged(**overrides)
    except InvalidParams as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None


def make_rng(args):
    """Seeded only when --seed is given; otherwise OS randomness."""
    return random.Random(args.seed) if args.seed is not None else secrets.SystemRandom()


class State:
    """DHT and server persisted between invocations in one directory."""

    def __init__(self, directory, cfg: RunConfig, rng):
        self.dir = Path(directory)
        self.cfg = cfg
        self.rng = rng
        dht_path = self.dir / DHT_FILE
        if dht_path.exists():
            try:
                with open(dht_path, "rb") as fh:
                    self.dht: DhtNetwork = pickle.load(fh)
            except (OSError, pickle.UnpicklingError, EOFError) as exc:
                raise CliError(EXIT_IO, f"cannot load DHT state {dht_path}: {exc}") from None
        else:
            self.dht = build_network(cfg)
        server_path = self.dir / SERVER_FILE
        if server_path.exists():
            try:
                self.server = Ephemerizer.restore(server_path, self.dht.clock, rng)
            except (OSError, SnapshotError) as exc:
                raise CliError(EXIT_IO, f"cannot load server snapshot {server_path}: {exc}") from None
        else:
            self.server = Ephemerizer(self.dht.clock, rng)

    def save(self) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        self.server.persist(self.dir / SERVER_FILE)
        tmp = self.dir / (DHT_FILE + ".tmp")
        with open(tmp, "wb") as fh:
            pickle.dump(self.dht, fh)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.dir / DHT_FILE)


def _read_input(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise CliError(EXIT_USAGE, f"input file not found: {path}") from None
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from None


def _write_output(path, data: bytes | str) -> None:
    try:
        if isinstance(data, str):
            Path(path).write_text(data, encoding="utf-8")
        else:
            Path(path).write_bytes(data)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from None


def _sharing_params(cfg: RunConfig, mode: Mode) -> SharingParams:
    n, k = cfg.sharing_for(mode.label)
    try:
        return SharingParams(n, k)
    except InvalidParams as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None


# -- commands ------------------------------------------------------------------

def cmd_encap(args) -> int:
    cfg = run_config(args)
    mode = Mode.parse(args.mode)
    data = _read_input(args.input)
    state = State(args.state, cfg, make_rng(args))
    params = None if mode is Mode.EPHEMERIZER else _sharing_params(cfg, mode)
    expires_at = None if mode is Mode.VANISH else state.dht.now + cfg.ttl
    vdo = protocol.encapsulate(mode, data, server=state.server, dht=state.dht,
                               expires_at=expires_at, params=params, rng=state.rng,
                               read_once=cfg.read_once)
    out = args.output or str(args.input) + vdo_mod.EXTENSION
    _write_output(out, vdo_mod.encode(vdo))
    state.save()
    detail = f"n={vdo.n} k={vdo.k}" if vdo.n else f"id={vdo.id}"
    when = f"expires at t={expires_at:.0f}s" if expires_at is not None else \
        f"shares expire at t={state.dht.now + state.dht.config.entry_ttl:.0f}s"
    print(f"wrote {out} ({mode.label}, {detail}, {when})")
    return EXIT_OK


def _load_vdo(path) -> vdo_mod.Vdo:
    return vdo_mod.decode(_read_input(path))


def cmd_decap(args) -> int:
    cfg = run_config(args)
    vdo = _load_vdo(args.input)
    state = State(args.state, cfg, make_rng(args))
    data = protocol.decapsulate(vdo, server=state.server, dht=state.dht)
    out = args.output
    if out is None:
        name = str(args.input)
        out = name[: -len(vdo_mod.EXTENSION)] if name.endswith(vdo_mod.EXTENSION) else name + ".out"
    _write_output(out, data)
    state.save()  # read-once consumption must stick
    print(f"wrote {out} ({len(data)} bytes)")
    return EXIT_OK


def cmd_refresh(args) -> int:
    cfg = run_config(args)
    vdo = _load_vdo(args.input)
    state = State(args.state, cfg, make_rng(args))
    if vdo.mode is Mode.VANISH:
        new = protocol.refresh_vanish(vdo, state.dht, state.rng)
    elif vdo.mode is Mode.HYBRID:
        new = protocol.refresh_hybrid(vdo, state.server, state.dht)
    else:
        raise CliError(EXIT_USAGE, "ephemerizer VDOs have no DHT shares to refresh")
    _write_output(args.output or args.input, vdo_mod.encode(new))
    state.save()
    print(f"refreshed under new access key {new.l.hex()}")
    return EXIT_OK


def cmd_advance(args) -> int:
    cfg = run_config(args)
    state = State(args.state, cfg, make_rng(args))
    state.dht.run_until(state.dht.now + parse_duration(args.duration))
    erased = state.server.sweep_expired()
    state.save()
    print(f"now t={state.dht.now:.0f}s ({len(erased)} record(s) erased)")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .wire import ServiceHost, WireService

    cfg = run_config(args)
    state = State(args.state, cfg, make_rng(args))
    service = WireService(state.server, state.dht)
    try:
        host = ServiceHost(service, args.host, args.port,
                           snapshot_path=state.dir / SERVER_FILE)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot bind {args.host}:{args.port}: {exc}") from None
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    state.dir.mkdir(parents=True, exist_ok=True)
    host.start()
    print(f"listening on {host.address[0]}:{host.address[1]}", flush=True)
    stop.wait()
    host.shutdown()
    with service.lock:
        state.save()
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = run_config(args)
    scenario = None
    if args.scenario:
        try:
            scenario = parse_scenario(_read_input(args.scenario).decode("utf-8"))
        except (ScenarioError, UnicodeDecodeError) as exc:
            raise CliError(EXIT_IO, f"scenario {args.scenario}: {exc}") from None
    payload = _read_input(args.input) if args.input else \
        random.Random(cfg.seed).randbytes(parse_size(args.payload_size))
    report = run_simulation(
        Mode.parse(args.mode), cfg, payload=payload, scenario=scenario,
        refresh_at=[parse_duration(t) for t in args.refresh_at],
        check_at=[parse_duration(t) for t in args.check_at] or None)
    print(report.to_text())
    if args.json:
        _write_output(args.json, report.to_json())
    return EXIT_OK


def _size_filter(text: str) -> int | None:
    low = text.lower()
    if low == "off":
        return None
    if low == "on":
        return AttackConfig.size_filter
    return int(text)


def cmd_attack(args) -> int:
    cfg = run_config(args)
    net = build_network(cfg)
    rng = random.Random(cfg.seed)
    server = Ephemerizer(net.clock, rng)
    payload = rng.randbytes(parse_size(args.payload_size))
    # unrelated DHT traffic of other sizes, which the size filter should skip
    for _ in range(args.background):
        net.store(rng.getrandbits(160), rng.randbytes(rng.randrange(20, 257)))
    targets = []
    for name in args.targets.split(","):
        mode = Mode.parse(name.strip())
        if mode is Mode.EPHEMERIZER:
            raise CliError(EXIT_USAGE, "ephemerizer VDOs leave nothing in the DHT to attack")
        params = _sharing_params(cfg, mode)
        expires_at = net.now + cfg.ttl if mode is Mode.HYBRID else None
        vdo = protocol.encapsulate(mode, payload, server=server, dht=net, expires_at=expires_at,
                                   params=params, rng=rng)
        targets.append(Target(vdo, payload, mode.label))
    attack = AttackConfig(identity_count=args.identities, hop_interval=cfg.hop_interval,
                          duration=parse_duration(args.duration),
                          size_filter=_size_filter(args.size_filter), seed=cfg.seed)
    report = run_attack(net, attack, targets, server=server)
    sys.stdout.write(report.to_csv())
    print(f"coverage={report.coverage:.3f} raw_values={report.raw_values} "
          f"filtered_out={report.filtered_out}")
    if args.json:
        _write_output(args.json, report.to_json())
    if args.csv:
        _write_output(args.csv, report.to_csv())
    return EXIT_OK


def cmd_bench(args) -> int:
    seed = args.seed if args.seed is not None else 0
    try:
        grid = [int(x) for x in args.grid.split(",")]
    except ValueError:
        raise CliError(EXIT_USAGE, f"bad grid {args.grid!r}") from None
    rows = bench.run_bench(grid, payload_size=parse_size(args.payload_size),
                           percent=args.threshold if args.threshold is not None else 100.0,
                           repeats=args.repeats, nodes=args.nodes or 200, seed=seed)
    text = bench.to_csv(rows)
    if args.out:
        _write_output(args.out, text)
    else:
        sys.stdout.write(text)
    summary = bench.fit_summary(rows)
    print(" ".join(f"{k}={v:.4f}" for k, v in summary.items()), file=sys.stderr)
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--config", help="key = value config file")
    g.add_argument("--state", default=".ephemera", help="state directory (default .ephemera)")
    g.add_argument("--seed", type=int, help="seed every RNG (insecure; for reproducible runs)")
    g.add_argument("--nodes", type=int, help="DHT size (default 200)")
    g.add_argument("--replication", type=int, help="replicas per key (default 20)")
    g.add_argument("--replication-interval", type=parse_duration, help="default 30m")
    g.add_argument("--dht-ttl", type=parse_duration, help="DHT entry timeout (default 8h)")
    g.add_argument("--join-rate", type=float, help="churn joins per virtual second")
    g.add_argument("--leave-rate", type=float, help="churn leaves per virtual second")
    g.add_argument("--time-scale", type=float, help="wall seconds per virtual second (default 0)")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _sharing(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", "-n", type=int, help="number of shares")
    p.add_argument("--k", "-k", type=int, help="threshold (overrides --threshold)")
    p.add_argument("--threshold", type=float, help="threshold percent of n (default 90)")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="ephemera", description="Self-destructing data toolkit.",
                                     epilog="exit codes: 0 ok, 2 usage, 3 refused/expired, "
                                            "4 insufficient shares, 5 I/O or malformed input")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encap", parents=[common], help="encrypt a file into a VDO")
    p.add_argument("--mode", default="hybrid", choices=["hybrid", "vanish", "ephemerizer"])
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output")
    p.add_argument("--ttl", type=parse_duration, help="lifetime T (default 2h)")
    p.add_argument("--read-once", action="store_true")
    _sharing(p)
    p.set_defaults(func=cmd_encap)

    p = sub.add_parser("decap", parents=[common], help="recover a file from a VDO")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output")
    p.set_defaults(func=cmd_decap)

    p = sub.add_parser("refresh", parents=[common], help="re-deal a VDO's shares under a new L")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output")
    p.set_defaults(func=cmd_refresh)

    p = sub.add_parser("advance", parents=[common], help="move virtual time forward")
    p.add_argument("duration", help="e.g. 30m, 2h, 7h30m")
    p.set_defaults(func=cmd_advance)

    p = sub.add_parser("serve", parents=[common], help="run the key server over TCP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7420)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", parents=[common], help="run an encap/churn/decap timeline")
    p.add_argument("--mode", default="hybrid", choices=["hybrid", "vanish", "ephemerizer"])
    p.add_argument("--ttl", type=parse_duration)
    p.add_argument("--scenario", help="SEED/AT ... JOIN|LEAVE script")
    p.add_argument("--in", dest="input", help="payload file (default: random bytes)")
    p.add_argument("--payload-size", default="1KiB")
    p.add_argument("--refresh-at", action="append", default=[], metavar="T")
    p.add_argument("--check-at", action="append", default=[], metavar="T")
    p.add_argument("--read-once", action="store_true")
    p.add_argument("--json", help="also write the report as JSON")
    _sharing(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("attack", parents=[common], help="Sybil crawl against fresh targets")
    p.add_argument("--targets", default="vanish,hybrid")
    p.add_argument("--identities", type=int, default=10)
    p.add_argument("--duration", default="8h")
    p.add_argument("--hop-interval", type=parse_duration, help="default 3m")
    p.add_argument("--size-filter", default="on", help="on, off, or a byte width")
    p.add_argument("--ttl", type=parse_duration, help="hybrid target lifetime (default 2h)")
    p.add_argument("--payload-size", default="1KiB")
    p.add_argument("--background", type=int, default=100,
                   help="unrelated non-share values stored alongside the targets")
    p.add_argument("--json")
    p.add_argument("--csv")
    _sharing(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("bench", parents=[common], help="time encap/decap over a grid of n")
    p.add_argument("--grid", default=",".join(map(str, bench.DEFAULT_GRID)))
    p.add_argument("--payload-size", default="10MB")
    p.add_argument("--threshold", type=float, help="threshold percent (default 100)")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_bench)
    return parser


def _classify(exc: Exception) -> tuple[int, str]:
    if isinstance(exc, CliError):
        return exc.code, str(exc)
    if isinstance(exc, KeyRefused):
        if exc.reason == "consumed":
            return EXIT_REFUSED, "refused: the key was read once already and is gone"
        return EXIT_REFUSED, "refused: the key expired (or never existed) and has been erased"
    if isinstance(exc, UnknownId):
        return EXIT_REFUSED, "refused: the key expired (or never existed) and has been erased"
    if isinstance(exc, InsufficientShares):
        return EXIT_SHARES, f"insufficient shares in the DHT: {exc}"
    if isinstance(exc, (MalformedVdo, MalformedCiphertext, SnapshotError, OSError)):
        return EXIT_IO, f"{type(exc).__name__}: {exc}"
    if isinstance(exc, (InvalidParams, ValueError)):
        return EXIT_USAGE, str(exc)
    return EXIT_IO, f"{type(exc).__name__}: {exc}"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, EphemeraError, OSError, ValueError) as exc:
        code, message = _classify(exc)
        print(f"ephemera: {message}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
