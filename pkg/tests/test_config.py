import pytest

from ephemera.config import RunConfig, load_config, parse_config_text, parse_duration, parse_size
from ephemera.errors import InvalidParams


@pytest.mark.parametrize("text,seconds", [
    ("90", 90), ("90s", 90), ("15m", 900), ("2h", 7200), ("7h30m", 27000), ("1.5h", 5400),
    ("1d", 86400), (" 8H ", 28800), (42, 42), ("1h 30m", 5400),
])
def test_parse_duration(text, seconds):
    assert parse_duration(text) == seconds


@pytest.mark.parametrize("bad", ["", "h", "5x", "1h5", "-3s", "abc"])
def test_parse_duration_rejects(bad):
    with pytest.raises(ValueError):
        parse_duration(bad)


@pytest.mark.parametrize("text,size", [
    ("0", 0), ("1KiB", 1024), ("10MB", 10_000_000), ("512k", 512_000), ("3", 3), ("2MiB", 2 << 20),
    ("7b", 7),
])
def test_parse_size(text, size):
    assert parse_size(text) == size


def test_defaults_follow_the_mode():
    cfg = RunConfig()
    assert cfg.sharing_for("hybrid") == (50, 45)
    assert cfg.sharing_for("vanish") == (10, 7)
    assert RunConfig(n=200, threshold=100).sharing_for("hybrid") == (200, 200)
    assert RunConfig(n=20, k=5).sharing_for("vanish") == (20, 5)
    assert (cfg.nodes, cfg.dht_ttl, cfg.replication_interval, cfg.hop_interval) == (200, 28800, 1800, 180)


def test_threshold_bounds():
    with pytest.raises(InvalidParams):
        RunConfig(threshold=0)
    with pytest.raises(InvalidParams):
        RunConfig(threshold=100.5)


def test_config_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("# demo\nmode = vanish\nn = 20\nthreshold = 75\nttl = 1h30m\n"
                    "dht-ttl = 4h\nread_once = yes\nseed = 7\n", encoding="utf-8")
    cfg = load_config(path)
    assert (cfg.mode, cfg.n, cfg.threshold, cfg.ttl, cfg.dht_ttl, cfg.read_once, cfg.seed) == \
        ("vanish", 20, 75.0, 5400.0, 14400.0, True, 7)
    assert cfg.sharing_for("vanish") == (20, 15)
    assert cfg.merged(n=None, seed=9).seed == 9


@pytest.mark.parametrize("text", ["whatever", "colour = blue", "n = many", "read_once = maybe"])
def test_config_file_errors(text):
    with pytest.raises(ValueError, match="line 1"):
        parse_config_text(text)
