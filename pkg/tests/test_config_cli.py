import pytest

from herdtransfer.cli import main
from herdtransfer.config import BUNDLED, ScenarioConfig, load_config, parse_config, parse_overrides
from herdtransfer.errors import ConfigurationError

SMALL = ["--set", "total_iterations=300", "--set", "sample_every=50"]


def test_parse_config_with_comments_and_types():
    values = parse_config("cows = 10  # herd\n\ntransfer = off\nd = 7.5\ncorral = 1 1 4 4\n")
    assert values == {"cows": 10, "transfer": False, "d": 7.5, "corral": (1, 1, 4, 4)}


@pytest.mark.parametrize("text", ["bogus = 1", "cows 10", "cows = many", "transfer = maybe", "corral = 1 2 3"])
def test_parse_config_rejects_bad_lines(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_overrides_and_validation():
    assert parse_overrides(["agents=3", "reward_mode=delta"]) == {"agents": 3, "reward_mode": "delta"}
    with pytest.raises(ConfigurationError):
        parse_overrides(["agents"])
    with pytest.raises(ConfigurationError):
        ScenarioConfig(reward_mode="square")
    with pytest.raises(ConfigurationError):
        ScenarioConfig(d=0.5)


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_load(name):
    config = load_config(name)
    assert ScenarioConfig(**parse_config(config.to_text())) == config


def test_desk_config_values():
    c = load_config("desk")
    assert (c.side, c.cows, c.obstacles, c.agents, c.d, c.a, c.total_iterations) == (30, 16, 20, 2, 6.0, 10.0, 5000)
    assert c.corral_rect == (12, 12, 17, 17)


def test_missing_config_file():
    with pytest.raises(ConfigurationError):
        load_config("/nonexistent/file.cfg")


def test_cli_run_and_replay(tmp_path, capsys):
    trace = tmp_path / "trace.txt"
    assert main(["run", *SMALL, "--out", str(tmp_path), "--trace", str(trace)]) == 0
    assert (tmp_path / "curve.csv").read_text().startswith("# herdtransfer learning curve v1")
    capsys.readouterr()
    assert main(["replay", *SMALL, "--trace", str(trace), "--state-out", str(tmp_path / "state.json")]) == 0
    out = capsys.readouterr().out
    assert "coordinate_messages=2" in out and "closer=" in out


def test_cli_compare_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["compare", *SMALL, "--out", str(d)]) == 0
    for name in ("with_transfer.csv", "without_transfer.csv", "report.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_cli_goalsearch_small(tmp_path):
    assert main(["goalsearch", "--trials", "1", "--episodes", "2", "--fusion", "on", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "goalsearch_fusion.csv").exists()


def test_cli_reports_errors(tmp_path, capsys):
    assert main(["run", "--set", "agents=0", "--out", str(tmp_path)]) == 2
    assert "herdtransfer: error:" in capsys.readouterr().err


def test_cli_validate(capsys):
    assert main(["validate"]) == 0
    assert "FAIL" not in capsys.readouterr().out
