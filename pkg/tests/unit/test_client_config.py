"""Tests for client configuration resolution."""

from pathlib import Path

import pytest

from src.client.config import (
    CONFIG_ENV_VAR,
    RELAY_ENV_VAR,
    ClientConfig,
    ConfigError,
    load_client_config,
    read_config_file,
)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text(
        'relay = "file.example.org:4455"\n'
        'output_dir = "/srv/inbox"\n'
        "rendezvous_timeout = 12\n"
    )
    return path


class TestClientConfig:
    """Test ClientConfig validation."""

    def test_defaults(self):
        config = ClientConfig(relay_addr="relay.example.org:4455")
        assert config.output_dir == Path(".")
        assert config.rendezvous_timeout == 30.0
        assert config.direct_timeout == 3.0
        assert config.allow_direct
        assert config.relay_endpoint == ("relay.example.org", 4455)

    def test_output_dir_coerced(self):
        config = ClientConfig(relay_addr="r:1", output_dir="inbox")
        assert config.output_dir == Path("inbox")

    @pytest.mark.parametrize(
        "kwargs,match",
        [
            ({"relay_addr": "no-port"}, "relay_addr"),
            ({"relay_addr": "r:1", "rendezvous_timeout": 0}, "rendezvous_timeout"),
            ({"relay_addr": "r:1", "direct_timeout": -1}, "direct_timeout"),
        ],
    )
    def test_invalid(self, kwargs, match):
        with pytest.raises(ValueError, match=match):
            ClientConfig(**kwargs)


class TestLoadClientConfig:
    """Test flag > environment > file precedence."""

    def test_flag_wins(self, config_file):
        config = load_client_config(
            relay="flag.example.org:1",
            environ={RELAY_ENV_VAR: "env.example.org:2"},
            config_path=config_file,
        )
        assert config.relay_addr == "flag.example.org:1"

    def test_environment_beats_file(self, config_file):
        config = load_client_config(
            environ={RELAY_ENV_VAR: "env.example.org:2"}, config_path=config_file
        )
        assert config.relay_addr == "env.example.org:2"

    def test_file_used_last(self, config_file):
        config = load_client_config(environ={}, config_path=config_file)
        assert config.relay_addr == "file.example.org:4455"
        assert config.output_dir == Path("/srv/inbox")
        assert config.rendezvous_timeout == 12.0

    def test_output_flag_beats_file(self, config_file, tmp_path):
        config = load_client_config(
            output_dir=tmp_path, environ={}, config_path=config_file
        )
        assert config.output_dir == tmp_path

    def test_config_path_from_environment(self, config_file):
        config = load_client_config(environ={CONFIG_ENV_VAR: str(config_file)})
        assert config.relay_addr == "file.example.org:4455"

    def test_missing_relay(self, tmp_path):
        """Test that no relay anywhere is a configuration error naming all three sources."""
        with pytest.raises(ConfigError, match=RELAY_ENV_VAR):
            load_client_config(environ={}, config_path=tmp_path / "absent.toml")

    def test_invalid_relay_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError, match="relay_addr"):
            load_client_config(relay="nonsense", environ={}, config_path=tmp_path / "x.toml")


class TestReadConfigFile:
    """Test TOML loading."""

    def test_missing_file_is_empty(self, tmp_path):
        assert read_config_file(tmp_path / "nope.toml") == {}

    def test_broken_file(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("relay = ")
        with pytest.raises(ConfigError, match="Cannot read config file"):
            read_config_file(path)
