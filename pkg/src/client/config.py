"""
Client Configuration

Settings shared by `send` and `receive`. The relay address is resolved from
the command line, then the RELAYWIRE_RELAY environment variable, then the
TOML config file.
"""

import logging
import os
import tomllib
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

from src.errors import RelaywireError
from src.pake.config import INTERACTIVE_CONFIG, PakeConfig
from src.protocol.wire import parse_address

logger = logging.getLogger(__name__)

RELAY_ENV_VAR = "RELAYWIRE_RELAY"
CONFIG_ENV_VAR = "RELAYWIRE_CONFIG"
DEFAULT_CONFIG_PATH = Path("~/.config/relaywire/config.toml")


class ConfigError(RelaywireError, ValueError):
    """Raised when no relay address is configured or the config file is unusable."""

    pass


@dataclass
class ClientConfig:
    """Configuration for one send or receive session.

    Attributes:
        relay_addr: Relay address as host:port
        output_dir: Destination directory for received files
        rendezvous_timeout: Seconds to wait for the peer to join the room
        direct_timeout: Seconds the direct dial and listener are given
        allow_direct: Whether to listen for (receiver) or dial (sender) a direct connection
        direct_listen_host: Interface the receiver's direct listener binds
        json_output: Print a machine-readable report on stdout
        pake: Password-stretching cost settings

    Example:
        >>> config = ClientConfig(relay_addr="relay.example.org:4455", output_dir=Path("inbox"))
    """

    relay_addr: str
    output_dir: Path = Path(".")

    # Timeouts (seconds)
    rendezvous_timeout: float = 30.0
    direct_timeout: float = 3.0

    # Direct path
    allow_direct: bool = True
    direct_listen_host: str = "0.0.0.0"

    json_output: bool = False
    pake: PakeConfig = field(default=INTERACTIVE_CONFIG, repr=False)

    def __post_init__(self) -> None:
        try:
            parse_address(self.relay_addr)
        except ValueError as e:
            raise ValueError(f"relay_addr: {e}") from e
        if self.rendezvous_timeout <= 0:
            raise ValueError("rendezvous_timeout must be positive")
        if self.direct_timeout <= 0:
            raise ValueError("direct_timeout must be positive")
        self.output_dir = Path(self.output_dir)

    @property
    def relay_endpoint(self) -> tuple[str, int]:
        return parse_address(self.relay_addr)


# Alias used by the command-line layer
CliConfig = ClientConfig


def read_config_file(path: Path) -> dict:
    """Parse the TOML config file; a missing file yields an empty mapping.

    Raises:
        ConfigError: If the file exists but is not valid TOML
    """
    path = path.expanduser()
    if not path.is_file():
        return {}
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except (tomllib.TOMLDecodeError, OSError) as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e


def load_client_config(
    relay: str | None = None,
    output_dir: Path | None = None,
    json_output: bool = False,
    environ: Mapping[str, str] | None = None,
    config_path: Path | None = None,
) -> ClientConfig:
    """Build a ClientConfig from flags, environment and config file.

    Args:
        relay: Value of --relay, highest precedence
        output_dir: Value of --out
        json_output: Value of --json
        environ: Environment to consult (defaults to os.environ)
        config_path: Config file override (defaults to $RELAYWIRE_CONFIG or
            ~/.config/relaywire/config.toml)

    Returns:
        Resolved client configuration

    Raises:
        ConfigError: If no relay address is configured anywhere
    """
    environ = os.environ if environ is None else environ
    if config_path is None:
        config_path = Path(environ.get(CONFIG_ENV_VAR) or DEFAULT_CONFIG_PATH)
    file_settings = read_config_file(config_path)

    relay_addr = relay or environ.get(RELAY_ENV_VAR) or file_settings.get("relay")
    if not relay_addr:
        raise ConfigError(
            f"No relay address: pass --relay, set {RELAY_ENV_VAR}, or add 'relay' to {config_path}"
        )

    kwargs = {"relay_addr": str(relay_addr), "json_output": json_output}
    if output_dir is not None:
        kwargs["output_dir"] = output_dir
    elif "output_dir" in file_settings:
        kwargs["output_dir"] = Path(file_settings["output_dir"]).expanduser()
    for key in ("rendezvous_timeout", "direct_timeout"):
        if key in file_settings:
            kwargs[key] = float(file_settings[key])

    try:
        config = ClientConfig(**kwargs)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    logger.debug(f"Using relay {config.relay_addr}")
    return config
