"""Settings from .env files and the environment."""
import os
from pathlib import Path
from typing import Literal

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field

from .runtime import DEFAULT_BRANCH_LIMIT
from .trials import default_workers

LOCCOST_DIR = Path(__file__).parent.resolve()
DEFAULT_SEED = 20250101

_ENV_KEYS = {
    "seed": "LOCCOST_SEED",
    "workers": "LOCCOST_WORKERS",
    "db": "LOCCOST_DB",
    "branch_limit": "LOCCOST_BRANCH_LIMIT",
    "record": "LOCCOST_RECORD",
    "log_level": "LOCCOST_LOG_LEVEL",
}


class Settings(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = Field(default=DEFAULT_SEED, ge=0)
    workers: int = Field(default_factory=default_workers, ge=1)
    db: Path | None = None
    branch_limit: int = Field(default=DEFAULT_BRANCH_LIMIT, ge=1)
    record: bool = True
    log_level: str = "WARNING"


def load_settings() -> Settings:
    """Read the package .env, then ./.env, then the environment (which wins)."""
    load_dotenv(LOCCOST_DIR / ".env")
    load_dotenv(Path.cwd() / ".env")
    values = {field: os.environ[key] for field, key in _ENV_KEYS.items() if os.environ.get(key)}
    if "record" in values:
        values["record"] = values["record"].strip().lower() not in ("0", "false", "off", "no")
    return Settings(**values)


def load_config() -> dict[str, str]:
    """Load existing config from the package .env file."""
    env_file = LOCCOST_DIR / ".env"
    config = {}
    if env_file.exists():
        for line in env_file.read_text().splitlines():
            if "=" in line and not line.startswith("#"):
                key, val = line.split("=", 1)
                config[key.strip()] = val.strip()
    return config


def save_config(config: dict[str, str]) -> None:
    env_file = LOCCOST_DIR / ".env"
    lines = [f"{k}={v}" for k, v in config.items()]
    env_file.write_text("\n".join(lines) + "\n")


def config_key(name: str) -> str:
    """Accept either `seed` or `LOCCOST_SEED`."""
    upper = name.upper()
    if upper in _ENV_KEYS.values():
        return upper
    if name.lower() in _ENV_KEYS:
        return _ENV_KEYS[name.lower()]
    raise KeyError(name)


class RunConfig(BaseModel):
    """Everything needed to reproduce one command's output."""

    model_config = ConfigDict(frozen=True)

    command: Literal["protocol", "cost", "markov", "nshot", "typicality", "fullmn"]
    version: str
    seed: int
    format: Literal["csv", "json"] = "csv"
    output: str | None = None
    theta: float | None = None
    alpha: float | None = None
    delta: float | None = None
    n: list[int] | None = None
    trials: int | None = None
    workers: int | None = None
    options: dict[str, str | float | int | bool | None] = Field(default_factory=dict)

    def echo(self) -> dict:
        """Flat key/value view for CSV headers; workers is left out so output does not depend on it."""
        data = self.model_dump(exclude={"options", "workers", "output"})
        data.update(self.options)
        return {k: v for k, v in data.items() if v is not None}
