"""Version lookup for loccost."""
import subprocess
from functools import lru_cache
from importlib import metadata
from pathlib import Path

LOCCOST_ROOT = Path(__file__).parent.parent.resolve()


@lru_cache(maxsize=1)
def get_local_version() -> str:
    """Get version from git tags, else installed package metadata.

    Returns a tag (e.g., "v0.2.0"), tag with commits (e.g., "v0.2.0-5-gabcdef"),
    the installed version, or "unknown".
    """
    try:
        result = subprocess.run(
            ["git", "describe", "--tags", "--always"],
            cwd=LOCCOST_ROOT,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if result.returncode == 0 and result.stdout.strip():
            return result.stdout.strip()
    except Exception:
        pass
    try:
        return metadata.version("loccost")
    except metadata.PackageNotFoundError:
        return "unknown"


def get_version_tuple(version_str: str) -> tuple:
    """Parse "v0.2.0", "v0.2.0-5-gabcdef" or "0.2.0" to (0, 2, 0); anything else to (0, 0, 0)."""
    if version_str == "unknown":
        return (0, 0, 0)
    version = version_str.lstrip("v")
    if "-" in version:
        version = version.split("-")[0]
    try:
        return tuple(int(p) for p in version.split(".")[:3])
    except (ValueError, IndexError):
        return (0, 0, 0)
