"""Shipped data files: example lattice geometry and scenario configs."""

from importlib import resources
from pathlib import Path

_SCENARIOS = {"natural": "scenario_natural.toml", "purified": "scenario_purified.toml"}


def geometry_path() -> Path:
    """Path of the shipped EuCl3.6H2O lattice geometry file."""
    return Path(str(resources.files(__name__).joinpath("geometry_eucl3.toml")))


def scenario_path(name: str) -> Path:
    """Path of a shipped scenario ('natural' or 'purified')."""
    try:
        filename = _SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown shipped scenario {name!r}; have {sorted(_SCENARIOS)}") from None
    return Path(str(resources.files(__name__).joinpath(filename)))


def scenario_names() -> tuple[str, ...]:
    return tuple(sorted(_SCENARIOS))
