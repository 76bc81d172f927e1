"""Canonical maze layouts shipped with the package."""
from importlib import resources

from ..grid import load_maze

FIXTURE_NAMES = ("simple", "complex", "empty")


def fixture_text(name):
    if name not in FIXTURE_NAMES:
        raise KeyError(f"unknown maze fixture {name!r}; have {FIXTURE_NAMES}")
    return resources.files(__package__).joinpath(f"{name}.maze").read_text()


def load_fixture(name):
    return load_maze(fixture_text(name), name=name)
