"""Bundled desk-scale MPS instances for tests and benchmarks."""

from importlib import resources
from pathlib import Path


def corpus_dir() -> Path:
    return Path(resources.files(__package__))


def corpus_paths() -> list[Path]:
    return sorted(corpus_dir().glob("*.mps"))
