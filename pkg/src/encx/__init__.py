"""Uncorrelated airspace encounter models: load, sample, fly and compare."""

from importlib import resources

__version__ = "0.1.0"


def bundled_model_path(name: str = "toy.json"):
    """Filesystem path of a model file shipped with the package."""
    return resources.files("encx") / "data" / name
