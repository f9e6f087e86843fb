"""Configuration, caching and figure workflows behind the ``pillarsim`` command."""

from .cache import RunCache, content_key
from .config import SCHEMA, ConfigError, RunConfig

__all__ = ["SCHEMA", "ConfigError", "RunCache", "RunConfig", "content_key"]
