"""Configuration, run persistence and the experiment drivers behind the CLI."""
from .config import RunConfig, load_config
from .runners import RUNNERS, RunResult, run

__all__ = ["RunConfig", "load_config", "RUNNERS", "RunResult", "run"]
