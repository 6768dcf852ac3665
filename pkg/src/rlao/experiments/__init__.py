"""Config-driven verification suites and the ``rlao`` command line."""

from .config import load_config, load_template, validate_config
from .fixtures import counterexample_fixture
from .report import SuiteReport
from .suites import run_suite

__all__ = ["counterexample_fixture", "load_config", "load_template", "run_suite", "SuiteReport", "validate_config"]
