"""Exception types shared across the package.

Each maps to a process exit code in the CLI: usage errors are handled by
argparse (exit 1), ConfigError exits 2, NumericalError exits 3 and
PropertyViolation exits 4.
"""


class ConfigError(Exception):
    """Invalid or inconsistent configuration (bad key, bad value, bad region)."""


class NumericalError(Exception):
    """Non-finite values or other numerical failure during a run."""


class PropertyViolation(Exception):
    """A verified mathematical property failed on concrete data."""
