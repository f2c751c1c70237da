"""Exception types shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific one that applies rather than a bare ValueError.
"""


class ConfigError(ValueError):
    """A run configuration is malformed, inconsistent, or out of range."""


class BudgetError(RuntimeError):
    """A run was refused or aborted because it would exceed its step budget."""


class DiagnosticError(RuntimeError):
    """A numerical certificate or convergence check failed.

    Raised when a quantity the caller asked for cannot be reported honestly:
    a mixing bound not met before the horizon, a truncation certificate that
    cannot be satisfied, an equilibration check that fails.
    """
