"""Exception hierarchy; each family maps to one CLI exit code."""


class HfgpiError(Exception):
    exit_code = 2


class InputError(HfgpiError, ValueError):
    """Bad data: malformed files, NaN inputs, zero-norm rows, negative counts."""


class DimensionError(InputError):
    pass


class AlignmentError(InputError):
    pass


class ParseError(InputError):
    pass


class ReconciliationError(InputError):
    pass


class ConfigurationError(HfgpiError, ValueError):
    exit_code = 1


class ContractError(HfgpiError, RuntimeError):
    exit_code = 3


class NumericError(HfgpiError, FloatingPointError):
    """A NaN/Inf appeared during optimisation."""

    exit_code = 3

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class UndefinedMetricError(HfgpiError, ValueError):
    exit_code = 3
