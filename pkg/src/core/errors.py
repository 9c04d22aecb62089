class ForensicsError(Exception):
    """Base class for every failure the pipeline raises on purpose."""
    exit_code = 1


class InputDataError(ForensicsError):
    """Bad, missing or empty inputs (files, windows, graphs, configs)."""
    exit_code = 2


class InvariantViolation(ForensicsError):
    """An internal consistency check failed; results must not be trusted."""
    exit_code = 3
