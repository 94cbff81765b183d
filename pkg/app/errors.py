from __future__ import annotations


class LabError(Exception):
    """Base for every error raised by the laboratory."""

    exit_code = 1


class ConfigError(LabError, ValueError):
    exit_code = 2


class ParameterDomainError(ConfigError):
    """Distribution or model parameter outside its domain."""


class DataError(LabError, ValueError):
    exit_code = 3


class NumericError(LabError, RuntimeError):
    exit_code = 4


class RankDeficiencyError(NumericError):
    def __init__(self, rank: int, columns: int):
        self.rank = rank
        self.columns = columns
        super().__init__(
            f"Matriz de desenho com posto deficiente: posto {rank} para {columns} coluna(s) "
            f"({columns - rank} coluna(s) linearmente dependente(s))."
        )


class IrlsError(NumericError):
    """IRLS failure carrying the per-iteration trace."""

    def __init__(self, message: str, trace: list[dict[str, float]]):
        self.trace = list(trace)
        super().__init__(message)


class SeparationError(IrlsError):
    pass


class ConvergenceError(IrlsError):
    pass
