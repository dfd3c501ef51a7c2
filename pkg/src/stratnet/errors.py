"""Exception hierarchy shared by every module."""


class StratNetError(Exception):
    """Base class; CLI maps subclasses of this to exit code 1."""


class SchemaError(StratNetError):
    pass


class ParseError(StratNetError):
    pass


class DanglingReference(StratNetError):
    pass


class TimeViolation(StratNetError):
    pass


class DimensionMismatch(StratNetError):
    pass


class InvalidParameter(StratNetError):
    pass


class EmptyCandidates(StratNetError):
    pass


class InvalidDistribution(StratNetError):
    pass


class MissingUtility(StratNetError):
    pass


class EmptyContentSet(StratNetError):
    pass


class EmptyTable(StratNetError):
    pass


class KeyMismatch(StratNetError):
    pass


class NoPositives(StratNetError):
    pass


class LengthMismatch(StratNetError):
    pass


class ConfigError(StratNetError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class MissingArtifact(StratNetError):
    pass


class NumericalError(Exception):
    """Numerical failure (CLI exit code 2)."""


class NonFiniteLoss(NumericalError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
