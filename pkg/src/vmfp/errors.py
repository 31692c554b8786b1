"""Exception types raised by the solver and its front ends."""


class VMFPError(Exception):
    """Base class for all errors raised by :mod:`vmfp`."""


class NonNeutralCharge(VMFPError):
    pass


class NonZeroMeanB(VMFPError):
    pass


class StepMismatch(VMFPError):
    pass


class CflViolation(VMFPError):
    pass


class NonPositiveElapsed(VMFPError):
    pass


class InsufficientSamples(VMFPError):
    pass


class NoConvergence(VMFPError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class GridMismatch(VMFPError):
    pass


class ParseError(VMFPError):
    def __init__(self, message, line=None, field=None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.field = field


class HypothesisViolation(VMFPError):
    pass


class UnknownScenario(VMFPError):
    pass


class IoFailure(VMFPError):
    pass


class VersionMismatch(VMFPError):
    pass


class CorruptPayload(VMFPError):
    pass
