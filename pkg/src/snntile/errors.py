"""Exception hierarchy shared by every stage of the toolchain."""


class SNNError(Exception):
    """Base class for all snntile errors."""


class ContractError(SNNError, ValueError):
    """Arguments violate a size or shape precondition."""


class InputError(SNNError, ValueError):
    """A value is out of the accepted domain (non-finite, over a cap, ...)."""


class CompileError(SNNError):
    """The network cannot be mapped onto the tile format."""


class ParseError(SNNError):
    """A memory image, IDX file or JSON document is malformed."""

    def __init__(self, message, *, path=None, line=None, offset=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")
        self.path = path
        self.line = line
        self.offset = offset


class TrainingError(SNNError):
    """Loss became non-finite or training otherwise diverged."""


class SimulationFault(SNNError):
    """The cycle model hit a hardware fault (FIFO overflow, cap exceeded)."""


class StageError(SNNError):
    """Wraps an error raised inside a pipeline stage, tagging the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
